#include "csv.hpp"

#include "fewtreat/error.hpp"

namespace fewtreat::csv {

int Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return static_cast<int>(c);
  return -1;
}

namespace {

// Returns false at end of input. Fields of the record go to `fields`.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  if (quoted) throw InputError("CSV: unterminated quoted field near line " + std::to_string(line));
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool blank(const std::vector<std::string>& fields) {
  return fields.size() == 1 && fields[0].find_first_not_of(" \t") == std::string::npos;
}

}  // namespace

Table read(std::istream& in) {
  if (in.peek() == 0xEF) {
    char bom[3];
    in.read(bom, 3);
    if (!(static_cast<unsigned char>(bom[1]) == 0xBB && static_cast<unsigned char>(bom[2]) == 0xBF))
      throw InputError("CSV: invalid byte order mark");
  }
  Table table;
  std::vector<std::string> fields;
  std::size_t line = 1;
  std::size_t start = line;
  while (read_record(in, fields, line)) {
    if (blank(fields)) {
      start = line;
      continue;
    }
    if (table.header.empty()) {
      table.header = fields;
    } else {
      if (fields.size() != table.header.size())
        throw InputError("CSV: line " + std::to_string(start) + " has " +
                         std::to_string(fields.size()) + " fields, header has " +
                         std::to_string(table.header.size()));
      table.rows.push_back(fields);
      table.line_numbers.push_back(start);
    }
    start = line;
  }
  if (table.header.empty()) throw InputError("CSV: missing header row");
  return table;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

}  // namespace fewtreat::csv

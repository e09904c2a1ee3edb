#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fewtreat::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  /// Index of a header column, or -1.
  int column(std::string_view name) const;
};

/// RFC 4180-style reader: comma separated, double-quoted fields may contain
/// commas, quotes ("") and newlines. A leading UTF-8 BOM is skipped. Blank
/// lines are ignored. Throws InputError on ragged rows.
Table read(std::istream& in);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace fewtreat::csv

#include "fewtreat/panel.hpp"

#include "csv.hpp"
#include "fewtreat/error.hpp"
#include "fewtreat/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <unordered_map>

namespace fewtreat {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t");
  return std::string(s.substr(begin, end - begin + 1));
}

std::optional<double> parse_number(std::string_view s) {
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || s.empty()) return std::nullopt;
  return value;
}

bool is_never(const std::string& s) {
  std::string lower;
  for (char ch : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  return lower.empty() || lower == "never";
}

int require_column(const csv::Table& table, const std::string& name, const char* role) {
  const int c = table.column(name);
  if (c < 0) throw InputError(std::string("panel: ") + role + " column '" + name + "' not found");
  return c;
}

struct UnitInfo {
  std::string label;
  std::string treat_label;  // raw treat-time cell, trimmed
  std::size_t first_line = 0;
};

}  // namespace

PanelData read_panel(std::istream& in, const ColumnMap& columns) {
  const csv::Table table = csv::read(in);
  const int unit_col = require_column(table, columns.unit, "unit");
  const int period_col = require_column(table, columns.period, "period");
  const int outcome_col = require_column(table, columns.outcome, "outcome");
  const int treat_col = require_column(table, columns.treat_time, "treat-time");
  const int size_col = columns.size.empty() ? -1 : require_column(table, columns.size, "size");

  if (table.rows.empty()) throw InputError("panel: no data rows");

  // Units and periods in first-appearance order.
  std::vector<UnitInfo> units;
  std::unordered_map<std::string, int> unit_index;
  std::vector<std::string> periods;
  std::unordered_map<std::string, int> period_seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string unit = trim(row[unit_col]);
    const std::string period = trim(row[period_col]);
    const std::string treat = trim(row[treat_col]);
    if (unit.empty()) throw InputError("panel: empty unit on line " + std::to_string(table.line_numbers[r]));
    if (period.empty()) throw InputError("panel: empty period on line " + std::to_string(table.line_numbers[r]));
    auto [it, inserted] = unit_index.emplace(unit, static_cast<int>(units.size()));
    if (inserted) {
      units.push_back({unit, treat, table.line_numbers[r]});
    } else if (units[it->second].treat_label != treat) {
      throw InputError("panel: treatment time of unit '" + unit + "' changes across rows (line " +
                       std::to_string(table.line_numbers[r]) +
                       "); treatment must be absorbing with a single adoption period");
    }
    if (period_seen.emplace(period, static_cast<int>(periods.size())).second) periods.push_back(period);
  }

  // Periods: numeric order when every label is a number, else lexicographic.
  std::vector<std::optional<double>> numeric(periods.size());
  bool all_numeric = true;
  for (std::size_t p = 0; p < periods.size(); ++p) {
    numeric[p] = parse_number(periods[p]);
    all_numeric = all_numeric && numeric[p].has_value();
  }
  std::vector<std::size_t> order(periods.size());
  for (std::size_t p = 0; p < order.size(); ++p) order[p] = p;
  if (all_numeric) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return *numeric[a] < *numeric[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return periods[a] < periods[b]; });
  }
  const int n_periods = static_cast<int>(periods.size());
  std::vector<std::string> period_labels(n_periods);
  std::unordered_map<std::string, int> period_pos;  // label -> 1-based position
  for (int p = 0; p < n_periods; ++p) {
    period_labels[p] = periods[order[p]];
    period_pos[period_labels[p]] = p + 1;
  }
  if (n_periods < 2) throw InputError("panel: at least two periods are required");

  // Treat times -> t*_j = (first treated position) - 1.
  std::vector<int> t_star(units.size(), kNeverTreated);
  for (std::size_t u = 0; u < units.size(); ++u) {
    const std::string& cell = units[u].treat_label;
    if (is_never(cell)) continue;
    int first_treated = 0;
    if (auto it = period_pos.find(cell); it != period_pos.end()) {
      first_treated = it->second;
    } else if (auto value = parse_number(cell); value && all_numeric) {
      if (*value > *numeric[order.back()]) {
        first_treated = n_periods + 1;
      } else if (*value < *numeric[order.front()]) {
        first_treated = 0;
      } else {
        // Match numerically equal labels such as "2" vs "2.0".
        for (int p = 0; p < n_periods; ++p)
          if (*numeric[order[p]] == *value) first_treated = p + 1;
        if (first_treated == 0)
          throw InputError("panel: treatment time '" + cell + "' of unit '" + units[u].label +
                           "' is not a period of the panel");
      }
    } else {
      throw InputError("panel: treatment time '" + cell + "' of unit '" + units[u].label +
                       "' is not a period of the panel");
    }
    const int ts = first_treated - 1;
    if (ts < 1 || ts > n_periods - 1)
      throw InputError("panel: treatment time '" + cell + "' of unit '" + units[u].label +
                       "' is out of range: need at least one pre-treatment and one post-treatment period");
    t_star[u] = ts;
  }

  // Treated first, then never treated, each in first-appearance order.
  std::vector<int> unit_order;
  for (std::size_t u = 0; u < units.size(); ++u)
    if (t_star[u] != kNeverTreated) unit_order.push_back(static_cast<int>(u));
  const int n_treated = static_cast<int>(unit_order.size());
  for (std::size_t u = 0; u < units.size(); ++u)
    if (t_star[u] == kNeverTreated) unit_order.push_back(static_cast<int>(u));
  std::vector<int> new_row(units.size());
  for (std::size_t r = 0; r < unit_order.size(); ++r) new_row[unit_order[r]] = static_cast<int>(r);

  if (n_treated == 0) throw InputError("panel: no treated unit");
  if (n_treated == static_cast<int>(units.size()))
    throw InputError("panel: no never-treated unit; at least two controls are required");

  const int n_units = static_cast<int>(units.size());
  PanelData panel;
  panel.outcomes = Eigen::MatrixXd::Constant(n_units, n_periods, std::nan(""));
  Eigen::MatrixXd sizes;
  if (size_col >= 0) sizes = Eigen::MatrixXd::Constant(n_units, n_periods, std::nan(""));
  std::vector<char> seen(static_cast<std::size_t>(n_units) * n_periods, 0);

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int u = new_row[unit_index.at(trim(row[unit_col]))];
    const int p = period_pos.at(trim(row[period_col])) - 1;
    const std::string line = std::to_string(table.line_numbers[r]);
    char& flag = seen[static_cast<std::size_t>(u) * n_periods + p];
    if (flag)
      throw InputError("panel: duplicate row for unit '" + trim(row[unit_col]) + "', period '" +
                       trim(row[period_col]) + "' (line " + line + ")");
    flag = 1;
    const auto y = parse_number(trim(row[outcome_col]));
    if (!y || !std::isfinite(*y))
      throw InputError("panel: missing or non-numeric outcome on line " + line +
                       "; balanced, fully observed panels are required");
    panel.outcomes(u, p) = *y;
    if (size_col >= 0) {
      const auto z = parse_number(trim(row[size_col]));
      if (!z || !std::isfinite(*z)) throw InputError("panel: non-numeric size on line " + line);
      sizes(u, p) = *z;
    }
  }

  std::vector<std::string> missing;
  std::size_t n_missing = 0;
  for (int u = 0; u < n_units; ++u)
    for (int p = 0; p < n_periods; ++p)
      if (!seen[static_cast<std::size_t>(u) * n_periods + p]) {
        ++n_missing;
        if (missing.size() < 10)
          missing.push_back("(" + units[unit_order[u]].label + ", " + period_labels[p] + ")");
      }
  if (n_missing > 0) {
    std::string msg = "panel: unbalanced, missing (unit, period) rows:";
    for (const auto& m : missing) msg += " " + m;
    if (n_missing > missing.size()) msg += " and " + std::to_string(n_missing - missing.size()) + " more";
    throw InputError(msg);
  }

  panel.treat_time.resize(n_units);
  panel.unit_labels.resize(n_units);
  for (int r = 0; r < n_units; ++r) {
    panel.treat_time[r] = t_star[unit_order[r]];
    panel.unit_labels[r] = units[unit_order[r]].label;
  }
  panel.n_treated = n_treated;
  panel.period_labels = period_labels;

  if (size_col >= 0) {
    bool constant = true;
    for (int u = 0; u < n_units && constant; ++u)
      constant = (sizes.row(u).array() == sizes(u, 0)).all();
    SizeLayout layout = SizeLayout::per_period;
    switch (columns.size_mode) {
      case SizeColumnMode::automatic: layout = constant ? SizeLayout::per_unit : SizeLayout::per_period; break;
      case SizeColumnMode::per_unit:
        if (!constant) throw InputError("panel: size column varies within a unit but per-unit sizes were requested");
        layout = SizeLayout::per_unit;
        break;
      case SizeColumnMode::per_period: layout = SizeLayout::per_period; break;
    }
    panel.size_layout = layout;
    panel.sizes = layout == SizeLayout::per_unit ? Eigen::MatrixXd(sizes.col(0)) : sizes;
  }

  if (auto violations = validate(panel); !violations.empty()) {
    std::string msg = "panel: invalid input:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw InputError(msg);
  }
  return panel;
}

PanelData load_panel(const std::filesystem::path& source, const ColumnMap& columns) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw InputError("cannot open panel file " + source.string());
  return read_panel(in, columns);
}

void write_panel(const PanelData& panel, std::ostream& out) {
  std::vector<std::string> header = {"unit", "period", "outcome", "treat_time"};
  if (panel.has_sizes()) header.push_back("size");
  csv::write_row(out, header);
  for (int u = 0; u < panel.n_units(); ++u) {
    const int ts = panel.treat_time[u];
    const std::string treat = ts == kNeverTreated ? "never"
                              : ts < panel.n_periods() ? panel.period_labels[ts]
                                                       : std::to_string(ts + 1);
    for (int p = 0; p < panel.n_periods(); ++p) {
      std::vector<std::string> row = {panel.unit_labels[u], panel.period_labels[p],
                                      format_double(panel.outcomes(u, p)), treat};
      if (panel.size_layout == SizeLayout::per_unit) row.push_back(format_double(panel.sizes(u, 0)));
      if (panel.size_layout == SizeLayout::per_period) row.push_back(format_double(panel.sizes(u, p)));
      csv::write_row(out, row);
    }
  }
}

void write_panel(const PanelData& panel, const std::filesystem::path& target) {
  std::ofstream out(target, std::ios::binary);
  if (!out) throw InputError("cannot write panel file " + target.string());
  write_panel(panel, out);
}

std::vector<std::string> validate(const PanelData& panel) {
  std::vector<std::string> out;
  const int n = panel.n_units();
  const int t = panel.n_periods();
  if (t < 2) out.push_back("fewer than two periods");
  if (static_cast<int>(panel.treat_time.size()) != n)
    out.push_back("treat_time has " + std::to_string(panel.treat_time.size()) + " entries for " +
                  std::to_string(n) + " units");
  if (panel.n_treated < 1) out.push_back("no treated units");
  if (panel.n_treated > n) out.push_back("n_treated exceeds the number of units");
  const int n0 = n - panel.n_treated;
  if (n0 <= 0)
    out.push_back("no never-treated controls");
  else if (n0 < 2)
    out.push_back("fewer than two never-treated controls");
  if (!panel.outcomes.allFinite()) out.push_back("outcomes are not fully observed (non-finite entries)");

  if (static_cast<int>(panel.treat_time.size()) == n) {
    for (int j = 0; j < n; ++j) {
      const int ts = panel.treat_time[j];
      if (j < panel.n_treated) {
        if (ts == kNeverTreated)
          out.push_back("unit " + std::to_string(j) + " is in the treated block but never treated");
        else if (ts < 1 || ts > t - 1)
          out.push_back("treatment time of unit " + std::to_string(j) + " out of range [1, T-1]");
      } else if (ts != kNeverTreated) {
        out.push_back("treated unit " + std::to_string(j) + " listed after controls");
      }
    }
  }

  if (!panel.unit_labels.empty() && static_cast<int>(panel.unit_labels.size()) != n)
    out.push_back("unit label count does not match units");
  if (!panel.period_labels.empty() && static_cast<int>(panel.period_labels.size()) != t)
    out.push_back("period label count does not match periods");

  switch (panel.size_layout) {
    case SizeLayout::none:
      if (panel.sizes.size() != 0) out.push_back("sizes present but layout is none");
      break;
    case SizeLayout::per_unit:
    case SizeLayout::per_period: {
      const int cols = panel.size_layout == SizeLayout::per_unit ? 1 : t;
      if (panel.sizes.rows() != n || panel.sizes.cols() != cols) {
        out.push_back("size matrix has wrong shape");
      } else if (!(panel.sizes.array() > 0.0).all() || !panel.sizes.allFinite()) {
        out.push_back("nonpositive size");
      }
      break;
    }
  }
  return out;
}

}  // namespace fewtreat

#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace fewtreat {

/// Treat-time sentinel for never-treated units.
inline constexpr int kNeverTreated = -1;

enum class SizeLayout {
  none,        ///< no size covariate
  per_unit,    ///< Z_j: one size per unit (aggregated panel)
  per_period,  ///< Z_{j,t}: one size per unit and period (repeated cross-sections)
};

/// Balanced outcome panel with staggered, absorbing treatment.
///
/// Units are ordered treated-first: rows [0, n_treated) are treated, the rest
/// never treated. Periods are the consecutive columns 1..T. treat_time holds
/// t*_j, the last untreated period (1-based), or kNeverTreated.
struct PanelData {
  Eigen::MatrixXd outcomes;  ///< N x T
  std::vector<int> treat_time;
  int n_treated = 0;
  SizeLayout size_layout = SizeLayout::none;
  Eigen::MatrixXd sizes;  ///< N x 1 (per_unit), N x T (per_period), empty otherwise
  std::vector<std::string> unit_labels;
  std::vector<std::string> period_labels;

  int n_units() const { return static_cast<int>(outcomes.rows()); }
  int n_periods() const { return static_cast<int>(outcomes.cols()); }
  int n_control() const { return n_units() - n_treated; }
  bool has_sizes() const { return size_layout != SizeLayout::none; }

  /// Outcome path of control c (0-based within controls).
  auto control_row(int c) const { return outcomes.row(n_treated + c); }
};

enum class SizeColumnMode {
  automatic,   ///< per_unit when constant within every unit, else per_period
  per_unit,
  per_period,
};

/// Column names in the input CSV. An empty `size` means no size column.
struct ColumnMap {
  std::string unit = "unit";
  std::string period = "period";
  std::string outcome = "outcome";
  std::string treat_time = "treat_time";
  std::string size;
  SizeColumnMode size_mode = SizeColumnMode::automatic;
};

/// Reads a long-format panel: one row per (unit, period). The treat-time
/// column holds the first treated period label; empty or "never" marks a
/// control. Throws InputError on unbalanced, non-absorbing or out-of-range input.
PanelData load_panel(const std::filesystem::path& source, const ColumnMap& columns = {});
PanelData read_panel(std::istream& in, const ColumnMap& columns = {});

/// Writes the panel in the format load_panel reads (default column names).
void write_panel(const PanelData& panel, std::ostream& out);
void write_panel(const PanelData& panel, const std::filesystem::path& target);

/// Every violated PanelData invariant, as a human-readable message.
std::vector<std::string> validate(const PanelData& panel);

}  // namespace fewtreat

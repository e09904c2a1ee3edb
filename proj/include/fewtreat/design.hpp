#pragma once

#include "fewtreat/panel.hpp"

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

namespace fewtreat {

enum class SchemeKind { att, event_study, pretrends, generic };

/// How each treated unit's outcome path maps into the K-dimensional target.
///
/// For treated unit j, `extract[j]` (K_j x T) turns an outcome path into
/// building-block DID contrasts and `aggregate[j]` (K x K_j) weights those
/// into the target. Their product is the unit's K x T contribution matrix;
/// every row of it sums to zero so unit fixed effects cancel.
struct AggregationScheme {
  SchemeKind kind = SchemeKind::generic;
  int k_target = 0;
  int n_periods = 0;
  std::vector<int> treat_time;  ///< t*_j the scheme was built for
  std::vector<Eigen::MatrixXd> extract;
  std::vector<Eigen::MatrixXd> aggregate;
  /// Per treated unit: coordinates whose contribution row is identically zero.
  std::vector<std::vector<int>> degenerate;
  /// Coordinates degenerate for every treated unit.
  std::vector<int> degenerate_global;
  std::vector<std::string> labels;

  int n_treated() const { return static_cast<int>(extract.size()); }
  Eigen::MatrixXd contribution(int j) const { return aggregate[j] * extract[j]; }
  /// Nondegenerate coordinates of unit j, ascending.
  std::vector<int> active(int j) const;
  bool is_degenerate(int coordinate) const;
};

AggregationScheme build_scheme_att(const PanelData& panel);
AggregationScheme build_scheme_event_study(const PanelData& panel);
AggregationScheme build_scheme_pretrends(const PanelData& panel);

/// Pre-period weighting of one building block.
enum class PreWeighting { uniform, last };

/// One building block of a treated unit: the contrast of period `period`
/// (1-based, post-treatment) against a weighted pre-period average, and the
/// block's weight in each target coordinate.
struct BlockWeights {
  int period = 0;
  std::variant<PreWeighting, std::vector<double>> pre_weights = PreWeighting::uniform;
  std::vector<double> target_weights;  ///< length K
};

struct GenericWeights {
  int k_target = 1;
  std::vector<std::string> labels;                 ///< optional, length K
  std::vector<std::vector<BlockWeights>> units;    ///< one entry per treated unit
};

/// Scheme from arbitrary pre-period weights and aggregation weights.
/// Throws InputError when pre weights do not sum to one or a block targets a
/// pre-treatment period.
AggregationScheme build_scheme_generic(const PanelData& panel, const GenericWeights& weights);

/// Rows whose largest absolute entry is at most `tolerance`.
std::vector<int> zero_rows(const Eigen::MatrixXd& m, double tolerance = 1e-12);

/// Recomputes per-unit and global degenerate sets from the blocks.
void refresh_degenerate(AggregationScheme& scheme, double tolerance = 1e-12);

/// Dimension, row-sum-zero and degenerate-set violations; empty when valid.
std::vector<std::string> verify_scheme(const AggregationScheme& scheme);

/// Throws InputError unless the scheme was built for this panel's T and t*.
void check_compatible(const PanelData& panel, const AggregationScheme& scheme);

const char* to_string(SchemeKind kind);
SchemeKind scheme_kind_from_string(const std::string& name);

}  // namespace fewtreat

#pragma once

#include "fewtreat/design.hpp"
#include "fewtreat/estimator.hpp"
#include "fewtreat/panel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fewtreat {

enum class HeteroKind {
  identity,     ///< H = I: iid residuals
  panel_agg,    ///< H^2 = base + size_loading / Z, panel of group aggregates
  repeated_cs,  ///< per-period sizes from repeated cross-sections
};

struct HeteroSpec {
  HeteroKind kind = HeteroKind::identity;
  /// Floor on the smallest eigenvalue of every fitted control scale matrix.
  /// Unset: 1e-6 times the median singular value of the square root of the
  /// pooled residual covariance.
  std::optional<double> sv_floor;
};

/// Fitted scale model of one treated unit, on its nondegenerate coordinates.
///
/// panel_agg:   H^2(z) = base + size_loading / z
/// repeated_cs: H^2(z) = base + sum_r period_loading[r] / z[pattern_period[r]] * pattern[r]
struct UnitScaleModel {
  std::vector<int> active;  ///< nondegenerate coordinates, size m
  Eigen::MatrixXd base;     ///< m x m PSD
  Eigen::MatrixXd size_loading;
  Eigen::VectorXd period_loading;
  std::vector<Eigen::MatrixXd> pattern;
  std::vector<int> pattern_period;  ///< 0-based period column of each loading
  double ridge = 0.0;               ///< added to base to respect the floor
  double sv_floor = 0.0;
  double objective = 0.0;  ///< sum of squared Frobenius residuals of the fit
  int iterations = 0;

  int dim() const { return static_cast<int>(active.size()); }
};

struct FittedHetero {
  HeteroKind kind = HeteroKind::identity;
  int k_target = 0;
  std::vector<UnitScaleModel> units;
};

/// Least-squares fit of each treated unit's scale model to the outer products
/// of its control residuals, projected to PSD and ridged up to the floor.
FittedHetero fit(const HeteroSpec& spec, const ControlResiduals& residuals, const PanelData& panel,
                 const AggregationScheme& scheme);

/// H_j^2 at size(s) z, m x m. z holds one value (panel_agg) or one per period
/// (repeated_cs); it is ignored for identity.
Eigen::MatrixXd scale_variance(const FittedHetero& fitted, int j, std::span<const double> z);

/// Symmetric PSD square root of scale_variance. Throws InputError on z <= 0.
Eigen::MatrixXd scale_matrix(const FittedHetero& fitted, int j, std::span<const double> z);
Eigen::MatrixXd scale_matrix(const FittedHetero& fitted, int j, double z);

/// The sizes of panel unit `unit` in the layout `fitted` expects.
std::vector<double> unit_sizes(const FittedHetero& fitted, const PanelData& panel, int unit);

/// Residuals premultiplied by the inverse control scale, per treated unit,
/// N0 x m_j (degenerate coordinates dropped).
struct NormalizedResiduals {
  std::vector<Eigen::MatrixXd> by_treated;
  int k_target = 0;
  std::vector<std::vector<int>> active;
  std::vector<int> degenerate_global;
  std::string scheme_fingerprint;

  int n_treated() const { return static_cast<int>(by_treated.size()); }
  int n_control() const { return by_treated.empty() ? 0 : static_cast<int>(by_treated.front().rows()); }
};

/// Throws InvariantError when a control scale matrix is singular.
NormalizedResiduals normalize(const ControlResiduals& residuals, const FittedHetero& fitted,
                              const PanelData& panel);

const char* to_string(HeteroKind kind);
HeteroKind hetero_kind_from_string(const std::string& name);

}  // namespace fewtreat

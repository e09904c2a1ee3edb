#pragma once

#include "fewtreat/design.hpp"
#include "fewtreat/panel.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fewtreat {

/// Point estimate of the K-dimensional target.
struct EstimateVector {
  Eigen::VectorXd values;
  std::vector<std::string> labels;
  std::string scheme_fingerprint;
};

/// Control residuals, one N0 x K matrix per treated unit. Row i holds the
/// contribution of control i under unit j's weights, centered at the control
/// mean, so each matrix's columns sum to zero.
struct ControlResiduals {
  std::vector<Eigen::MatrixXd> by_treated;
  int k_target = 0;
  std::vector<std::vector<int>> degenerate;  ///< per treated unit
  std::vector<int> degenerate_global;
  std::string scheme_fingerprint;

  int n_treated() const { return static_cast<int>(by_treated.size()); }
  int n_control() const { return by_treated.empty() ? 0 : static_cast<int>(by_treated.front().rows()); }
};

/// Sum over treated j of contribution_j * (Y_j - mean of control paths).
EstimateVector point_estimate(const PanelData& panel, const AggregationScheme& scheme);

ControlResiduals control_residuals(const PanelData& panel, const AggregationScheme& scheme);

}  // namespace fewtreat

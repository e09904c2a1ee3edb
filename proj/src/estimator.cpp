#include "fewtreat/estimator.hpp"

#include "fewtreat/io.hpp"

namespace fewtreat {

namespace {

Eigen::RowVectorXd control_mean(const PanelData& panel) {
  return panel.outcomes.bottomRows(panel.n_control()).colwise().mean();
}

}  // namespace

EstimateVector point_estimate(const PanelData& panel, const AggregationScheme& scheme) {
  check_compatible(panel, scheme);
  const Eigen::RowVectorXd mean0 = control_mean(panel);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(scheme.k_target);
  for (int j = 0; j < panel.n_treated; ++j) {
    const Eigen::VectorXd gap = (panel.outcomes.row(j) - mean0).transpose();
    Eigen::VectorXd part = scheme.contribution(j) * gap;
    for (int s : scheme.degenerate[j]) part(s) = 0.0;
    total += part;
  }
  for (int s : scheme.degenerate_global) total(s) = 0.0;
  return {total, scheme.labels, fingerprint(scheme)};
}

ControlResiduals control_residuals(const PanelData& panel, const AggregationScheme& scheme) {
  check_compatible(panel, scheme);
  const int n0 = panel.n_control();
  const Eigen::MatrixXd controls = panel.outcomes.bottomRows(n0);
  const Eigen::MatrixXd centered = controls.rowwise() - controls.colwise().mean();

  ControlResiduals out;
  out.k_target = scheme.k_target;
  out.degenerate = scheme.degenerate;
  out.degenerate_global = scheme.degenerate_global;
  out.scheme_fingerprint = fingerprint(scheme);
  out.by_treated.reserve(panel.n_treated);
  for (int j = 0; j < panel.n_treated; ++j) {
    Eigen::MatrixXd w = centered * scheme.contribution(j).transpose();
    for (int s : scheme.degenerate[j]) w.col(s).setZero();
    out.by_treated.push_back(std::move(w));
  }
  return out;
}

}  // namespace fewtreat

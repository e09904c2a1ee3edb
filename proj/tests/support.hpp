#pragma once

#include "fewtreat/panel.hpp"

#include <Eigen/Dense>

#include <sstream>
#include <string>
#include <vector>

namespace fewtreat::test {

/// Panel from a dense outcome matrix whose first n1 rows are treated with the
/// given t* (1-based last untreated period).
inline PanelData make_panel(const Eigen::MatrixXd& y, const std::vector<int>& t_star,
                            const Eigen::VectorXd& sizes = {}) {
  PanelData p;
  p.outcomes = y;
  p.n_treated = static_cast<int>(t_star.size());
  p.treat_time.assign(static_cast<std::size_t>(y.rows()), kNeverTreated);
  for (std::size_t j = 0; j < t_star.size(); ++j) p.treat_time[j] = t_star[j];
  for (Eigen::Index i = 0; i < y.rows(); ++i) p.unit_labels.push_back("u" + std::to_string(i));
  for (Eigen::Index t = 0; t < y.cols(); ++t) p.period_labels.push_back(std::to_string(t + 1));
  if (sizes.size() > 0) {
    p.size_layout = SizeLayout::per_unit;
    p.sizes = sizes;
  }
  return p;
}

inline PanelData parse(const std::string& csv, const ColumnMap& columns = {}) {
  std::istringstream in(csv);
  return read_panel(in, columns);
}

/// Deterministic pseudo-random matrix with entries in [-scale, scale].
inline Eigen::MatrixXd noise(Eigen::Index rows, Eigen::Index cols, unsigned seed, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  std::uint64_t s = 0x9E3779B97F4A7C15ULL * (seed + 1);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      s ^= s << 13;
      s ^= s >> 7;
      s ^= s << 17;
      m(i, j) = scale * (static_cast<double>(s >> 11) * 0x1.0p-53 * 2.0 - 1.0);
    }
  return m;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace fewtreat::test

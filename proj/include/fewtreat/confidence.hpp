#pragma once

#include "fewtreat/estimator.hpp"
#include "fewtreat/resample.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace fewtreat {

enum class Normalizer {
  constant,     ///< scale 1 on every coordinate: constant-width band
  studentized,  ///< scale = standard deviation of the coordinate across draws
};

/// Per-coordinate intervals estimate_s +/- scale_s * critical_value sharing a
/// single critical value. Degenerate coordinates have scale 0.
struct ConfidenceBand {
  double level = 0.95;
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd scale;
  double critical_value = 0.0;
  Normalizer normalizer = Normalizer::constant;
  std::vector<std::string> labels;

  int dim() const { return static_cast<int>(estimate.size()); }
  /// Containment up to a rounding slack of 1e-9 relative to the magnitudes
  /// involved, so a zero-width band at a value computed in floating point
  /// still covers that value.
  bool covers(int coordinate, double value) const {
    const double slack =
        1e-9 * std::max({1.0, std::abs(value), std::abs(lower(coordinate)), std::abs(upper(coordinate))});
    return lower(coordinate) - slack <= value && value <= upper(coordinate) + slack;
  }
  bool covers(const Eigen::VectorXd& values) const;
};

/// 1-based rank ceil((1 - alpha) * B) of the order statistic used as the
/// critical value. Throws InputError unless 0 < alpha < 1 and B >= ceil(1/alpha).
std::size_t critical_rank(double alpha, std::size_t draws);

/// Interval estimate +/- q with q the critical order statistic of |e_b|. K = 1.
ConfidenceBand ci_scalar(const EstimateVector& estimate, const ResampleDraws& draws, double alpha);

/// Sup-t band: q is the critical order statistic of max_s |e_{b,s}| / scale_s
/// over nondegenerate coordinates.
ConfidenceBand uniform_band(const EstimateVector& estimate, const ResampleDraws& draws, double alpha,
                            Normalizer normalizer);

const char* to_string(Normalizer normalizer);
Normalizer normalizer_from_string(const std::string& name);

}  // namespace fewtreat

#include "fewtreat/confidence.hpp"

#include "fewtreat/error.hpp"

#include <algorithm>
#include <cmath>

namespace fewtreat {

bool ConfidenceBand::covers(const Eigen::VectorXd& values) const {
  for (int s = 0; s < dim(); ++s)
    if (!covers(s, values(s))) return false;
  return true;
}

std::size_t critical_rank(double alpha, std::size_t draws) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
  const auto needed = static_cast<std::size_t>(std::ceil(1.0 / alpha - 1e-9));
  if (draws < needed)
    throw InputError("need at least " + std::to_string(needed) + " draws for alpha = " + std::to_string(alpha) +
                     ", got " + std::to_string(draws));
  // The slack absorbs representation error, e.g. (1 - 0.05) * 100.
  const double exact = (1.0 - alpha) * static_cast<double>(draws);
  auto rank = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  return std::clamp<std::size_t>(rank, 1, draws);
}

namespace {

double order_statistic(std::vector<double> values, std::size_t rank) {
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

void check_inputs(const EstimateVector& estimate, const ResampleDraws& draws) {
  if (draws.dim() != estimate.values.size())
    throw InputError("draws have dimension " + std::to_string(draws.dim()) + ", estimate has " +
                     std::to_string(estimate.values.size()));
  if (!estimate.scheme_fingerprint.empty() && !draws.scheme_fingerprint.empty() &&
      estimate.scheme_fingerprint != draws.scheme_fingerprint)
    throw InputError("draws were produced under a different aggregation scheme than the estimate");
}

}  // namespace

ConfidenceBand ci_scalar(const EstimateVector& estimate, const ResampleDraws& draws, double alpha) {
  check_inputs(estimate, draws);
  if (estimate.values.size() != 1) throw InputError("ci_scalar needs a one-dimensional target");
  const std::size_t rank = critical_rank(alpha, static_cast<std::size_t>(draws.count()));
  std::vector<double> magnitudes(static_cast<std::size_t>(draws.count()));
  for (int b = 0; b < draws.count(); ++b) magnitudes[static_cast<std::size_t>(b)] = std::abs(draws.draws(b, 0));

  ConfidenceBand band;
  band.level = 1.0 - alpha;
  band.estimate = estimate.values;
  band.labels = estimate.labels;
  band.normalizer = Normalizer::constant;
  band.scale = Eigen::VectorXd::Ones(1);
  band.critical_value = order_statistic(std::move(magnitudes), rank);
  band.lower = band.estimate.array() - band.critical_value;
  band.upper = band.estimate.array() + band.critical_value;
  return band;
}

ConfidenceBand uniform_band(const EstimateVector& estimate, const ResampleDraws& draws, double alpha,
                            Normalizer normalizer) {
  check_inputs(estimate, draws);
  const int k = draws.dim();
  const int b_count = draws.count();
  const std::size_t rank = critical_rank(alpha, static_cast<std::size_t>(b_count));

  std::vector<int> active;
  for (int s = 0; s < k; ++s)
    if (!std::binary_search(draws.degenerate_global.begin(), draws.degenerate_global.end(), s)) active.push_back(s);
  if (active.empty()) throw InputError("uniform band: every coordinate is degenerate");

  Eigen::VectorXd scale = Eigen::VectorXd::Zero(k);
  for (int s : active) {
    if (normalizer == Normalizer::constant) {
      scale(s) = 1.0;
      continue;
    }
    const auto col = draws.draws.col(s);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / b_count);
    if (!(sd > 0.0))
      throw InputError("studentized band: coordinate '" +
                       (s < static_cast<int>(estimate.labels.size()) ? estimate.labels[s] : std::to_string(s)) +
                       "' has no variation across draws; use the constant normalizer");
    scale(s) = sd;
  }

  std::vector<double> maxima(static_cast<std::size_t>(b_count));
  for (int b = 0; b < b_count; ++b) {
    double m = 0.0;
    for (int s : active) m = std::max(m, std::abs(draws.draws(b, s)) / scale(s));
    maxima[static_cast<std::size_t>(b)] = m;
  }

  ConfidenceBand band;
  band.level = 1.0 - alpha;
  band.estimate = estimate.values;
  band.labels = estimate.labels;
  band.normalizer = normalizer;
  band.scale = scale;
  band.critical_value = order_statistic(std::move(maxima), rank);
  const Eigen::VectorXd half = scale * band.critical_value;
  band.lower = band.estimate - half;
  band.upper = band.estimate + half;
  for (int s : draws.degenerate_global) {
    band.estimate(s) = 0.0;
    band.lower(s) = 0.0;
    band.upper(s) = 0.0;
  }
  return band;
}

const char* to_string(Normalizer normalizer) {
  return normalizer == Normalizer::constant ? "constant" : "studentized";
}

Normalizer normalizer_from_string(const std::string& name) {
  if (name == "constant") return Normalizer::constant;
  if (name == "studentized") return Normalizer::studentized;
  throw InputError("unknown normalizer '" + name + "' (expected constant or studentized)");
}

}  // namespace fewtreat

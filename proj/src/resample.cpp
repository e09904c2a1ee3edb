#include "fewtreat/resample.hpp"

#include "fewtreat/error.hpp"
#include "fewtreat/io.hpp"
#include "fewtreat/parallel.hpp"
#include "fewtreat/random.hpp"

#include <cmath>

namespace fewtreat {

std::vector<Eigen::MatrixXd> treated_scaled_residuals(const NormalizedResiduals& normres,
                                                      const FittedHetero& fitted, const PanelData& panel) {
  if (normres.n_treated() != panel.n_treated || static_cast<int>(fitted.units.size()) != panel.n_treated)
    throw InputError("resample: normalized residuals, fitted model and panel disagree on treated units");
  if (normres.n_control() != panel.n_control())
    throw InputError("resample: normalized residuals do not match the panel's controls");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(panel.n_treated));
  for (int j = 0; j < panel.n_treated; ++j) {
    const auto& active = normres.active[j];
    const Eigen::MatrixXd& w = normres.by_treated[j];
    Eigen::MatrixXd scaled;
    if (fitted.kind == HeteroKind::identity) {
      scaled = w;
    } else {
      const auto z = unit_sizes(fitted, panel, j);
      scaled = w * scale_matrix(fitted, j, z);  // rows: (H w_i)^T = w_i^T H, H symmetric
    }
    Eigen::MatrixXd embedded = Eigen::MatrixXd::Zero(w.rows(), normres.k_target);
    for (std::size_t c = 0; c < active.size(); ++c)
      embedded.col(active[c]) = scaled.col(static_cast<Eigen::Index>(c));
    for (int s : normres.degenerate_global) embedded.col(s).setZero();
    out.push_back(std::move(embedded));
  }
  return out;
}

ResampleDraws draw(const NormalizedResiduals& normres, const FittedHetero& fitted, const PanelData& panel,
                   int draws, std::uint64_t seed, int threads) {
  if (draws <= 0) throw InputError("resample: number of draws must be positive, got " + std::to_string(draws));
  const auto table = treated_scaled_residuals(normres, fitted, panel);
  const int n1 = panel.n_treated;
  const auto n0 = static_cast<std::uint64_t>(panel.n_control());
  const int k = normres.k_target;

  ResampleDraws out;
  out.draws = Eigen::MatrixXd::Zero(draws, k);
  out.indices.resize(draws, n1);
  out.seed = seed;
  out.degenerate_global = normres.degenerate_global;
  out.scheme_fingerprint = normres.scheme_fingerprint;
  out.hetero_fingerprint = fingerprint(fitted);

  parallel_for(static_cast<std::size_t>(draws), threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd e(k);
    for (std::size_t b = begin; b < end; ++b) {
      e.setZero();
      for (int j = 0; j < n1; ++j) {
        CounterStream stream(derive_key(seed, {b, static_cast<std::uint64_t>(j)}));
        const auto i = static_cast<Eigen::Index>(stream.uniform_index(n0));
        out.indices(static_cast<Eigen::Index>(b), j) = static_cast<int>(i);
        e += table[static_cast<std::size_t>(j)].row(i).transpose();
      }
      out.draws.row(static_cast<Eigen::Index>(b)) = e.transpose();
    }
  });
  for (int s : out.degenerate_global) out.draws.col(s).setZero();
  return out;
}

double empirical_cdf(const ResampleDraws& draws, const Eigen::VectorXd& c) {
  if (c.size() != draws.dim())
    throw InputError("empirical_cdf: point has dimension " + std::to_string(c.size()) + ", draws have " +
                     std::to_string(draws.dim()));
  if (draws.count() == 0) return 0.0;
  long hits = 0;
  for (Eigen::Index b = 0; b < draws.draws.rows(); ++b)
    if ((draws.draws.row(b).transpose().array() <= c.array()).all()) ++hits;
  return static_cast<double>(hits) / static_cast<double>(draws.count());
}

double exact_cdf(const NormalizedResiduals& normres, const FittedHetero& fitted, const PanelData& panel,
                 const Eigen::VectorXd& c, int threads) {
  const int n1 = panel.n_treated;
  const int n0 = panel.n_control();
  const double total = std::pow(static_cast<double>(n0), n1);
  if (total > kMaxEnumeration)
    throw InputError("exact_cdf: " + std::to_string(n0) + "^" + std::to_string(n1) +
                     " assignments exceed the enumeration budget; use empirical_cdf with resampled draws");
  if (c.size() != normres.k_target)
    throw InputError("exact_cdf: point has dimension " + std::to_string(c.size()) + ", target has " +
                     std::to_string(normres.k_target));
  const auto table = treated_scaled_residuals(normres, fitted, panel);
  const int k = normres.k_target;

  // Partition by the first treated unit's control; odometer over the rest.
  std::vector<long long> hits(static_cast<std::size_t>(n0), 0);
  parallel_for(static_cast<std::size_t>(n0), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<int> idx(static_cast<std::size_t>(n1), 0);
    std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(n1) + 1, Eigen::VectorXd::Zero(k));
    for (std::size_t first = begin; first < end; ++first) {
      long long count = 0;
      partial[1] = table[0].row(static_cast<Eigen::Index>(first)).transpose();
      std::fill(idx.begin() + 1, idx.end(), 0);
      for (int j = 1; j < n1; ++j) partial[j + 1] = partial[j] + table[j].row(0).transpose();
      while (true) {
        if ((partial[n1].array() <= c.array()).all()) ++count;
        int j = n1 - 1;
        while (j >= 1 && ++idx[j] == n0) {
          idx[j] = 0;
          --j;
        }
        if (j < 1) break;
        for (int r = j; r < n1; ++r) partial[r + 1] = partial[r] + table[r].row(idx[r]).transpose();
      }
      hits[first] = count;
    }
  });
  long long sum = 0;
  for (long long h : hits) sum += h;
  return static_cast<double>(sum) / total;
}

}  // namespace fewtreat

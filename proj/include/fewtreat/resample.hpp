#pragma once

#include "fewtreat/hetero.hpp"
#include "fewtreat/panel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace fewtreat {

/// Simulated estimation errors, one row per draw.
struct ResampleDraws {
  Eigen::MatrixXd draws;    ///< B x K
  Eigen::MatrixXi indices;  ///< B x N1, 0-based control index drawn for each treated unit
  std::uint64_t seed = 0;
  std::vector<int> degenerate_global;
  std::string scheme_fingerprint;
  std::string hetero_fingerprint;

  int count() const { return static_cast<int>(draws.rows()); }
  int dim() const { return static_cast<int>(draws.cols()); }
};

/// Per treated unit, the control residuals rescaled to the treated unit's own
/// scale and embedded in K coordinates: row i = H_j(Z_j) * normalized_i(j).
std::vector<Eigen::MatrixXd> treated_scaled_residuals(const NormalizedResiduals& normres,
                                                      const FittedHetero& fitted, const PanelData& panel);

/// B draws: each picks one control per treated unit uniformly with replacement
/// and sums the treated-scaled residuals. Draw b of unit j uses a generator
/// keyed by (seed, b, j), so the output does not depend on `threads`.
ResampleDraws draw(const NormalizedResiduals& normres, const FittedHetero& fitted, const PanelData& panel,
                   int draws, std::uint64_t seed, int threads = 0);

/// Fraction of draws with e_b <= c componentwise.
double empirical_cdf(const ResampleDraws& draws, const Eigen::VectorXd& c);

/// Largest enumeration exact_cdf accepts.
inline constexpr double kMaxEnumeration = 1e8;

/// Exact resampling distribution at c: average of the indicator over all
/// N0^N1 assignments of controls to treated units. Throws InputError beyond
/// kMaxEnumeration assignments.
double exact_cdf(const NormalizedResiduals& normres, const FittedHetero& fitted, const PanelData& panel,
                 const Eigen::VectorXd& c, int threads = 0);

}  // namespace fewtreat

#pragma once

#include "fewtreat/confidence.hpp"
#include "fewtreat/design.hpp"
#include "fewtreat/hetero.hpp"
#include "fewtreat/panel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fewtreat {

enum class ShockFamily { normal, scaled_t };
enum class FixedEffectRule { gaussian, zero };

/// Unit sizes: a fixed value or an integer drawn uniformly from [low, high].
struct SizeRule {
  enum class Kind { fixed, uniform_int } kind = Kind::fixed;
  double value = 1.0;
  int low = 1;
  int high = 1;
};

/// Outcome model y = theta_j + gamma_t + eta_{j,t} (+ effect on treated
/// post-periods), with eta_i = group shock + mean of Z_i idiosyncratic shocks,
/// so Var[eta_i] = group_cov + idio_cov / Z_i.
struct DgpConfig {
  int n_treated = 1;
  int n_control = 50;
  int n_periods = 8;
  std::vector<int> treat_time;  ///< t*_j per treated unit (last untreated period)
  Eigen::MatrixXd effects;      ///< n_treated x n_periods, zero on pre-treatment cells
  FixedEffectRule fixed_effects = FixedEffectRule::gaussian;
  Eigen::MatrixXd group_cov;  ///< T x T PSD
  Eigen::MatrixXd idio_cov;   ///< T x T PSD
  SizeRule treated_size;
  SizeRule control_size;
  bool sizes_by_period = false;  ///< repeated cross-sections: idiosyncratic shocks independent across periods
  ShockFamily shocks = ShockFamily::normal;
  int t_df = 5;
  std::uint64_t seed = 1;
};

/// Throws InputError describing the first invalid field.
void validate_config(const DgpConfig& config);

/// Config with constant effect `effect` on every post cell, homoskedastic
/// identity group covariance and no size effect.
DgpConfig homoskedastic_config(int n_treated, int n_control, int n_periods, std::vector<int> treat_time,
                               double effect, std::uint64_t seed);

struct SimulatedPanel {
  PanelData panel;
  Eigen::MatrixXd effects;  ///< true effects, n_treated x T

  /// The target the scheme estimates: sum_j contribution_j * effects_j.
  Eigen::VectorXd truth(const AggregationScheme& scheme) const;
};

/// Deterministic in (config.seed, replication). Sizes depend only on config.seed.
SimulatedPanel simulate_panel(const DgpConfig& config, std::uint64_t replication);

struct CoverageOptions {
  SchemeKind scheme = SchemeKind::att;
  std::optional<GenericWeights> weights;  ///< required for the generic scheme
  HeteroSpec hetero;
  double alpha = 0.05;
  Normalizer normalizer = Normalizer::studentized;
  int replications = 2000;
  int draws = 2000;
  int threads = 0;
};

struct ReplicationRecord {
  Eigen::VectorXd estimate;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<bool> covered;
  bool covered_all = false;
  double critical_value = 0.0;
};

struct CoverageReport {
  int replications = 0;
  double level = 0.95;
  std::vector<std::string> labels;
  Eigen::VectorXd truth;
  Eigen::VectorXd coverage;
  Eigen::VectorXd coverage_se;
  double simultaneous = 0.0;
  double simultaneous_se = 0.0;
  Eigen::VectorXd mean_estimate;
  Eigen::VectorXd estimate_se;  ///< Monte Carlo s.e. of mean_estimate
  Eigen::VectorXd mean_width;
  std::vector<ReplicationRecord> records;
  std::string config_echo;  ///< JSON of the config and options
};

/// Simulate, estimate, fit, resample and build a band R times; report
/// per-coordinate and simultaneous containment of the truth.
CoverageReport coverage_experiment(const DgpConfig& config, const CoverageOptions& options);

/// Scheme of the given kind for a panel (weights needed for generic).
AggregationScheme build_scheme(SchemeKind kind, const PanelData& panel,
                               const std::optional<GenericWeights>& weights = std::nullopt);

}  // namespace fewtreat

#include "fewtreat/montecarlo.hpp"

#include "fewtreat/error.hpp"
#include "fewtreat/estimator.hpp"
#include "fewtreat/io.hpp"
#include "fewtreat/linalg.hpp"
#include "fewtreat/parallel.hpp"
#include "fewtreat/random.hpp"
#include "fewtreat/resample.hpp"

#include <cmath>

namespace fewtreat {

namespace {

// Stream purposes under a replication key.
enum Purpose : std::uint64_t { kSizes = 1, kFixedEffects = 2, kShocks = 3, kResample = 4 };

void check_cov(const Eigen::MatrixXd& v, int t, const char* name) {
  if (v.rows() != t || v.cols() != t)
    throw InputError(std::string("dgp: ") + name + " must be " + std::to_string(t) + "x" + std::to_string(t));
  if (!v.allFinite()) throw InputError(std::string("dgp: ") + name + " has non-finite entries");
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InputError(std::string("dgp: ") + name + " is not symmetric");
  if (linalg::min_eigenvalue(v) < -1e-10 * scale)
    throw InputError(std::string("dgp: ") + name + " is not positive semidefinite");
}

void check_size_rule(const SizeRule& rule, const char* who) {
  if (rule.kind == SizeRule::Kind::fixed && !(rule.value > 0.0))
    throw InputError(std::string("dgp: ") + who + " size must be positive");
  if (rule.kind == SizeRule::Kind::uniform_int && !(rule.low >= 1 && rule.high >= rule.low))
    throw InputError(std::string("dgp: ") + who + " size range must satisfy 1 <= low <= high");
}

double draw_size(const SizeRule& rule, CounterStream& stream) {
  if (rule.kind == SizeRule::Kind::fixed) return rule.value;
  const auto span = static_cast<std::uint64_t>(rule.high - rule.low + 1);
  return static_cast<double>(rule.low + static_cast<int>(stream.uniform_index(span)));
}

double shock(CounterStream& stream, const DgpConfig& config) {
  return config.shocks == ShockFamily::normal ? stream.normal() : stream.scaled_t(config.t_df);
}

Eigen::VectorXd shock_vector(CounterStream& stream, const DgpConfig& config, int t) {
  Eigen::VectorXd g(t);
  for (int p = 0; p < t; ++p) g(p) = shock(stream, config);
  return g;
}

int shock_count(double z) { return std::max(1, static_cast<int>(std::lround(z))); }

}  // namespace

void validate_config(const DgpConfig& c) {
  if (c.n_treated < 1) throw InputError("dgp: n_treated must be at least 1");
  if (c.n_control < 2) throw InputError("dgp: n_control must be at least 2");
  if (c.n_periods < 2) throw InputError("dgp: n_periods must be at least 2");
  if (static_cast<int>(c.treat_time.size()) != c.n_treated)
    throw InputError("dgp: treat_time needs one entry per treated unit");
  for (int ts : c.treat_time)
    if (ts < 1 || ts > c.n_periods - 1) throw InputError("dgp: treat_time entries must lie in [1, T-1]");
  if (c.effects.rows() != c.n_treated || c.effects.cols() != c.n_periods)
    throw InputError("dgp: effects must be n_treated x n_periods");
  if (!c.effects.allFinite()) throw InputError("dgp: effects must be finite");
  for (int j = 0; j < c.n_treated; ++j)
    for (int p = 0; p < c.treat_time[j]; ++p)
      if (c.effects(j, p) != 0.0) throw InputError("dgp: effects must be zero on pre-treatment cells");
  check_cov(c.group_cov, c.n_periods, "group_cov");
  check_cov(c.idio_cov, c.n_periods, "idio_cov");
  if (c.sizes_by_period) {
    const Eigen::MatrixXd off = c.idio_cov - Eigen::MatrixXd(c.idio_cov.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() > 0.0)
      throw InputError("dgp: per-period sizes need a diagonal idio_cov (shocks independent across periods)");
  }
  check_size_rule(c.treated_size, "treated");
  check_size_rule(c.control_size, "control");
  if (c.shocks == ShockFamily::scaled_t && c.t_df <= 2) throw InputError("dgp: t_df must exceed 2");
}

DgpConfig homoskedastic_config(int n_treated, int n_control, int n_periods, std::vector<int> treat_time,
                               double effect, std::uint64_t seed) {
  DgpConfig c;
  c.n_treated = n_treated;
  c.n_control = n_control;
  c.n_periods = n_periods;
  c.treat_time = std::move(treat_time);
  c.effects = Eigen::MatrixXd::Zero(n_treated, n_periods);
  for (int j = 0; j < n_treated && j < static_cast<int>(c.treat_time.size()); ++j)
    for (int p = c.treat_time[j]; p < n_periods; ++p) c.effects(j, p) = effect;
  c.group_cov = Eigen::MatrixXd::Identity(n_periods, n_periods);
  c.idio_cov = Eigen::MatrixXd::Zero(n_periods, n_periods);
  c.seed = seed;
  return c;
}

Eigen::VectorXd SimulatedPanel::truth(const AggregationScheme& scheme) const {
  check_compatible(panel, scheme);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(scheme.k_target);
  for (int j = 0; j < panel.n_treated; ++j) out += scheme.contribution(j) * effects.row(j).transpose();
  for (int s : scheme.degenerate_global) out(s) = 0.0;
  return out;
}

SimulatedPanel simulate_panel(const DgpConfig& config, std::uint64_t replication) {
  validate_config(config);
  const int n1 = config.n_treated;
  const int n = n1 + config.n_control;
  const int t = config.n_periods;

  PanelData panel;
  panel.n_treated = n1;
  panel.treat_time.assign(static_cast<std::size_t>(n), kNeverTreated);
  for (int j = 0; j < n1; ++j) panel.treat_time[j] = config.treat_time[j];
  for (int j = 0; j < n; ++j)
    panel.unit_labels.push_back(j < n1 ? "T" + std::to_string(j + 1) : "C" + std::to_string(j - n1 + 1));
  for (int p = 1; p <= t; ++p) panel.period_labels.push_back(std::to_string(p));

  // Sizes are part of the fixed design: keyed by the config seed only.
  CounterStream size_stream(derive_key(config.seed, {kSizes}));
  panel.size_layout = config.sizes_by_period ? SizeLayout::per_period : SizeLayout::per_unit;
  panel.sizes.resize(n, config.sizes_by_period ? t : 1);
  for (int j = 0; j < n; ++j)
    for (Eigen::Index p = 0; p < panel.sizes.cols(); ++p)
      panel.sizes(j, p) = draw_size(j < n1 ? config.treated_size : config.control_size, size_stream);

  const Eigen::MatrixXd group_root = linalg::sqrt_psd(config.group_cov);
  const Eigen::MatrixXd idio_root = linalg::sqrt_psd(config.idio_cov);

  CounterStream fe_stream(derive_key(config.seed, {replication, kFixedEffects}));
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  Eigen::RowVectorXd gamma = Eigen::RowVectorXd::Zero(t);
  if (config.fixed_effects == FixedEffectRule::gaussian) {
    for (int j = 0; j < n; ++j) theta(j) = fe_stream.normal();
    for (int p = 0; p < t; ++p) gamma(p) = fe_stream.normal();
  }

  panel.outcomes.resize(n, t);
  for (int j = 0; j < n; ++j) {
    CounterStream stream(derive_key(config.seed, {replication, kShocks, static_cast<std::uint64_t>(j)}));
    Eigen::VectorXd eta = group_root * shock_vector(stream, config, t);
    if (!config.sizes_by_period) {
      const double z = panel.sizes(j, 0);
      Eigen::VectorXd idio;
      if (config.shocks == ShockFamily::normal) {
        idio = shock_vector(stream, config, t) / std::sqrt(z);
      } else {
        const int count = shock_count(z);
        idio = Eigen::VectorXd::Zero(t);
        for (int s = 0; s < count; ++s) idio += shock_vector(stream, config, t);
        idio /= count;
      }
      eta += idio_root * idio;
    } else {
      for (int p = 0; p < t; ++p) {
        const double z = panel.sizes(j, p);
        double mean = 0.0;
        if (config.shocks == ShockFamily::normal) {
          mean = stream.normal() / std::sqrt(z);
        } else {
          const int count = shock_count(z);
          for (int s = 0; s < count; ++s) mean += shock(stream, config);
          mean /= count;
        }
        eta(p) += std::sqrt(config.idio_cov(p, p)) * mean;
      }
    }
    for (int p = 0; p < t; ++p) {
      double y = theta(j) + gamma(p) + eta(p);
      if (j < n1 && p >= config.treat_time[j]) y += config.effects(j, p);
      panel.outcomes(j, p) = y;
    }
  }

  if (auto v = validate(panel); !v.empty()) throw InvariantError("simulated panel invalid: " + v.front());
  return {std::move(panel), config.effects};
}

AggregationScheme build_scheme(SchemeKind kind, const PanelData& panel, const std::optional<GenericWeights>& weights) {
  switch (kind) {
    case SchemeKind::att: return build_scheme_att(panel);
    case SchemeKind::event_study: return build_scheme_event_study(panel);
    case SchemeKind::pretrends: return build_scheme_pretrends(panel);
    case SchemeKind::generic:
      if (!weights) throw InputError("the generic scheme needs a weights document");
      return build_scheme_generic(panel, *weights);
  }
  throw InputError("unknown scheme kind");
}

CoverageReport coverage_experiment(const DgpConfig& config, const CoverageOptions& options) {
  validate_config(config);
  if (options.replications < 100) throw InputError("coverage: at least 100 replications are required");
  critical_rank(options.alpha, static_cast<std::size_t>(std::max(options.draws, 0)));

  const int r_count = options.replications;
  std::vector<ReplicationRecord> records(static_cast<std::size_t>(r_count));
  std::vector<Eigen::VectorXd> truths(static_cast<std::size_t>(r_count));
  std::vector<std::string> labels;

  parallel_for(static_cast<std::size_t>(r_count), options.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      try {
        const SimulatedPanel sim = simulate_panel(config, r);
        const AggregationScheme scheme = build_scheme(options.scheme, sim.panel, options.weights);
        const EstimateVector estimate = point_estimate(sim.panel, scheme);
        const ControlResiduals residuals = control_residuals(sim.panel, scheme);
        const FittedHetero fitted = fit(options.hetero, residuals, sim.panel, scheme);
        const NormalizedResiduals normres = normalize(residuals, fitted, sim.panel);
        const ResampleDraws draws =
            draw(normres, fitted, sim.panel, options.draws, derive_key(config.seed, {r, kResample}), 1);
        const ConfidenceBand band = uniform_band(estimate, draws, options.alpha, options.normalizer);
        const Eigen::VectorXd truth = sim.truth(scheme);

        ReplicationRecord& rec = records[r];
        rec.estimate = estimate.values;
        rec.lower = band.lower;
        rec.upper = band.upper;
        rec.critical_value = band.critical_value;
        rec.covered.resize(static_cast<std::size_t>(truth.size()));
        rec.covered_all = true;
        for (Eigen::Index s = 0; s < truth.size(); ++s) {
          rec.covered[static_cast<std::size_t>(s)] = band.covers(static_cast<int>(s), truth(s));
          rec.covered_all = rec.covered_all && rec.covered[static_cast<std::size_t>(s)];
        }
        truths[r] = truth;
        if (r == 0) labels = estimate.labels;
      } catch (const InputError& e) {
        throw InputError("replication " + std::to_string(r) + ": " + e.what());
      } catch (const InvariantError& e) {
        throw InvariantError("replication " + std::to_string(r) + ": " + e.what());
      }
    }
  });

  // Fixed-order reduction.
  const Eigen::Index k = truths.front().size();
  CoverageReport report;
  report.replications = r_count;
  report.level = 1.0 - options.alpha;
  report.labels = labels;
  report.truth = truths.front();
  report.coverage = Eigen::VectorXd::Zero(k);
  report.mean_estimate = Eigen::VectorXd::Zero(k);
  report.mean_width = Eigen::VectorXd::Zero(k);
  int all = 0;
  for (const auto& rec : records) {
    for (Eigen::Index s = 0; s < k; ++s) report.coverage(s) += rec.covered[static_cast<std::size_t>(s)] ? 1.0 : 0.0;
    report.mean_estimate += rec.estimate;
    report.mean_width += rec.upper - rec.lower;
    all += rec.covered_all ? 1 : 0;
  }
  const double rd = r_count;
  report.coverage /= rd;
  report.mean_estimate /= rd;
  report.mean_width /= rd;
  report.simultaneous = all / rd;
  report.coverage_se = (report.coverage.array() * (1.0 - report.coverage.array()) / rd).sqrt();
  report.simultaneous_se = std::sqrt(report.simultaneous * (1.0 - report.simultaneous) / rd);
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(k);
  for (const auto& rec : records) ss += (rec.estimate - report.mean_estimate).array().square().matrix();
  report.estimate_se = (ss / (rd - 1.0) / rd).cwiseSqrt();
  report.records = std::move(records);
  report.config_echo = to_json(config, options).dump();
  return report;
}

}  // namespace fewtreat

// Acceptance suite: one PASS/FAIL line per criterion, with runtime.
// Exit status is nonzero when any criterion fails.

#include "cli.hpp"

#include "fewtreat/confidence.hpp"
#include "fewtreat/design.hpp"
#include "fewtreat/estimator.hpp"
#include "fewtreat/hetero.hpp"
#include "fewtreat/io.hpp"
#include "fewtreat/linalg.hpp"
#include "fewtreat/montecarlo.hpp"
#include "fewtreat/panel.hpp"
#include "fewtreat/random.hpp"
#include "fewtreat/resample.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace fewtreat;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

PanelData blank_panel(int n1, int n0, int t, const std::vector<int>& ts) {
  PanelData p;
  p.outcomes = Eigen::MatrixXd::Zero(n1 + n0, t);
  p.n_treated = n1;
  p.treat_time.assign(static_cast<std::size_t>(n1 + n0), kNeverTreated);
  for (int j = 0; j < n1; ++j) p.treat_time[j] = ts[j];
  for (int i = 0; i < n1 + n0; ++i) p.unit_labels.push_back("u" + std::to_string(i));
  for (int c = 1; c <= t; ++c) p.period_labels.push_back(std::to_string(c));
  return p;
}

/// AR(1)-style correlation scaled by sigma^2.
Eigen::MatrixXd ar1(int t, double rho, double sigma2) {
  Eigen::MatrixXd v(t, t);
  for (int a = 0; a < t; ++a)
    for (int b = 0; b < t; ++b) v(a, b) = sigma2 * std::pow(rho, std::abs(a - b));
  return v;
}

// 1. Example matrices reproduced exactly.
Outcome matrices() {
  Outcome o;
  bool ok = true;
  {
    const auto s = build_scheme_att(blank_panel(1, 2, 4, {2}));
    Eigen::MatrixXd a(2, 4), b(1, 2);
    a << -0.5, -0.5, 1, 0, -0.5, -0.5, 0, 1;
    b << 0.5, 0.5;
    ok = ok && s.extract[0] == a && s.aggregate[0] == b;
  }
  {
    // One treated unit, T=3, t*=2: rows y1-y2, 0, y3-y2.
    const auto s = build_scheme_pretrends(blank_panel(1, 2, 3, {2}));
    Eigen::MatrixXd a(3, 3);
    a << 1, -1, 0, 0, 0, 0, 0, -1, 1;
    ok = ok && s.extract[0] == a && s.contribution(0) == a && s.degenerate_global == std::vector<int>{1};
  }
  {
    // Larger block: T=5, t*=3. Pre rows -(e_t* - e_t), zero row at t*, post rows e_t - e_t*.
    const auto s = build_scheme_pretrends(blank_panel(1, 2, 5, {3}));
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(5, 5);
    for (int t = 0; t < 5; ++t)
      if (t != 2) {
        a(t, t) = 1;
        a(t, 2) = -1;
      }
    ok = ok && s.extract[0] == a && s.labels == std::vector<std::string>{"-2", "-1", "0", "1", "2"} &&
         s.extract[0].row(2).isZero(0.0);
  }
  o.pass = ok;
  o.detail = ok ? "att and pretrends blocks equal the reference matrices entrywise" : "matrix mismatch";
  return o;
}

// 2. Mean estimate within 3 Monte Carlo s.e. of the truth, every coordinate, all schemes.
Outcome unbiasedness() {
  DgpConfig c;
  c.n_treated = 2;
  c.n_control = 50;
  c.n_periods = 8;
  c.treat_time = {4, 5};
  c.effects = Eigen::MatrixXd::Zero(2, 8);
  for (int j = 0; j < 2; ++j)
    for (int t = c.treat_time[j]; t < 8; ++t) c.effects(j, t) = 0.5 + 0.3 * (t - c.treat_time[j]) + 0.4 * j;
  c.group_cov = ar1(8, 0.5, 1.0);
  c.idio_cov = Eigen::MatrixXd::Zero(8, 8);
  c.seed = 20240602;
  const int r_count = 2000;

  const PanelData layout = simulate_panel(c, 0).panel;
  const std::vector<AggregationScheme> schemes{build_scheme_att(layout), build_scheme_event_study(layout),
                                               build_scheme_pretrends(layout)};
  std::vector<Eigen::VectorXd> sum, sum_sq, truth;
  for (const auto& s : schemes) {
    sum.push_back(Eigen::VectorXd::Zero(s.k_target));
    sum_sq.push_back(Eigen::VectorXd::Zero(s.k_target));
    truth.push_back(simulate_panel(c, 0).truth(s));
  }
  for (int r = 0; r < r_count; ++r) {
    const auto sim = simulate_panel(c, static_cast<std::uint64_t>(r));
    for (std::size_t k = 0; k < schemes.size(); ++k) {
      const Eigen::VectorXd e = point_estimate(sim.panel, schemes[k]).values - truth[k];
      sum[k] += e;
      sum_sq[k] += e.array().square().matrix();
    }
  }
  double worst = 0.0;
  bool ok = true;
  int coords = 0;
  for (std::size_t k = 0; k < schemes.size(); ++k)
    for (Eigen::Index s = 0; s < sum[k].size(); ++s, ++coords) {
      const double mean = sum[k](s) / r_count;
      const double var = (sum_sq[k](s) - r_count * mean * mean) / (r_count - 1);
      const double se = std::sqrt(std::max(0.0, var) / r_count);
      if (se == 0.0) {
        ok = ok && mean == 0.0;
        continue;
      }
      worst = std::max(worst, std::abs(mean) / se);
      ok = ok && std::abs(mean) <= 3 * se;
    }
  return {ok, std::to_string(coords) + " coordinates over att/event_study/pretrends, R=2000; max |bias|/se = " +
                  fmt(worst, 3) + " (limit 3)"};
}

// 3. Resampled cdf against the exact enumeration.
Outcome oracle_equivalence() {
  DgpConfig c = homoskedastic_config(2, 4, 4, {2, 2}, 0.0, 77);
  c.group_cov = ar1(4, 0.3, 1.0);
  const PanelData p = simulate_panel(c, 0).panel;
  const auto s = build_scheme_event_study(p);  // K = 2
  const auto res = control_residuals(p, s);
  const auto fitted = fit({HeteroKind::identity, std::nullopt}, res, p, s);
  const auto normres = normalize(res, fitted, p);
  const auto draws = draw(normres, fitted, p, 100000, 31337);

  // 10 x 10 grid spanning the draws' range in each coordinate.
  const Eigen::VectorXd lo = draws.draws.colwise().minCoeff().transpose();
  const Eigen::VectorXd hi = draws.draws.colwise().maxCoeff().transpose();
  double sup = 0.0;
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b) {
      Eigen::Vector2d point(lo(0) + (hi(0) - lo(0)) * (a + 0.5) / 10.0, lo(1) + (hi(1) - lo(1)) * (b + 0.5) / 10.0);
      sup = std::max(sup, std::abs(empirical_cdf(draws, point) - exact_cdf(normres, fitted, p, point)));
    }
  return {sup <= 0.02, "N1=2, N0=4, K=2, B=1e5, 100 grid points; sup |F_B - F| = " + fmt(sup, 3) + " (limit 0.02)"};
}

// 4. Scalar interval coverage.
Outcome scalar_coverage() {
  const DgpConfig c = homoskedastic_config(1, 50, 8, {4}, 1.0, 4004);
  CoverageOptions o;
  o.scheme = SchemeKind::att;
  o.hetero.kind = HeteroKind::identity;
  o.alpha = 0.05;
  o.normalizer = Normalizer::constant;
  o.replications = 2000;
  o.draws = 2000;
  const auto report = coverage_experiment(c, o);
  const double cov = report.coverage(0);
  return {cov >= 0.93 && cov <= 0.97,
          "N1=1, N0=50, T=8, identity, R=2000, B=2000; coverage = " + fmt(cov) + " (target [0.93, 0.97])"};
}

// 5. Uniform band over three exposures.
Outcome band_coverage() {
  const DgpConfig c = homoskedastic_config(2, 50, 8, {5, 6}, 1.0, 5005);
  CoverageOptions o;
  o.scheme = SchemeKind::event_study;
  o.hetero.kind = HeteroKind::identity;
  o.alpha = 0.05;
  o.normalizer = Normalizer::studentized;
  o.replications = 2000;
  o.draws = 2000;
  const auto report = coverage_experiment(c, o);
  bool dominance = true;
  for (Eigen::Index s = 0; s < report.coverage.size(); ++s) dominance = dominance && report.coverage(s) >= report.simultaneous;
  const double sim = report.simultaneous;
  std::string per;
  for (Eigen::Index s = 0; s < report.coverage.size(); ++s) per += (s ? ", " : "") + fmt(report.coverage(s));
  return {report.coverage.size() == 3 && sim >= 0.925 && sim <= 0.975 && dominance,
          "N1=2, t*=(5,6), T=8, K=3, studentized; simultaneous = " + fmt(sim) + " (target [0.925, 0.975]); "
          "per-coordinate = (" + per + ")"};
}

// 6. Size-driven heteroskedasticity: identity undercovers, panel_agg is calibrated.
Outcome hetero_correction() {
  DgpConfig c = homoskedastic_config(1, 400, 8, {4}, 1.0, 6006);
  c.group_cov = 0.1 * Eigen::MatrixXd::Identity(8, 8);
  c.idio_cov = ar1(8, 0.3, 25.0);
  c.treated_size.value = 25;
  c.control_size.kind = SizeRule::Kind::uniform_int;
  c.control_size.low = 25;
  c.control_size.high = 400;
  CoverageOptions o;
  o.scheme = SchemeKind::att;
  o.alpha = 0.05;
  o.normalizer = Normalizer::constant;
  o.replications = 2000;
  o.draws = 2000;
  o.hetero.kind = HeteroKind::identity;
  const double identity = coverage_experiment(c, o).coverage(0);
  o.hetero.kind = HeteroKind::panel_agg;
  const double corrected = coverage_experiment(c, o).coverage(0);
  return {identity < corrected && corrected >= 0.925 && corrected <= 0.975,
          "N1=1, N0=400, treated Z=25, control Z~U{25..400}, V1=25*AR(0.3), V0=0.1*I; identity = " + fmt(identity) +
              ", panel_agg = " + fmt(corrected) + " (target [0.925, 0.975])"};
}

// 7. panel_agg parameters recovered from 10 000 controls.
Outcome fit_consistency() {
  Eigen::Matrix2d lambda0, lambda1;
  lambda0 << 1.0, 0.05, 0.05, 0.2;
  lambda1 << 40.0, -3.0, -3.0, 6.0;
  const int n0 = 10000, seeds = 100;
  int good = 0;
  double worst = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    // T=3, t*=1, event study: contribution rows (y2 - y1, y3 - y1), so an
    // outcome path (0, w1, w2) carries the residual w exactly.
    PanelData p = blank_panel(1, n0, 3, {1});
    p.size_layout = SizeLayout::per_unit;
    p.sizes = Eigen::VectorXd::Constant(n0 + 1, 1.0);
    const Eigen::Matrix2d root1 = linalg::sqrt_psd(lambda0 + lambda1);
    const Eigen::Matrix2d root1000 = linalg::sqrt_psd(lambda0 + lambda1 / 1000.0);
    for (int i = 1; i <= n0; ++i) {
      const bool small = i % 2 == 0;
      p.sizes(i) = small ? 1.0 : 1000.0;
      CounterStream g(derive_key(static_cast<std::uint64_t>(7000 + seed), {static_cast<std::uint64_t>(i)}));
      const Eigen::Vector2d xi(g.normal(), g.normal());
      const Eigen::Vector2d w = (small ? root1 : root1000) * xi;
      p.outcomes(i, 1) = w(0);
      p.outcomes(i, 2) = w(1);
    }
    const auto s = build_scheme_event_study(p);
    const auto f = fit({HeteroKind::panel_agg, std::nullopt}, control_residuals(p, s), p, s);
    const double e0 = linalg::spectral_norm(f.units[0].base - lambda0) / linalg::spectral_norm(lambda0);
    const double e1 = linalg::spectral_norm(f.units[0].size_loading - lambda1) / linalg::spectral_norm(lambda1);
    worst = std::max({worst, e0, e1});
    good += (e0 <= 0.05 && e1 <= 0.05) ? 1 : 0;
  }
  return {good >= 95, "K=2, N0=10000, Z in {1, 1000}, Gaussian shocks; " + std::to_string(good) +
                          "/100 seeds within 5% for both matrices (need 95); worst = " + fmt(worst, 3)};
}

// 8. Adding unit and period effects leaves every output unchanged.
Outcome shift_invariance() {
  double worst = 0.0;
  DgpConfig c = homoskedastic_config(2, 30, 6, {2, 4}, 0.7, 808);
  c.fixed_effects = FixedEffectRule::zero;
  c.idio_cov = ar1(6, 0.2, 16.0);
  c.control_size.kind = SizeRule::Kind::uniform_int;
  c.control_size.low = 5;
  c.control_size.high = 200;
  c.treated_size.value = 20;
  auto rel = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.size() == 0) return 0.0;
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff());
  };
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const PanelData p = simulate_panel(c, rep).panel;
    PanelData q = p;
    CounterStream g(derive_key(808, {rep, 99}));
    Eigen::VectorXd theta(q.n_units());
    Eigen::RowVectorXd gamma(q.n_periods());
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = 100.0 * g.normal();
    for (Eigen::Index t = 0; t < gamma.size(); ++t) gamma(t) = 100.0 * g.normal();
    q.outcomes = (q.outcomes.colwise() + theta).rowwise() + gamma;

    for (auto kind : {SchemeKind::att, SchemeKind::event_study, SchemeKind::pretrends})
      for (auto hk : {HeteroKind::identity, HeteroKind::panel_agg}) {
        const auto s = build_scheme(kind, p);
        const auto ea = point_estimate(p, s), eb = point_estimate(q, s);
        const auto ra = control_residuals(p, s), rb = control_residuals(q, s);
        worst = std::max(worst, rel(ea.values, eb.values));
        for (int j = 0; j < p.n_treated; ++j) worst = std::max(worst, rel(ra.by_treated[j], rb.by_treated[j]));
        const auto fa = fit({hk, std::nullopt}, ra, p, s), fb = fit({hk, std::nullopt}, rb, q, s);
        const auto da = draw(normalize(ra, fa, p), fa, p, 1000, 5), db = draw(normalize(rb, fb, q), fb, q, 1000, 5);
        const auto ba = uniform_band(ea, da, 0.05, Normalizer::studentized);
        const auto bb = uniform_band(eb, db, 0.05, Normalizer::studentized);
        worst = std::max({worst, rel(ba.lower, bb.lower), rel(ba.upper, bb.upper)});
      }
  }
  return {worst <= 1e-9, "estimates, residuals and bands under theta_j + gamma_t shifts of scale 100; max relative "
                         "change = " + fmt(worst, 3) + " (limit 1e-9)"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 9. Bit-identical outputs across repeated runs and thread counts.
Outcome determinism() {
  bool ok = true;
  DgpConfig c = homoskedastic_config(3, 40, 7, {3, 4, 5}, 0.5, 909);
  c.idio_cov = 4.0 * Eigen::MatrixXd::Identity(7, 7);
  c.control_size.kind = SizeRule::Kind::uniform_int;
  c.control_size.low = 10;
  c.control_size.high = 100;
  const PanelData p = simulate_panel(c, 0).panel;
  const auto s = build_scheme_event_study(p);
  const auto r = control_residuals(p, s);
  const auto f = fit({HeteroKind::panel_agg, std::nullopt}, r, p, s);
  const auto n = normalize(r, f, p);
  const auto ref = draw(n, f, p, 20000, 4242, 1);
  for (int threads : {1, 2, 3, 4, 8, 16}) {
    const auto d = draw(n, f, p, 20000, 4242, threads);
    ok = ok && d.draws == ref.draws && d.indices == ref.indices;
  }

  CoverageOptions o;
  o.scheme = SchemeKind::event_study;
  o.replications = 100;
  o.draws = 500;
  o.threads = 1;
  const std::string one = nlohmann::json(coverage_experiment(c, o)).dump();
  o.threads = 4;
  const std::string four = nlohmann::json(coverage_experiment(c, o)).dump();
  ok = ok && one == four;

  // Command line: same seed, different thread caps, byte-identical files.
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fewtreat_acceptance_determinism";
  fs::create_directories(dir);
  write_panel(p, dir / "panel.csv");
  std::vector<std::string> outputs;
  for (const char* cap : {"1", "4"}) {
    ::setenv("FEWTREAT_THREADS", cap, 1);
    const std::string tag = cap;
    std::ostringstream out, err;
    const int code = cli::run({"fewtreat", "infer", "--input", (dir / "panel.csv").string(), "--scheme", "event_study",
                               "--hetero", "panel_agg", "--B", "5000", "--seed", "17", "--output",
                               (dir / ("band" + tag + ".csv")).string(), "--export-draws",
                               (dir / ("draws" + tag + ".csv")).string()},
                              out, err);
    ok = ok && code == 0;
    outputs.push_back(slurp(dir / ("band" + tag + ".csv")) + slurp(dir / ("draws" + tag + ".csv")));
  }
  ::unsetenv("FEWTREAT_THREADS");
  ok = ok && outputs[0] == outputs[1] && !outputs[0].empty();
  fs::remove_all(dir);
  return {ok, "draws with 1..16 threads, coverage report with 1 and 4 threads, CLI band and draws files under "
              "FEWTREAT_THREADS=1 and 4: " + std::string(ok ? "bit-identical" : "differences found")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "matrix construction", 1, matrices},
      {2, "unbiasedness", 60, unbiasedness},
      {3, "oracle equivalence", 30, oracle_equivalence},
      {4, "scalar interval coverage", 300, scalar_coverage},
      {5, "uniform band coverage", 600, band_coverage},
      {6, "heteroskedasticity correction", 600, hetero_correction},
      {7, "scale model fit consistency", 120, fit_consistency},
      {8, "shift invariance", 1, shift_invariance},
      {9, "determinism", 60, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << ")  " << fmt(secs, 3)
              << " s / " << c.limit_seconds << " s  " << o.detail << (in_time ? "" : "  [over time limit]") << std::endl;
  }
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}

#include "fewtreat/design.hpp"
#include "fewtreat/error.hpp"
#include "fewtreat/estimator.hpp"
#include "fewtreat/hetero.hpp"
#include "fewtreat/resample.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <limits>
#include <set>

using namespace fewtreat;
using fewtreat::test::make_panel;
using fewtreat::test::noise;

namespace {

struct Pipeline {
  PanelData panel;
  AggregationScheme scheme;
  ControlResiduals residuals;
  FittedHetero fitted;
  NormalizedResiduals normres;
};

Pipeline pipeline(PanelData p, SchemeKind kind, HeteroKind hetero = HeteroKind::identity) {
  Pipeline out;
  out.panel = std::move(p);
  out.scheme = kind == SchemeKind::att            ? build_scheme_att(out.panel)
               : kind == SchemeKind::event_study ? build_scheme_event_study(out.panel)
                                                  : build_scheme_pretrends(out.panel);
  out.residuals = control_residuals(out.panel, out.scheme);
  out.fitted = fit({hetero, std::nullopt}, out.residuals, out.panel, out.scheme);
  out.normres = normalize(out.residuals, out.fitted, out.panel);
  return out;
}

ResampleDraws manual_draws(std::initializer_list<double> values) {
  ResampleDraws d;
  d.draws.resize(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index b = 0;
  for (double v : values) d.draws(b++, 0) = v;
  return d;
}

}  // namespace

TEST_SUITE("resample") {
  TEST_CASE("one treated unit draws control residuals uniformly") {
    const auto pl = pipeline(make_panel(noise(6, 4, 1), {2}), SchemeKind::att);
    const int b = 50000;
    const auto d = draw(pl.normres, pl.fitted, pl.panel, b, 42);
    CHECK(d.count() == b);
    std::set<double> residuals;
    for (int i = 0; i < 5; ++i) residuals.insert(pl.residuals.by_treated[0](i, 0));
    std::vector<int> freq(5, 0);
    for (int r = 0; r < b; ++r) {
      CHECK(residuals.count(d.draws(r, 0)) == 1);
      CHECK(d.draws(r, 0) == pl.residuals.by_treated[0](d.indices(r, 0), 0));
      ++freq[static_cast<std::size_t>(d.indices(r, 0))];
    }
    const double sd = std::sqrt(0.2 * 0.8 / b);
    for (int f : freq) CHECK(std::abs(f / static_cast<double>(b) - 0.2) <= 4 * sd);
  }

  TEST_CASE("pair frequencies with two treated units") {
    const auto pl = pipeline(make_panel(noise(5, 3, 2), {1, 2}), SchemeKind::att);
    const int b = 100000;
    const auto d = draw(pl.normres, pl.fitted, pl.panel, b, 7);
    std::vector<int> freq(9, 0);
    for (int r = 0; r < b; ++r) ++freq[static_cast<std::size_t>(3 * d.indices(r, 0) + d.indices(r, 1))];
    const double p = 1.0 / 9, sd = std::sqrt(p * (1 - p) / b);
    for (int f : freq) CHECK(std::abs(f / static_cast<double>(b) - p) <= 3 * sd);
  }

  TEST_CASE("property: draws do not depend on the thread count") {
    const auto pl = pipeline(make_panel(noise(12, 6, 3), {2, 3, 4}), SchemeKind::event_study);
    const auto ref = draw(pl.normres, pl.fitted, pl.panel, 3001, 99, 1);
    for (int threads : {2, 3, 4, 8}) {
      const auto d = draw(pl.normres, pl.fitted, pl.panel, 3001, 99, threads);
      CHECK(d.draws == ref.draws);
      CHECK(d.indices == ref.indices);
    }
    CHECK(draw(pl.normres, pl.fitted, pl.panel, 3001, 100, 1).draws != ref.draws);
  }

  TEST_CASE("degenerate coordinates stay zero") {
    const auto pl = pipeline(make_panel(noise(8, 5, 4), {2, 3}), SchemeKind::pretrends);
    const auto d = draw(pl.normres, pl.fitted, pl.panel, 500, 1);
    for (int s : pl.scheme.degenerate_global) CHECK(d.draws.col(s).isZero(0.0));
  }

  TEST_CASE("nonpositive draw count") {
    const auto pl = pipeline(make_panel(noise(4, 3, 5), {1}), SchemeKind::att);
    CHECK_THROWS_AS(draw(pl.normres, pl.fitted, pl.panel, 0, 1), InputError);
  }

  TEST_CASE("empirical cdf examples") {
    const auto d = manual_draws({-1, 0, 2});
    const double inf = std::numeric_limits<double>::infinity();
    CHECK(empirical_cdf(d, Eigen::VectorXd::Constant(1, 0.0)) == doctest::Approx(2.0 / 3));
    CHECK(empirical_cdf(d, Eigen::VectorXd::Constant(1, inf)) == 1.0);
    CHECK(empirical_cdf(d, Eigen::VectorXd::Constant(1, -inf)) == 0.0);
    CHECK(empirical_cdf(d, Eigen::VectorXd::Constant(1, 2.0)) == 1.0);  // weak inequality
  }

  TEST_CASE("exact cdf with one treated unit counts residuals") {
    const auto pl = pipeline(make_panel(noise(7, 4, 6), {3}), SchemeKind::att);
    const Eigen::VectorXd w = pl.residuals.by_treated[0].col(0);
    for (double c : {-1.0, -0.2, 0.0, 0.3, 1.0}) {
      const double expected = (w.array() <= c).count() / 6.0;
      CHECK(exact_cdf(pl.normres, pl.fitted, pl.panel, Eigen::VectorXd::Constant(1, c)) == expected);
    }
  }

  TEST_CASE("exact cdf matches the nested-loop oracle") {
    std::vector<Pipeline> cases;
    cases.push_back(pipeline(make_panel(noise(5, 3, 7), {1, 2}), SchemeKind::att));
    cases.push_back(pipeline(make_panel(noise(8, 5, 8), {1, 2, 4}), SchemeKind::event_study));
    Eigen::VectorXd z(9);
    z << 3, 4, 1, 2, 5, 9, 2, 7, 3;
    cases.push_back(pipeline(make_panel(noise(9, 4, 9), {1, 3}, z), SchemeKind::event_study, HeteroKind::panel_agg));
    for (const auto& pl : cases) {
      const auto tables = treated_scaled_residuals(pl.normres, pl.fitted, pl.panel);
      for (unsigned g = 0; g < 15; ++g) {
        const Eigen::VectorXd c = noise(pl.scheme.k_target, 1, g, 1.5);
        const double ref = oracle::enumerate_cdf(tables, c);
        CHECK(exact_cdf(pl.normres, pl.fitted, pl.panel, c, 1) == ref);
        CHECK(exact_cdf(pl.normres, pl.fitted, pl.panel, c, 3) == ref);
      }
    }
  }

  TEST_CASE("treated scaling uses the treated unit's own size") {
    Eigen::VectorXd z(6);
    z << 4, 1, 2, 8, 16, 3;
    const auto pl = pipeline(make_panel(noise(6, 3, 10), {1}, z), SchemeKind::att, HeteroKind::panel_agg);
    const auto tables = treated_scaled_residuals(pl.normres, pl.fitted, pl.panel);
    const double h = scale_matrix(pl.fitted, 0, 4.0)(0, 0);
    for (int i = 0; i < 5; ++i) CHECK(tables[0](i, 0) == doctest::Approx(h * pl.normres.by_treated[0](i, 0)));
  }

  TEST_CASE("exact cdf refuses oversized enumerations") {
    const auto pl = pipeline(make_panel(noise(5, 3, 11), {1, 1, 1}), SchemeKind::att);
    CHECK_NOTHROW(exact_cdf(pl.normres, pl.fitted, pl.panel, Eigen::VectorXd::Zero(1)));
    auto big = pipeline(make_panel(noise(2 + 120, 3, 12), {1, 1}), SchemeKind::att);
    CHECK_NOTHROW(exact_cdf(big.normres, big.fitted, big.panel, Eigen::VectorXd::Zero(1)));
    auto huge = pipeline(make_panel(noise(4 + 101, 3, 13), {1, 1, 1, 1}), SchemeKind::att);
    CHECK_THROWS_WITH_AS(exact_cdf(huge.normres, huge.fitted, huge.panel, Eigen::VectorXd::Zero(1)),
                         doctest::Contains("empirical_cdf"), InputError);
  }

  TEST_CASE("property: empirical cdf is monotone in every coordinate") {
    const auto pl = pipeline(make_panel(noise(9, 5, 14), {2, 3}), SchemeKind::event_study);
    const auto d = draw(pl.normres, pl.fitted, pl.panel, 2000, 3);
    for (unsigned g = 0; g < 20; ++g) {
      Eigen::VectorXd c = noise(pl.scheme.k_target, 1, g);
      double prev = empirical_cdf(d, c);
      for (int s = 0; s < c.size(); ++s)
        for (int step = 0; step < 5; ++step) {
          c(s) += 0.1;
          const double next = empirical_cdf(d, c);
          CHECK(next >= prev);
          prev = next;
        }
    }
  }

  TEST_CASE("property: resampled cdf averages to the exact cdf") {
    const auto pl = pipeline(make_panel(noise(6, 4, 15), {1, 2}), SchemeKind::att);
    const Eigen::VectorXd c = Eigen::VectorXd::Constant(1, 0.1);
    const double exact = exact_cdf(pl.normres, pl.fitted, pl.panel, c);
    const int b = 500, seeds = 200;
    double mean = 0.0;
    for (int s = 0; s < seeds; ++s) mean += empirical_cdf(draw(pl.normres, pl.fitted, pl.panel, b, s), c);
    mean /= seeds;
    const double se = std::sqrt(exact * (1 - exact) / (static_cast<double>(b) * seeds));
    CHECK(std::abs(mean - exact) <= 4 * se);
  }

  TEST_CASE("identity model with one treated unit reproduces the residual cdf") {
    const auto pl = pipeline(make_panel(noise(11, 3, 16), {1}), SchemeKind::att);
    const Eigen::VectorXd w = pl.residuals.by_treated[0].col(0);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const Eigen::VectorXd c = Eigen::VectorXd::Constant(1, w(i));
      CHECK(exact_cdf(pl.normres, pl.fitted, pl.panel, c) == (w.array() <= w(i)).count() / 10.0);
    }
  }
}

#include "fewtreat/design.hpp"

#include "fewtreat/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fewtreat {

std::vector<int> AggregationScheme::active(int j) const {
  std::vector<int> out;
  const auto& deg = degenerate[j];
  for (int s = 0; s < k_target; ++s)
    if (!std::binary_search(deg.begin(), deg.end(), s)) out.push_back(s);
  return out;
}

bool AggregationScheme::is_degenerate(int coordinate) const {
  return std::binary_search(degenerate_global.begin(), degenerate_global.end(), coordinate);
}

namespace {

std::vector<int> treated_times(const PanelData& panel) {
  if (auto v = validate(panel); !v.empty()) throw InputError("invalid panel: " + v.front());
  return {panel.treat_time.begin(), panel.treat_time.begin() + panel.n_treated};
}

AggregationScheme skeleton(const PanelData& panel, SchemeKind kind) {
  AggregationScheme s;
  s.kind = kind;
  s.n_periods = panel.n_periods();
  s.treat_time = treated_times(panel);
  return s;
}

// [ -(1/t*) 1_{K_j x t*} | I_{K_j} ]
Eigen::MatrixXd post_vs_pre_mean(int n_periods, int t_star) {
  const int kj = n_periods - t_star;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(kj, n_periods);
  a.leftCols(t_star).setConstant(-1.0 / t_star);
  a.rightCols(kj).setIdentity();
  return a;
}

}  // namespace

std::vector<int> zero_rows(const Eigen::MatrixXd& m, double tolerance) {
  std::vector<int> out;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    if (m.cols() == 0 || m.row(r).cwiseAbs().maxCoeff() <= tolerance) out.push_back(static_cast<int>(r));
  return out;
}

void refresh_degenerate(AggregationScheme& scheme, double tolerance) {
  const int n1 = scheme.n_treated();
  scheme.degenerate.assign(n1, {});
  std::vector<int> count(scheme.k_target, 0);
  for (int j = 0; j < n1; ++j) {
    scheme.degenerate[j] = zero_rows(scheme.contribution(j), tolerance);
    for (int s : scheme.degenerate[j]) ++count[s];
  }
  scheme.degenerate_global.clear();
  for (int s = 0; s < scheme.k_target; ++s)
    if (count[s] == n1) scheme.degenerate_global.push_back(s);
}

AggregationScheme build_scheme_att(const PanelData& panel) {
  AggregationScheme s = skeleton(panel, SchemeKind::att);
  const int t = s.n_periods;
  int total = 0;
  for (int ts : s.treat_time) total += t - ts;
  s.k_target = 1;
  for (int ts : s.treat_time) {
    s.extract.push_back(post_vs_pre_mean(t, ts));
    s.aggregate.push_back(Eigen::MatrixXd::Constant(1, t - ts, 1.0 / total));
  }
  s.labels = {"ATT"};
  refresh_degenerate(s);
  return s;
}

AggregationScheme build_scheme_event_study(const PanelData& panel) {
  AggregationScheme s = skeleton(panel, SchemeKind::event_study);
  const int t = s.n_periods;
  int k = 0;
  for (int ts : s.treat_time) k = std::max(k, t - ts);
  // Number of treated units observed at exposure e (1-based).
  std::vector<int> exposed(k + 1, 0);
  for (int ts : s.treat_time)
    for (int e = 1; e <= t - ts; ++e) ++exposed[e];
  s.k_target = k;
  for (int ts : s.treat_time) {
    const int kj = t - ts;
    s.extract.push_back(post_vs_pre_mean(t, ts));
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, kj);
    for (int e = 1; e <= kj; ++e) b(e - 1, e - 1) = 1.0 / exposed[e];
    s.aggregate.push_back(std::move(b));
  }
  for (int e = 1; e <= k; ++e) s.labels.push_back(std::to_string(e));
  refresh_degenerate(s);
  return s;
}

AggregationScheme build_scheme_pretrends(const PanelData& panel) {
  AggregationScheme s = skeleton(panel, SchemeKind::pretrends);
  const int t = s.n_periods;
  int lo = 0;
  int hi = 0;
  for (int ts : s.treat_time) {
    lo = std::min(lo, 1 - ts);
    hi = std::max(hi, t - ts);
  }
  // Treated units observed at relative time r, indexed r - lo.
  std::vector<int> observed(hi - lo + 1, 0);
  for (int ts : s.treat_time)
    for (int r = 1 - ts; r <= t - ts; ++r) ++observed[r - lo];
  s.k_target = hi - lo + 1;
  for (int ts : s.treat_time) {
    // Row p: y_p - y_{t*}; the row of t* itself is zero.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(t, t);
    for (int p = 1; p <= t; ++p) {
      if (p == ts) continue;
      a(p - 1, p - 1) = 1.0;
      a(p - 1, ts - 1) = -1.0;
    }
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(s.k_target, t);
    for (int p = 1; p <= t; ++p) {
      const int r = p - ts;
      b(r - lo, p - 1) = 1.0 / observed[r - lo];
    }
    s.extract.push_back(std::move(a));
    s.aggregate.push_back(std::move(b));
  }
  for (int r = lo; r <= hi; ++r) s.labels.push_back(std::to_string(r));
  refresh_degenerate(s);
  return s;
}

AggregationScheme build_scheme_generic(const PanelData& panel, const GenericWeights& weights) {
  AggregationScheme s = skeleton(panel, SchemeKind::generic);
  const int t = s.n_periods;
  const int k = weights.k_target;
  if (k < 1) throw InputError("generic scheme: k_target must be at least 1");
  if (static_cast<int>(weights.units.size()) != panel.n_treated)
    throw InputError("generic scheme: weights given for " + std::to_string(weights.units.size()) +
                     " treated units, panel has " + std::to_string(panel.n_treated));
  if (!weights.labels.empty() && static_cast<int>(weights.labels.size()) != k)
    throw InputError("generic scheme: label count does not match k_target");
  s.k_target = k;
  for (int j = 0; j < panel.n_treated; ++j) {
    const int ts = s.treat_time[j];
    const auto& blocks = weights.units[j];
    const int kj = static_cast<int>(blocks.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(kj, t);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, kj);
    for (int row = 0; row < kj; ++row) {
      const BlockWeights& block = blocks[row];
      const std::string where = "generic scheme: unit " + std::to_string(j) + ", block " + std::to_string(row);
      if (block.period < 1 || block.period > t) throw InputError(where + ": period out of range");
      if (block.period <= ts)
        throw InputError(where + ": period " + std::to_string(block.period) +
                         " is not after the unit's last pre-treatment period " + std::to_string(ts) +
                         " (use the pretrends scheme for pre-period contrasts)");
      if (std::holds_alternative<PreWeighting>(block.pre_weights)) {
        if (std::get<PreWeighting>(block.pre_weights) == PreWeighting::uniform)
          a.row(row).head(ts).setConstant(-1.0 / ts);
        else
          a(row, ts - 1) = -1.0;
      } else {
        const auto& nu = std::get<std::vector<double>>(block.pre_weights);
        if (static_cast<int>(nu.size()) != ts)
          throw InputError(where + ": expected " + std::to_string(ts) + " pre-period weights, got " +
                           std::to_string(nu.size()));
        const double total = std::accumulate(nu.begin(), nu.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-10)
          throw InputError(where + ": pre-period weights sum to " + std::to_string(total) + ", not 1");
        for (int p = 0; p < ts; ++p) a(row, p) = -nu[p];
      }
      a(row, block.period - 1) += 1.0;
      if (static_cast<int>(block.target_weights.size()) != k)
        throw InputError(where + ": expected " + std::to_string(k) + " target weights");
      for (int c = 0; c < k; ++c) b(c, row) = block.target_weights[c];
    }
    s.extract.push_back(std::move(a));
    s.aggregate.push_back(std::move(b));
  }
  if (weights.labels.empty()) {
    for (int c = 1; c <= k; ++c) s.labels.push_back("k" + std::to_string(c));
  } else {
    s.labels = weights.labels;
  }
  refresh_degenerate(s);
  return s;
}

std::vector<std::string> verify_scheme(const AggregationScheme& scheme) {
  std::vector<std::string> out;
  const auto n1 = static_cast<std::size_t>(scheme.n_treated());
  if (scheme.k_target < 1) out.push_back("k_target must be at least 1");
  if (scheme.aggregate.size() != n1) out.push_back("aggregation block count differs from extraction block count");
  if (scheme.treat_time.size() != n1) out.push_back("treat_time count differs from block count");
  if (scheme.degenerate.size() != n1) out.push_back("degenerate set mismatch: wrong number of per-unit sets");
  if (static_cast<int>(scheme.labels.size()) != scheme.k_target) out.push_back("label count differs from k_target");
  if (!out.empty()) return out;

  bool conformable = true;
  for (std::size_t j = 0; j < n1; ++j) {
    const auto& a = scheme.extract[j];
    const auto& b = scheme.aggregate[j];
    const std::string unit = "unit " + std::to_string(j);
    if (a.cols() != scheme.n_periods) {
      out.push_back(unit + ": extraction matrix has " + std::to_string(a.cols()) + " columns, expected " +
                    std::to_string(scheme.n_periods));
      conformable = false;
    }
    if (b.rows() != scheme.k_target || b.cols() != a.rows()) {
      out.push_back(unit + ": aggregation matrix is " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ", expected " + std::to_string(scheme.k_target) + "x" +
                    std::to_string(a.rows()));
      conformable = false;
    }
  }
  if (!conformable) return out;

  std::vector<int> count(scheme.k_target, 0);
  for (std::size_t j = 0; j < n1; ++j) {
    const Eigen::MatrixXd c = scheme.contribution(static_cast<int>(j));
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      const double sum = c.row(r).sum();
      if (std::abs(sum) > 1e-10) {
        std::ostringstream msg;
        msg << "row sum of (unit " << j << ", row " << r << ") is " << sum << ", expected 0";
        out.push_back(msg.str());
      }
    }
    const auto zeros = zero_rows(c);
    if (zeros != scheme.degenerate[j]) out.push_back("degenerate set mismatch for unit " + std::to_string(j));
    for (int s : zeros) ++count[s];
  }
  std::vector<int> global;
  for (int s = 0; s < scheme.k_target; ++s)
    if (count[s] == static_cast<int>(n1)) global.push_back(s);
  if (global != scheme.degenerate_global) out.push_back("degenerate set mismatch (global)");
  return out;
}

void check_compatible(const PanelData& panel, const AggregationScheme& scheme) {
  if (scheme.n_periods != panel.n_periods())
    throw InputError("scheme built for " + std::to_string(scheme.n_periods) + " periods, panel has " +
                     std::to_string(panel.n_periods()));
  if (scheme.n_treated() != panel.n_treated)
    throw InputError("scheme built for " + std::to_string(scheme.n_treated()) + " treated units, panel has " +
                     std::to_string(panel.n_treated));
  for (int j = 0; j < panel.n_treated; ++j)
    if (scheme.treat_time[j] != panel.treat_time[j])
      throw InputError("scheme treatment time of unit " + std::to_string(j) + " does not match the panel");
  if (auto v = verify_scheme(scheme); !v.empty()) throw InputError("invalid scheme: " + v.front());
}

const char* to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::att: return "att";
    case SchemeKind::event_study: return "event_study";
    case SchemeKind::pretrends: return "pretrends";
    case SchemeKind::generic: return "generic";
  }
  return "generic";
}

SchemeKind scheme_kind_from_string(const std::string& name) {
  if (name == "att") return SchemeKind::att;
  if (name == "event_study") return SchemeKind::event_study;
  if (name == "pretrends") return SchemeKind::pretrends;
  if (name == "generic") return SchemeKind::generic;
  throw InputError("unknown scheme '" + name + "' (expected att, event_study, pretrends or generic)");
}

}  // namespace fewtreat

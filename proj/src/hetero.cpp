#include "fewtreat/hetero.hpp"

#include "fewtreat/error.hpp"
#include "fewtreat/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fewtreat {

namespace {

Eigen::MatrixXd active_columns(const Eigen::MatrixXd& m, const std::vector<int>& active) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t c = 0; c < active.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(active[c]);
  return out;
}

Eigen::VectorXd restrict(const Eigen::VectorXd& v, const std::vector<int>& active) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(active.size()));
  for (std::size_t c = 0; c < active.size(); ++c) out(static_cast<Eigen::Index>(c)) = v(active[c]);
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1e-6 x median singular value of the square root of the pooled covariance.
double default_floor(const Eigen::MatrixXd& w) {
  if (w.cols() == 0 || w.rows() == 0) return 1e-6;
  const Eigen::MatrixXd pooled = (w.transpose() * w) / static_cast<double>(w.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(pooled, Eigen::EigenvaluesOnly);
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
    roots.push_back(std::sqrt(std::max(0.0, solver.eigenvalues()(i))));
  const double floor = 1e-6 * median(roots);
  // All-zero residuals carry no scale; any positive floor works.
  return floor > 0.0 ? floor : 1e-6;
}

double squared_error(const Eigen::MatrixXd& w, const std::vector<Eigen::MatrixXd>& model) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    const Eigen::VectorXd r = w.row(i).transpose();
    total += (r * r.transpose() - model[static_cast<std::size_t>(i)]).squaredNorm();
  }
  return total;
}

void check_sizes(const std::vector<double>& z) {
  for (double v : z)
    if (!(v > 0.0)) throw InputError("scale model: sizes must be positive, got " + std::to_string(v));
}

void fit_panel_agg(UnitScaleModel& unit, const Eigen::MatrixXd& w, const PanelData& panel) {
  const int n0 = static_cast<int>(w.rows());
  const int m = unit.dim();
  Eigen::VectorXd x(n0);
  for (int i = 0; i < n0; ++i) x(i) = 1.0 / panel.sizes(panel.n_treated + i, 0);
  const double x_mean = x.mean();
  const Eigen::VectorXd dx = x.array() - x_mean;
  const double sxx = dx.squaredNorm();
  if (!(sxx > 1e-24 * x.squaredNorm()))
    throw InputError(
        "panel_agg: all control sizes are identical, so the size-free and size-scaled variance "
        "components are not separately identified; use the identity model instead");
  // Entrywise least squares of w_i w_i^T on (1, 1/Z_i).
  const Eigen::MatrixXd mean_outer = (w.transpose() * w) / static_cast<double>(n0);
  const Eigen::MatrixXd cross = w.transpose() * dx.asDiagonal() * w;
  const Eigen::MatrixXd slope = cross / sxx;
  const Eigen::MatrixXd intercept = mean_outer - x_mean * slope;
  unit.size_loading = linalg::project_psd(slope);
  unit.base = linalg::project_psd(intercept);
  unit.iterations = 1;
  (void)m;
}

void fit_repeated_cs(UnitScaleModel& unit, const Eigen::MatrixXd& w, const PanelData& panel,
                     const AggregationScheme& scheme, int j) {
  const int n0 = static_cast<int>(w.rows());
  const int m = unit.dim();
  const int ts = scheme.treat_time[j];
  const Eigen::MatrixXd& b = scheme.aggregate[j];
  const int kj = static_cast<int>(b.cols());

  // Pre-period block shares Z_{t*}; post block k uses Z_{t*+k}.
  const Eigen::VectorXd pre = restrict(b * Eigen::VectorXd::Ones(kj), unit.active);
  unit.pattern.push_back(pre * pre.transpose());
  unit.pattern_period.push_back(ts - 1);
  for (int k = 1; k <= kj; ++k) {
    const Eigen::VectorXd col = restrict(b.col(k - 1), unit.active);
    unit.pattern.push_back(col * col.transpose());
    unit.pattern_period.push_back(ts + k - 1);
  }
  const int n_loadings = static_cast<int>(unit.pattern.size());
  const int n_base = m * (m + 1) / 2;
  const int p = n_base + n_loadings;
  const int eq_per_unit = n_base;
  if (n0 * eq_per_unit < p)
    throw InputError("repeated_cs: " + std::to_string(n0) + " controls are too few to fit " +
                     std::to_string(p) + " parameters");

  // Frobenius objective over the upper triangle, off-diagonal entries weighted sqrt(2).
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n0) * eq_per_unit, p);
  Eigen::VectorXd target(static_cast<Eigen::Index>(n0) * eq_per_unit);
  for (int i = 0; i < n0; ++i) {
    const auto z = unit_sizes(FittedHetero{HeteroKind::repeated_cs, scheme.k_target, {}}, panel,
                              panel.n_treated + i);
    int row = i * eq_per_unit;
    int entry = 0;
    for (int a = 0; a < m; ++a) {
      for (int c = a; c < m; ++c, ++row, ++entry) {
        const double weight = a == c ? 1.0 : std::sqrt(2.0);
        design(row, entry) = weight;
        for (int r = 0; r < n_loadings; ++r) {
          const double zr = z.size() == 1 ? z[0] : z[static_cast<std::size_t>(unit.pattern_period[r])];
          design(row, n_base + r) = weight * unit.pattern[r](a, c) / zr;
        }
        target(row) = weight * w(i, a) * w(i, c);
      }
    }
  }
  const Eigen::VectorXd norms = design.colwise().norm().transpose();
  for (int c = 0; c < p; ++c)
    if (norms(c) > 0.0) design.col(c) /= norms(c);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < p)
    throw InputError(
        "repeated_cs: variance parameters are not separately identified from these sizes; "
        "use the identity or panel_agg model");
  Eigen::VectorXd coef = qr.solve(target);
  for (int c = 0; c < p; ++c)
    if (norms(c) > 0.0) coef(c) /= norms(c);

  Eigen::MatrixXd base(m, m);
  int entry = 0;
  for (int a = 0; a < m; ++a)
    for (int c = a; c < m; ++c, ++entry) base(a, c) = base(c, a) = coef(entry);
  unit.base = linalg::project_psd(base);
  unit.period_loading = coef.tail(n_loadings).cwiseMax(0.0);
  unit.iterations = 1;
}

}  // namespace

std::vector<double> unit_sizes(const FittedHetero& fitted, const PanelData& panel, int unit) {
  if (fitted.kind == HeteroKind::identity) return {};
  switch (panel.size_layout) {
    case SizeLayout::none:
      throw InputError(std::string(to_string(fitted.kind)) + " model requires a size column in the panel");
    case SizeLayout::per_unit: return {panel.sizes(unit, 0)};
    case SizeLayout::per_period:
      if (fitted.kind == HeteroKind::panel_agg)
        throw InputError("panel_agg model requires one size per unit; the size column varies over periods");
      {
        std::vector<double> z(static_cast<std::size_t>(panel.n_periods()));
        for (int t = 0; t < panel.n_periods(); ++t) z[static_cast<std::size_t>(t)] = panel.sizes(unit, t);
        return z;
      }
  }
  return {};
}

Eigen::MatrixXd scale_variance(const FittedHetero& fitted, int j, std::span<const double> z) {
  const UnitScaleModel& unit = fitted.units.at(static_cast<std::size_t>(j));
  const int m = unit.dim();
  switch (fitted.kind) {
    case HeteroKind::identity: return Eigen::MatrixXd::Identity(m, m);
    case HeteroKind::panel_agg: {
      if (z.empty()) throw InputError("panel_agg scale needs a size");
      check_sizes({z.begin(), z.end()});
      return unit.base + unit.size_loading / z[0];
    }
    case HeteroKind::repeated_cs: {
      if (z.empty()) throw InputError("repeated_cs scale needs sizes");
      check_sizes({z.begin(), z.end()});
      Eigen::MatrixXd v = unit.base;
      for (std::size_t r = 0; r < unit.pattern.size(); ++r) {
        const auto period = static_cast<std::size_t>(unit.pattern_period[r]);
        if (z.size() != 1 && period >= z.size()) throw InputError("repeated_cs scale: too few per-period sizes");
        const double zr = z.size() == 1 ? z[0] : z[period];
        v += unit.period_loading(static_cast<Eigen::Index>(r)) / zr * unit.pattern[r];
      }
      return v;
    }
  }
  return Eigen::MatrixXd::Identity(m, m);
}

Eigen::MatrixXd scale_matrix(const FittedHetero& fitted, int j, std::span<const double> z) {
  if (fitted.kind == HeteroKind::identity) return scale_variance(fitted, j, z);
  return linalg::sqrt_psd(scale_variance(fitted, j, z));
}

Eigen::MatrixXd scale_matrix(const FittedHetero& fitted, int j, double z) {
  return scale_matrix(fitted, j, std::span<const double>(&z, 1));
}

FittedHetero fit(const HeteroSpec& spec, const ControlResiduals& residuals, const PanelData& panel,
                 const AggregationScheme& scheme) {
  if (spec.sv_floor && !(*spec.sv_floor >= 0.0)) throw InputError("sv_floor must be nonnegative");
  if (residuals.n_treated() != panel.n_treated || residuals.n_control() != panel.n_control())
    throw InputError("scale model: residuals do not match the panel");
  if (spec.kind == HeteroKind::repeated_cs && scheme.kind != SchemeKind::att &&
      scheme.kind != SchemeKind::event_study)
    throw InputError(std::string("unsupported combination: repeated_cs with the ") + to_string(scheme.kind) +
                     " scheme (repeated_cs needs the att or event_study scheme)");

  FittedHetero fitted;
  fitted.kind = spec.kind;
  fitted.k_target = residuals.k_target;
  if (spec.kind != HeteroKind::identity) {
    unit_sizes(fitted, panel, 0);  // layout checks
    if (spec.kind == HeteroKind::panel_agg && panel.n_control() < 2)
      throw InputError("panel_agg needs at least two controls");
  }

  for (int j = 0; j < residuals.n_treated(); ++j) {
    UnitScaleModel unit;
    const auto& deg = residuals.degenerate[j];
    for (int s = 0; s < residuals.k_target; ++s)
      if (!std::binary_search(deg.begin(), deg.end(), s)) unit.active.push_back(s);
    const int m = unit.dim();
    const Eigen::MatrixXd w = active_columns(residuals.by_treated[j], unit.active);
    unit.sv_floor = spec.sv_floor ? *spec.sv_floor : default_floor(w);

    if (spec.kind == HeteroKind::identity || m == 0) {
      unit.base = Eigen::MatrixXd::Identity(m, m);
      fitted.units.push_back(std::move(unit));
      continue;
    }
    if (spec.kind == HeteroKind::panel_agg) {
      unit.size_loading = Eigen::MatrixXd::Zero(m, m);
      fit_panel_agg(unit, w, panel);
    } else {
      fit_repeated_cs(unit, w, panel, scheme, j);
    }
    fitted.units.push_back(std::move(unit));
    UnitScaleModel& stored = fitted.units.back();

    // Ridge the base so every control scale clears the floor.
    std::vector<Eigen::MatrixXd> model;
    model.reserve(static_cast<std::size_t>(w.rows()));
    double lowest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < panel.n_control(); ++i) {
      const auto z = unit_sizes(fitted, panel, panel.n_treated + i);
      model.push_back(scale_variance(fitted, j, z));
      lowest = std::min(lowest, linalg::min_eigenvalue(model.back()));
    }
    const double target = stored.sv_floor * stored.sv_floor;
    if (lowest < target) {
      stored.ridge = (target - lowest) * (1.0 + 1e-9) + 1e-300;
      stored.base += stored.ridge * Eigen::MatrixXd::Identity(m, m);
      for (auto& v : model) v += stored.ridge * Eigen::MatrixXd::Identity(m, m);
    }
    stored.objective = squared_error(w, model);
  }
  return fitted;
}

NormalizedResiduals normalize(const ControlResiduals& residuals, const FittedHetero& fitted,
                              const PanelData& panel) {
  if (static_cast<int>(fitted.units.size()) != residuals.n_treated())
    throw InputError("normalize: fitted model does not match residuals");
  NormalizedResiduals out;
  out.k_target = residuals.k_target;
  out.degenerate_global = residuals.degenerate_global;
  out.scheme_fingerprint = residuals.scheme_fingerprint;
  for (int j = 0; j < residuals.n_treated(); ++j) {
    const auto& active = fitted.units[j].active;
    Eigen::MatrixXd w = active_columns(residuals.by_treated[j], active);
    if (fitted.kind != HeteroKind::identity && !active.empty()) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const auto z = unit_sizes(fitted, panel, panel.n_treated + static_cast<int>(i));
        const Eigen::MatrixXd inv = linalg::inverse_sqrt_pd(scale_variance(fitted, j, z));
        w.row(i) = (inv * w.row(i).transpose()).transpose();
      }
    }
    if (!w.allFinite()) throw InvariantError("normalized residuals are not finite");
    out.by_treated.push_back(std::move(w));
    out.active.push_back(active);
  }
  return out;
}

const char* to_string(HeteroKind kind) {
  switch (kind) {
    case HeteroKind::identity: return "identity";
    case HeteroKind::panel_agg: return "panel_agg";
    case HeteroKind::repeated_cs: return "repeated_cs";
  }
  return "identity";
}

HeteroKind hetero_kind_from_string(const std::string& name) {
  if (name == "identity") return HeteroKind::identity;
  if (name == "panel_agg") return HeteroKind::panel_agg;
  if (name == "repeated_cs") return HeteroKind::repeated_cs;
  throw InputError("unknown heteroskedasticity model '" + name + "' (expected identity, panel_agg or repeated_cs)");
}

}  // namespace fewtreat

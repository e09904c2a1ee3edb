#include "fewtreat/io.hpp"

#include "csv.hpp"
#include "fewtreat/error.hpp"

#include <charconv>
#include <cstdio>
#include <ostream>

namespace fewtreat {

using nlohmann::json;

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw InvariantError("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fingerprint(const json& document) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(document.dump())));
  return buf;
}

std::string fingerprint(const AggregationScheme& scheme) { return fingerprint(json(scheme)); }
std::string fingerprint(const FittedHetero& fitted) { return fingerprint(json(fitted)); }

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols_if_empty) {
  if (!j.is_array()) throw InputError("matrix must be an array of rows");
  if (j.empty()) return Eigen::MatrixXd(0, cols_if_empty);
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) throw InputError("matrix must be an array of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw InputError("matrix rows must all have " + std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw InputError("vector must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

void to_json(json& j, const AggregationScheme& s) {
  json extract = json::array();
  json aggregate = json::array();
  for (const auto& a : s.extract) extract.push_back(matrix_to_json(a));
  for (const auto& b : s.aggregate) aggregate.push_back(matrix_to_json(b));
  j = json{{"kind", to_string(s.kind)},
           {"k_target", s.k_target},
           {"n_periods", s.n_periods},
           {"treat_time", s.treat_time},
           {"extract", extract},
           {"aggregate", aggregate},
           {"degenerate", s.degenerate},
           {"degenerate_global", s.degenerate_global},
           {"labels", s.labels}};
}

void from_json(const json& j, AggregationScheme& s) {
  try {
    s.kind = scheme_kind_from_string(j.at("kind").get<std::string>());
    s.k_target = j.at("k_target").get<int>();
    s.n_periods = j.at("n_periods").get<int>();
    s.treat_time = j.at("treat_time").get<std::vector<int>>();
    s.extract.clear();
    s.aggregate.clear();
    for (const auto& a : j.at("extract")) s.extract.push_back(matrix_from_json(a, s.n_periods));
    for (std::size_t u = 0; u < j.at("aggregate").size(); ++u) {
      const auto rows_hint = u < s.extract.size() ? s.extract[u].rows() : 0;
      Eigen::MatrixXd b = matrix_from_json(j.at("aggregate")[u], rows_hint);
      if (b.rows() == 0 && s.k_target > 0) b.resize(s.k_target, rows_hint);
      s.aggregate.push_back(std::move(b));
    }
    s.degenerate = j.at("degenerate").get<std::vector<std::vector<int>>>();
    s.degenerate_global = j.at("degenerate_global").get<std::vector<int>>();
    s.labels = j.at("labels").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw InputError(std::string("scheme document: ") + e.what());
  }
}

void to_json(json& j, const GenericWeights& w) {
  json units = json::array();
  for (const auto& blocks : w.units) {
    json arr = json::array();
    for (const auto& b : blocks) {
      json pre;
      if (std::holds_alternative<PreWeighting>(b.pre_weights))
        pre = std::get<PreWeighting>(b.pre_weights) == PreWeighting::uniform ? "uniform" : "last";
      else
        pre = std::get<std::vector<double>>(b.pre_weights);
      arr.push_back({{"period", b.period}, {"pre_weights", pre}, {"target_weights", b.target_weights}});
    }
    units.push_back(std::move(arr));
  }
  j = json{{"k_target", w.k_target}, {"labels", w.labels}, {"units", units}};
}

void from_json(const json& j, GenericWeights& w) {
  try {
    w.k_target = j.at("k_target").get<int>();
    w.labels = j.value("labels", std::vector<std::string>{});
    w.units.clear();
    for (const auto& unit : j.at("units")) {
      std::vector<BlockWeights> blocks;
      for (const auto& jb : unit) {
        BlockWeights b;
        b.period = jb.at("period").get<int>();
        const json pre = jb.value("pre_weights", json("uniform"));
        if (pre.is_string()) {
          const auto name = pre.get<std::string>();
          if (name == "uniform") b.pre_weights = PreWeighting::uniform;
          else if (name == "last") b.pre_weights = PreWeighting::last;
          else throw InputError("pre_weights must be \"uniform\", \"last\" or an array");
        } else {
          b.pre_weights = pre.get<std::vector<double>>();
        }
        b.target_weights = jb.at("target_weights").get<std::vector<double>>();
        blocks.push_back(std::move(b));
      }
      w.units.push_back(std::move(blocks));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("weights document: ") + e.what());
  }
}

void to_json(json& j, const FittedHetero& f) {
  json units = json::array();
  for (const auto& u : f.units) {
    json patterns = json::array();
    for (const auto& p : u.pattern) patterns.push_back(matrix_to_json(p));
    units.push_back({{"active", u.active},
                     {"base", matrix_to_json(u.base)},
                     {"size_loading", matrix_to_json(u.size_loading)},
                     {"period_loading", vector_to_json(u.period_loading)},
                     {"pattern", patterns},
                     {"pattern_period", u.pattern_period},
                     {"ridge", u.ridge},
                     {"sv_floor", u.sv_floor},
                     {"objective", u.objective},
                     {"iterations", u.iterations}});
  }
  j = json{{"kind", to_string(f.kind)}, {"k_target", f.k_target}, {"units", units}};
}

void to_json(json& j, const EstimateVector& e) {
  json rows = json::array();
  for (Eigen::Index s = 0; s < e.values.size(); ++s)
    rows.push_back({{"label", e.labels.at(static_cast<std::size_t>(s))}, {"value", e.values(s)}});
  j = json{{"estimates", rows}, {"scheme_fingerprint", e.scheme_fingerprint}};
}

void to_json(json& j, const ConfidenceBand& b) {
  json rows = json::array();
  for (int s = 0; s < b.dim(); ++s)
    rows.push_back({{"label", b.labels.at(static_cast<std::size_t>(s))},
                    {"estimate", b.estimate(s)},
                    {"lower", b.lower(s)},
                    {"upper", b.upper(s)},
                    {"scale", b.scale(s)}});
  j = json{{"level", b.level},
           {"critical_value", b.critical_value},
           {"normalizer", to_string(b.normalizer)},
           {"coordinates", rows}};
}

namespace {

json size_rule_to_json(const SizeRule& r) {
  if (r.kind == SizeRule::Kind::fixed) return r.value;
  return json{{"uniform_int", {r.low, r.high}}};
}

SizeRule size_rule_from_json(const json& j) {
  SizeRule r;
  if (j.is_number()) {
    r.value = j.get<double>();
    return r;
  }
  const auto range = j.at("uniform_int").get<std::vector<int>>();
  if (range.size() != 2) throw InputError("uniform_int size rule needs [low, high]");
  r.kind = SizeRule::Kind::uniform_int;
  r.low = range[0];
  r.high = range[1];
  return r;
}

Eigen::MatrixXd cov_from_json(const json& j, int t) {
  if (j.is_number()) return j.get<double>() * Eigen::MatrixXd::Identity(t, t);
  return matrix_from_json(j, t);
}

}  // namespace

void to_json(json& j, const DgpConfig& c) {
  j = json{{"n_treated", c.n_treated},
           {"n_control", c.n_control},
           {"n_periods", c.n_periods},
           {"treat_time", c.treat_time},
           {"effects", matrix_to_json(c.effects)},
           {"fixed_effects", c.fixed_effects == FixedEffectRule::gaussian ? "gaussian" : "zero"},
           {"group_cov", matrix_to_json(c.group_cov)},
           {"idio_cov", matrix_to_json(c.idio_cov)},
           {"treated_size", size_rule_to_json(c.treated_size)},
           {"control_size", size_rule_to_json(c.control_size)},
           {"sizes_by_period", c.sizes_by_period},
           {"shocks", c.shocks == ShockFamily::normal ? "normal" : "scaled_t"},
           {"t_df", c.t_df},
           {"seed", c.seed}};
}

void from_json(const json& j, DgpConfig& c) {
  try {
    c.n_treated = j.at("n_treated").get<int>();
    c.n_control = j.at("n_control").get<int>();
    c.n_periods = j.at("n_periods").get<int>();
    c.treat_time = j.at("treat_time").get<std::vector<int>>();
    const int t = c.n_periods;
    const json effects = j.value("effects", json(0.0));
    if (effects.is_number()) {
      c.effects = Eigen::MatrixXd::Zero(c.n_treated, t);
      for (int u = 0; u < c.n_treated && u < static_cast<int>(c.treat_time.size()); ++u)
        for (int p = std::max(0, c.treat_time[u]); p < t; ++p) c.effects(u, p) = effects.get<double>();
    } else {
      c.effects = matrix_from_json(effects, t);
    }
    const auto fe = j.value("fixed_effects", std::string("gaussian"));
    if (fe != "gaussian" && fe != "zero") throw InputError("fixed_effects must be gaussian or zero");
    c.fixed_effects = fe == "gaussian" ? FixedEffectRule::gaussian : FixedEffectRule::zero;
    c.group_cov = cov_from_json(j.value("group_cov", json(1.0)), t);
    c.idio_cov = cov_from_json(j.value("idio_cov", json(0.0)), t);
    c.treated_size = size_rule_from_json(j.value("treated_size", json(1.0)));
    c.control_size = size_rule_from_json(j.value("control_size", json(1.0)));
    c.sizes_by_period = j.value("sizes_by_period", false);
    const auto shocks = j.value("shocks", std::string("normal"));
    if (shocks != "normal" && shocks != "scaled_t") throw InputError("shocks must be normal or scaled_t");
    c.shocks = shocks == "normal" ? ShockFamily::normal : ShockFamily::scaled_t;
    c.t_df = j.value("t_df", 5);
    c.seed = j.value("seed", std::uint64_t{1});
  } catch (const json::exception& e) {
    throw InputError(std::string("dgp config: ") + e.what());
  }
}

json to_json(const DgpConfig& config, const CoverageOptions& o) {
  json options = {{"scheme", to_string(o.scheme)},
                  {"hetero", to_string(o.hetero.kind)},
                  {"alpha", o.alpha},
                  {"normalizer", to_string(o.normalizer)},
                  {"replications", o.replications},
                  {"draws", o.draws}};
  if (o.hetero.sv_floor) options["sv_floor"] = *o.hetero.sv_floor;
  if (o.weights) options["weights"] = *o.weights;
  return json{{"dgp", config}, {"options", options}};
}

void to_json(json& j, const CoverageReport& r) {
  j = json{{"replications", r.replications},
           {"level", r.level},
           {"labels", r.labels},
           {"truth", vector_to_json(r.truth)},
           {"coverage", vector_to_json(r.coverage)},
           {"coverage_se", vector_to_json(r.coverage_se)},
           {"simultaneous_coverage", r.simultaneous},
           {"simultaneous_se", r.simultaneous_se},
           {"mean_estimate", vector_to_json(r.mean_estimate)},
           {"estimate_se", vector_to_json(r.estimate_se)},
           {"mean_width", vector_to_json(r.mean_width)},
           {"config", json::parse(r.config_echo.empty() ? "{}" : r.config_echo)}};
}

void write_estimates_csv(std::ostream& out, const EstimateVector& e) {
  csv::write_row(out, {"label", "estimate", "scheme_fingerprint"});
  for (Eigen::Index s = 0; s < e.values.size(); ++s)
    csv::write_row(out, {e.labels.at(static_cast<std::size_t>(s)), format_double(e.values(s)), e.scheme_fingerprint});
}

void write_band_csv(std::ostream& out, const ConfidenceBand& b, std::uint64_t seed,
                    const std::string& config_fingerprint) {
  csv::write_row(out, {"label", "estimate", "lower", "upper", "level", "critical_value", "normalizer", "seed",
                       "config_fingerprint"});
  for (int s = 0; s < b.dim(); ++s)
    csv::write_row(out, {b.labels.at(static_cast<std::size_t>(s)), format_double(b.estimate(s)),
                         format_double(b.lower(s)), format_double(b.upper(s)), format_double(b.level),
                         format_double(b.critical_value), to_string(b.normalizer), std::to_string(seed),
                         config_fingerprint});
}

void write_draws_csv(std::ostream& out, const ResampleDraws& d, const std::vector<std::string>& labels) {
  std::vector<std::string> header = {"draw"};
  for (int s = 0; s < d.dim(); ++s)
    header.push_back(s < static_cast<int>(labels.size()) ? labels[static_cast<std::size_t>(s)] : std::to_string(s));
  header.push_back("seed");
  csv::write_row(out, header);
  for (int b = 0; b < d.count(); ++b) {
    std::vector<std::string> row = {std::to_string(b)};
    for (int s = 0; s < d.dim(); ++s) row.push_back(format_double(d.draws(b, s)));
    row.push_back(std::to_string(d.seed));
    csv::write_row(out, row);
  }
}

void write_records_csv(std::ostream& out, const CoverageReport& r) {
  csv::write_row(out, {"replication", "label", "truth", "estimate", "lower", "upper", "covered", "covered_all"});
  for (std::size_t rep = 0; rep < r.records.size(); ++rep) {
    const auto& rec = r.records[rep];
    for (Eigen::Index s = 0; s < rec.estimate.size(); ++s)
      csv::write_row(out, {std::to_string(rep), r.labels.at(static_cast<std::size_t>(s)), format_double(r.truth(s)),
                           format_double(rec.estimate(s)), format_double(rec.lower(s)), format_double(rec.upper(s)),
                           rec.covered[static_cast<std::size_t>(s)] ? "1" : "0", rec.covered_all ? "1" : "0"});
  }
}

}  // namespace fewtreat

#include "cli.hpp"

#include "fewtreat/confidence.hpp"
#include "fewtreat/design.hpp"
#include "fewtreat/error.hpp"
#include "fewtreat/estimator.hpp"
#include "fewtreat/hetero.hpp"
#include "fewtreat/io.hpp"
#include "fewtreat/montecarlo.hpp"
#include "fewtreat/panel.hpp"
#include "fewtreat/resample.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fewtreat::cli {

namespace {

using nlohmann::json;

/// Raw flag values; each is applied only when the flag was given.
struct Flags {
  std::string input, scheme, weights, hetero, normalizer, output, format, export_draws, config, records;
  double alpha = 0.05;
  double sv_floor = 0.0;
  int draws = 10000;
  int replications = 2000;
  std::uint64_t seed = 0;
  std::uint64_t rep = 0;
};

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(std::string("cannot open ") + what + " file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string(what) + " file " + path + " is not valid JSON: " + e.what());
  }
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open input file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Defaults, then config file entries, then flags given on the command line.
json resolve(const std::string& command, const Flags& f, const CLI::App& sub) {
  json cfg = {{"scheme", "att"}, {"hetero", "identity"}, {"alpha", 0.05},    {"B", 10000},
              {"seed", 0},       {"normalizer", "studentized"}, {"format", "csv"}, {"R", 2000},
              {"rep", 0}};
  if (command == "coverage") cfg["B"] = 2000;
  auto given = [&](const char* name) {
    const CLI::Option* opt = sub.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--config")) {
    json file = read_json_file(f.config, "config");
    if (!file.is_object()) throw InputError("config file must hold a JSON object");
    if ((command == "simulate" || command == "coverage") && file.contains("n_treated") && !file.contains("dgp"))
      file = json{{"dgp", file}};
    for (auto& [key, value] : file.items()) cfg[key] = value;
  }
  if (given("--input")) cfg["input"] = f.input;
  if (given("--scheme")) cfg["scheme"] = f.scheme;
  if (given("--weights")) cfg["weights"] = f.weights;
  if (given("--hetero")) cfg["hetero"] = f.hetero;
  if (given("--alpha")) cfg["alpha"] = f.alpha;
  if (given("--B")) cfg["B"] = f.draws;
  if (given("--R")) cfg["R"] = f.replications;
  if (given("--seed")) cfg["seed"] = f.seed;
  if (given("--rep")) cfg["rep"] = f.rep;
  if (given("--normalizer")) cfg["normalizer"] = f.normalizer;
  if (given("--sv-floor")) cfg["sv_floor"] = f.sv_floor;
  if (given("--output")) cfg["output"] = f.output;
  if (given("--format")) cfg["format"] = f.format;
  if (given("--export-draws")) cfg["export_draws"] = f.export_draws;
  if (given("--records")) cfg["records"] = f.records;
  cfg["command"] = command;
  return cfg;
}

template <class T>
T get(const json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("config entry '") + key + "' is missing or has the wrong type");
  }
}

/// Fingerprint over everything that determines the numbers: the resolved
/// config minus output locations, plus the bytes of every input file.
std::string config_fingerprint(json cfg) {
  for (const char* key : {"output", "format", "export_draws", "records"}) cfg.erase(key);
  if (cfg.contains("input")) cfg["input_hash"] = fnv1a64(read_file_bytes(cfg["input"].get<std::string>()));
  if (cfg.contains("weights")) cfg["weights_hash"] = fnv1a64(read_file_bytes(cfg["weights"].get<std::string>()));
  cfg.erase("input");
  cfg.erase("weights");
  return fingerprint(cfg);
}

bool header_has(const std::string& path, const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  if (!std::getline(in, line)) return false;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  std::istringstream cells(line);
  std::string cell;
  while (std::getline(cells, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    if (cell == name) return true;
  }
  return false;
}

/// A column named "size" is used automatically unless the config names another.
ColumnMap columns_from(const json& cfg) {
  ColumnMap map;
  if (cfg.contains("input") && header_has(cfg["input"].get<std::string>(), "size")) map.size = "size";
  if (!cfg.contains("columns")) return map;
  const json& c = cfg["columns"];
  map.unit = c.value("unit", map.unit);
  map.period = c.value("period", map.period);
  map.outcome = c.value("outcome", map.outcome);
  map.treat_time = c.value("treat_time", map.treat_time);
  map.size = c.value("size", map.size);
  const auto mode = c.value("size_mode", std::string("auto"));
  if (mode == "auto") map.size_mode = SizeColumnMode::automatic;
  else if (mode == "per_unit") map.size_mode = SizeColumnMode::per_unit;
  else if (mode == "per_period") map.size_mode = SizeColumnMode::per_period;
  else throw InputError("columns.size_mode must be auto, per_unit or per_period");
  return map;
}

std::optional<GenericWeights> weights_from(const json& cfg) {
  if (!cfg.contains("weights")) return std::nullopt;
  return read_json_file(cfg["weights"].get<std::string>(), "weights").get<GenericWeights>();
}

/// Writes `text` to the configured output path, or to `out`.
void emit(const json& cfg, const std::string& text, std::ostream& out) {
  if (!cfg.contains("output")) {
    out << text;
    return;
  }
  const auto path = cfg["output"].get<std::string>();
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError("cannot write output file " + path);
  file << text;
}

std::string output_format(const json& cfg) {
  const auto format = get<std::string>(cfg, "format");
  if (format != "csv" && format != "json") throw InputError("--format must be csv or json");
  return format;
}

struct Pipeline {
  PanelData panel;
  AggregationScheme scheme;
  EstimateVector estimate;
};

Pipeline load_and_estimate(const json& cfg) {
  if (!cfg.contains("input")) throw InputError("--input is required");
  Pipeline p;
  p.panel = load_panel(get<std::string>(cfg, "input"), columns_from(cfg));
  const SchemeKind kind = scheme_kind_from_string(get<std::string>(cfg, "scheme"));
  const auto weights = weights_from(cfg);
  if (weights && kind != SchemeKind::generic) throw InputError("--weights is only used with --scheme generic");
  p.scheme = build_scheme(kind, p.panel, weights);
  p.estimate = point_estimate(p.panel, p.scheme);
  return p;
}

int cmd_estimate(const json& cfg, std::ostream& out) {
  const std::string format = output_format(cfg);
  const Pipeline p = load_and_estimate(cfg);
  const std::string fp = config_fingerprint(cfg);
  std::ostringstream text;
  if (format == "json") {
    json doc = p.estimate;
    doc["config"] = cfg;
    doc["config_fingerprint"] = fp;
    doc["seed"] = cfg["seed"];
    doc["scheme"] = p.scheme;
    text << doc.dump(2) << '\n';
  } else {
    std::ostringstream body;
    write_estimates_csv(body, p.estimate);
    // Append provenance columns.
    std::istringstream lines(body.str());
    std::string line;
    bool header = true;
    while (std::getline(lines, line)) {
      text << line << (header ? ",seed,config_fingerprint" : "," + std::to_string(get<std::uint64_t>(cfg, "seed")) + "," + fp)
           << '\n';
      header = false;
    }
  }
  emit(cfg, text.str(), out);
  return kOk;
}

int cmd_infer(const json& cfg, std::ostream& out) {
  const std::string format = output_format(cfg);
  const Pipeline p = load_and_estimate(cfg);
  HeteroSpec spec;
  spec.kind = hetero_kind_from_string(get<std::string>(cfg, "hetero"));
  if (cfg.contains("sv_floor")) spec.sv_floor = get<double>(cfg, "sv_floor");
  const double alpha = get<double>(cfg, "alpha");
  const int b = get<int>(cfg, "B");
  const auto seed = get<std::uint64_t>(cfg, "seed");
  const Normalizer normalizer = normalizer_from_string(get<std::string>(cfg, "normalizer"));
  if (b < 1) throw InputError("--B must be at least 1");
  critical_rank(alpha, static_cast<std::size_t>(b));

  const ControlResiduals residuals = control_residuals(p.panel, p.scheme);
  const FittedHetero fitted = fit(spec, residuals, p.panel, p.scheme);
  const NormalizedResiduals normres = normalize(residuals, fitted, p.panel);
  const ResampleDraws draws = draw(normres, fitted, p.panel, b, seed);
  const ConfidenceBand band = uniform_band(p.estimate, draws, alpha, normalizer);
  const std::string fp = config_fingerprint(cfg);

  std::ostringstream text;
  if (format == "json") {
    json doc = band;
    doc["config"] = cfg;
    doc["config_fingerprint"] = fp;
    doc["seed"] = seed;
    doc["scheme_fingerprint"] = p.estimate.scheme_fingerprint;
    doc["hetero"] = fitted;
    text << doc.dump(2) << '\n';
  } else {
    write_band_csv(text, band, seed, fp);
  }
  emit(cfg, text.str(), out);

  if (cfg.contains("export_draws")) {
    const auto path = get<std::string>(cfg, "export_draws");
    std::ofstream file(path, std::ios::binary);
    if (!file) throw InputError("cannot write draws file " + path);
    write_draws_csv(file, draws, p.estimate.labels);
  }
  return kOk;
}

DgpConfig dgp_from(const json& cfg) {
  if (!cfg.contains("dgp")) throw InputError("a DGP config is required (--config with a \"dgp\" object)");
  DgpConfig dgp = cfg["dgp"].get<DgpConfig>();
  if (cfg.contains("seed") && cfg["seed"].get<std::uint64_t>() != 0) dgp.seed = cfg["seed"].get<std::uint64_t>();
  return dgp;
}

int cmd_simulate(json cfg, std::ostream& out) {
  const DgpConfig dgp = dgp_from(cfg);
  cfg["seed"] = dgp.seed;
  const SimulatedPanel sim = simulate_panel(dgp, get<std::uint64_t>(cfg, "rep"));
  std::ostringstream text;
  write_panel(sim.panel, text);
  emit(cfg, text.str(), out);
  return kOk;
}

int cmd_coverage(json cfg, std::ostream& out) {
  const DgpConfig dgp = dgp_from(cfg);
  cfg["seed"] = dgp.seed;
  CoverageOptions options;
  options.scheme = scheme_kind_from_string(get<std::string>(cfg, "scheme"));
  options.weights = weights_from(cfg);
  options.hetero.kind = hetero_kind_from_string(get<std::string>(cfg, "hetero"));
  if (cfg.contains("sv_floor")) options.hetero.sv_floor = get<double>(cfg, "sv_floor");
  options.alpha = get<double>(cfg, "alpha");
  options.normalizer = normalizer_from_string(get<std::string>(cfg, "normalizer"));
  options.replications = get<int>(cfg, "R");
  options.draws = get<int>(cfg, "B");
  const CoverageReport report = coverage_experiment(dgp, options);

  json doc = report;
  doc["config"] = cfg;
  doc["config_fingerprint"] = config_fingerprint(cfg);
  doc["seed"] = dgp.seed;
  emit(cfg, doc.dump(2) + "\n", out);
  if (cfg.contains("records")) {
    const auto path = get<std::string>(cfg, "records");
    std::ofstream file(path, std::ios::binary);
    if (!file) throw InputError("cannot write records file " + path);
    write_records_csv(file, report);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Difference-in-differences with few treated units: estimation and resampling inference"};
  app.name(args.empty() ? "fewtreat" : args[0]);
  app.require_subcommand(1);
  Flags f;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config; flags override its entries")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Random seed");
    sub->add_option("--output", f.output, "Output file (default: stdout)");
  };
  auto add_estimation = [&](CLI::App* sub) {
    sub->add_option("--input", f.input, "Panel CSV (unit, period, outcome, treat_time[, size])");
    sub->add_option("--scheme", f.scheme, "att | event_study | pretrends | generic")
        ->check(CLI::IsMember({"att", "event_study", "pretrends", "generic"}));
    sub->add_option("--weights", f.weights, "Weights JSON for the generic scheme")->check(CLI::ExistingFile);
    sub->add_option("--format", f.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  };
  auto add_inference = [&](CLI::App* sub) {
    sub->add_option("--hetero", f.hetero, "identity | panel_agg | repeated_cs")
        ->check(CLI::IsMember({"identity", "panel_agg", "repeated_cs"}));
    sub->add_option("--alpha", f.alpha, "1 - confidence level")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--B", f.draws, "Resampling draws")->check(CLI::PositiveNumber);
    sub->add_option("--normalizer", f.normalizer, "constant | studentized")
        ->check(CLI::IsMember({"constant", "studentized"}));
    sub->add_option("--sv-floor", f.sv_floor, "Floor on the smallest eigenvalue of fitted scale matrices")
        ->check(CLI::NonNegativeNumber);
  };

  CLI::App* estimate = app.add_subcommand("estimate", "Point estimates");
  add_common(estimate);
  add_estimation(estimate);

  CLI::App* infer = app.add_subcommand("infer", "Estimates with a uniform confidence band");
  add_common(infer);
  add_estimation(infer);
  add_inference(infer);
  infer->add_option("--export-draws", f.export_draws, "Write the resampled draws to this CSV");

  CLI::App* simulate = app.add_subcommand("simulate", "Simulate a panel from a DGP config");
  add_common(simulate);
  simulate->add_option("--rep", f.rep, "Replication index");

  CLI::App* coverage = app.add_subcommand("coverage", "Monte Carlo coverage experiment");
  add_common(coverage);
  coverage->add_option("--scheme", f.scheme, "att | event_study | pretrends | generic")
      ->check(CLI::IsMember({"att", "event_study", "pretrends", "generic"}));
  coverage->add_option("--weights", f.weights, "Weights JSON for the generic scheme")->check(CLI::ExistingFile);
  add_inference(coverage);
  coverage->add_option("--R", f.replications, "Replications")->check(CLI::PositiveNumber);
  coverage->add_option("--records", f.records, "Write per-replication records to this CSV");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    const json cfg = resolve(command, f, *sub);
    if (command == "estimate") return cmd_estimate(cfg, out);
    if (command == "infer") return cmd_infer(cfg, out);
    if (command == "simulate") return cmd_simulate(cfg, out);
    return cmd_coverage(cfg, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return kInputError;
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace fewtreat::cli

#pragma once

#include "fewtreat/confidence.hpp"
#include "fewtreat/design.hpp"
#include "fewtreat/estimator.hpp"
#include "fewtreat/hetero.hpp"
#include "fewtreat/montecarlo.hpp"
#include "fewtreat/resample.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace fewtreat {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

std::uint64_t fnv1a64(std::string_view bytes);

/// 16 hex digits of FNV-1a over the compact JSON dump (keys sorted).
std::string fingerprint(const nlohmann::json& document);
std::string fingerprint(const AggregationScheme& scheme);
std::string fingerprint(const FittedHetero& fitted);

/// Dense matrices as nested row-major arrays.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty = 0);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const AggregationScheme& scheme);
void from_json(const nlohmann::json& j, AggregationScheme& scheme);

/// Weights document for the generic scheme:
/// {"k_target": K, "labels": [...], "units": [[{"period": t, "pre_weights":
///  "uniform" | "last" | [nu...], "target_weights": [w...]}, ...], ...]}
void from_json(const nlohmann::json& j, GenericWeights& weights);
void to_json(nlohmann::json& j, const GenericWeights& weights);

void to_json(nlohmann::json& j, const FittedHetero& fitted);
void to_json(nlohmann::json& j, const EstimateVector& estimate);
void to_json(nlohmann::json& j, const ConfidenceBand& band);

void to_json(nlohmann::json& j, const DgpConfig& config);
void from_json(const nlohmann::json& j, DgpConfig& config);
nlohmann::json to_json(const DgpConfig& config, const CoverageOptions& options);

void to_json(nlohmann::json& j, const CoverageReport& report);

void write_estimates_csv(std::ostream& out, const EstimateVector& estimate);
/// Tidy band rows: label, estimate, lower, upper, plus level, critical value
/// and the provenance columns repeated on each row.
void write_band_csv(std::ostream& out, const ConfidenceBand& band, std::uint64_t seed,
                    const std::string& config_fingerprint);
/// One row per draw, one column per target coordinate, then the seed.
void write_draws_csv(std::ostream& out, const ResampleDraws& draws, const std::vector<std::string>& labels);
/// One row per (replication, coordinate).
void write_records_csv(std::ostream& out, const CoverageReport& report);

}  // namespace fewtreat

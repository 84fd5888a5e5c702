// SPDX-License-Identifier: Apache-2.0
//
// Diagnostics: cross-modal band similarity, per-dimension mean profiles and
// the ablation grids.
#pragma once

#include "fdkd/data.hpp"
#include "fdkd/frequency.hpp"
#include "fdkd/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fdkd {

/// Mean over paired rows of the cosine between modality a and b, for the raw
/// vectors and their low/high band reconstructions. Pairs where either
/// vector has (near) zero norm are left out of that variant's mean and
/// counted instead.
struct SimilarityReport {
  double raw = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::size_t samples = 0;
  std::size_t degenerate_raw = 0;
  std::size_t degenerate_low = 0;
  std::size_t degenerate_high = 0;
  double threshold = 0.5;
  std::string source;
};

/// Throws PairingError if the batches differ in row count and DimensionError
/// if they differ in width.
SimilarityReport similarity_report(const Matrix& features_a, const Matrix& features_b,
                                   const BandSplit& split, std::string source);

nlohmann::ordered_json to_json(const SimilarityReport& r);
std::string similarity_csv(const SimilarityReport& r);

/// Column means.
RealVec mean_profile(const Matrix& features);
/// `dim,mean_a,mean_b` rows.
std::string mean_profile_csv(const RealVec& mean_a, const RealVec& mean_b);

enum class AblationSuite { components, loss_grid, threshold, lambda };

std::string to_string(AblationSuite s);
AblationSuite parse_ablation_suite(const std::string& text);

struct AblationVariant {
  std::string label;
  ExperimentConfig config;
};

/// The configurations a suite enumerates, derived from `base`:
///   components  7 freq/align/scale/log patterns, from all-off to all-on
///   loss_grid   {mse, logmse} for the low band x {mse, logmse} for the high band
///   threshold   1/4, 1/3, 1/2
///   lambda      {0.5, 1, 3, 5} x {0.5, 1, 3, 5}
std::vector<AblationVariant> ablation_variants(AblationSuite suite, const ExperimentConfig& base);

struct AblationRow {
  std::string label;
  nlohmann::ordered_json config;
  std::vector<double> accuracy_a;  // per seed, student a distilled from b
  std::vector<double> accuracy_b;  // per seed, student b distilled from a
  double mean_a = 0.0;
  double mean_b = 0.0;
};

struct AblationGrid {
  AblationSuite suite = AblationSuite::components;
  std::vector<std::uint64_t> seeds;
  /// Unimodal baselines (which are also the teachers), per seed.
  std::vector<double> baseline_a;
  std::vector<double> baseline_b;
  std::vector<AblationRow> rows;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// Worker processes; 1 runs everything in-process.
  std::size_t jobs = 1;
};

AblationGrid run_ablation(AblationSuite suite, const ExperimentConfig& base, const Dataset& train,
                          const Dataset& test, const AblationOptions& options);

nlohmann::ordered_json to_json(const AblationGrid& g);
std::string ablation_csv(const AblationGrid& g);
/// Checks the JSON layout written by to_json(AblationGrid); throws DataError.
void validate_ablation_json(const nlohmann::json& j);

}  // namespace fdkd

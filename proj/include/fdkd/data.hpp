// SPDX-License-Identifier: Apache-2.0
//
// Synthetic paired-modality data and the feature CSV exchange format.
#pragma once

#include "fdkd/models.hpp"
#include "fdkd/numerics.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fdkd {

/// Generator parameters. Each modality's input spectrum is built from
///   low bins  [1, c):  shared projection of the sample's semantic code + per-modality perturbation
///   high bins [c, K):  per-modality class pattern * high_signal + high_noise
/// then inverse-transformed and mapped through x <- scale * x + offset.
struct SyntheticConfig {
  std::size_t num_classes = 6;
  std::size_t input_dim = 64;
  std::size_t semantic_dim = 16;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  double band_threshold = 0.5;
  double prototype_scale = 1.0;
  double semantic_noise = 2.5;
  double low_perturbation = 0.5;
  double high_signal = 0.4;
  double high_noise = 1.0;
  double scale_a = 1.6;
  double offset_a = 0.4;
  double scale_b = 1.0;
  double offset_b = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

nlohmann::ordered_json to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

struct PairedSample {
  std::int64_t id = 0;
  int label = 0;
  RealVec x_a;
  RealVec x_b;

  const RealVec& features(Modality m) const { return m == Modality::a ? x_a : x_b; }
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<PairedSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  /// N x dim matrix of one modality's vectors.
  Matrix features(Modality m) const;
  std::vector<int> labels() const;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
};

SyntheticData generate(const SyntheticConfig& config);

/// Header `id,label,m,f0,...,f{D-1}`; one row per (sample, modality), floats
/// with 17 significant digits, LF endings.
std::string features_to_csv(const Dataset& d);
void save_features(const Dataset& d, const std::filesystem::path& path);

/// Rows sharing an id are paired; every id needs exactly one `a` and one `b`
/// row. Throws ParseError (with line number; also for labels out of range)
/// or PairingError.
Dataset parse_features_csv(const std::string& text, std::optional<std::size_t> num_classes = {});
Dataset load_features(const std::filesystem::path& path, std::optional<std::size_t> num_classes = {});

}  // namespace fdkd

// SPDX-License-Identifier: Apache-2.0
//
// Unimodal teacher/baseline training, frequency-decoupled distillation into a
// student of the other modality, and evaluation.
#pragma once

#include "fdkd/data.hpp"
#include "fdkd/frequency.hpp"
#include "fdkd/losses.hpp"
#include "fdkd/models.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fdkd {

/// Component switches. align works with or without freq (it then uses one
/// shared classifier on raw features); scale and log need freq.
struct Toggles {
  bool freq = true;
  bool align = true;
  bool scale = true;
  bool log = true;

  static Toggles all_off() { return {false, false, false, false}; }
};

struct ExperimentConfig {
  Modality student_modality = Modality::a;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double poly_power = 0.9;
  LossWeights weights;
  double threshold = 0.5;
  Toggles toggles;
  /// Overrides; otherwise low uses MSE and high uses logMSE when `log` is on.
  std::optional<BandLossKind> low_loss;
  std::optional<BandLossKind> high_loss;
  bool align_standardized = false;
  bool dedup_student_band_ce = false;
  std::vector<std::size_t> hidden{128, 128};
  std::size_t feature_dim = 64;
  bool output_relu = false;
  bool residual = true;
  std::uint64_t seed = 0;

  void validate() const;
  BandLossKind resolved_low_loss() const;
  BandLossKind resolved_high_loss() const;
  EncoderShape encoder_shape(std::size_t input_dim) const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<int> predictions;
  Matrix logits;
};

/// Argmax of the private head over raw features; ties go to the lowest
/// class index. Throws DataError on an empty split.
EvalResult evaluate(const ModalityModel& model, const Dataset& split);

/// Row-wise argmax with the same tie rule as evaluate().
std::vector<int> argmax_rows(const Matrix& logits);

struct TrainReport {
  std::string kind;  // "unimodal" or "distill"
  Modality student_modality = Modality::a;
  std::optional<Modality> teacher_modality;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::vector<LossBreakdown> epochs;
  std::uint64_t steps = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::optional<std::uint64_t> teacher_hash_before;
  std::optional<std::uint64_t> teacher_hash_after;
  double wall_time_seconds = 0.0;
};

/// Key order is fixed. `wall_time_seconds` is the only run-dependent field.
nlohmann::ordered_json to_json(const TrainReport& r);

struct TrainResult {
  ModalityModel model;
  std::optional<SharedClassifiers> shared;
  TrainReport report;

  Checkpoint checkpoint() const;
};

/// Plain cross-entropy training of one modality's encoder and private head.
TrainResult train_unimodal(const Dataset& train, const Dataset& test, const ExperimentConfig& config);

/// Distills the frozen `teacher` into a fresh student of
/// config.student_modality. Throws DimensionError if feature widths differ
/// and NumericError (naming term, epoch and batch) on a non-finite loss.
TrainResult distill(const Dataset& train, const Dataset& test, const ModalityModel& teacher,
                    const ExperimentConfig& config);

/// Teacher features with their bands and standardized bands, computed once
/// since the teacher is frozen.
struct TeacherView {
  Matrix raw;
  BandBatch bands;
  BandBatch standardized;
};

TeacherView teacher_view(const Matrix& features, const BandSplit& split);

struct ObjectiveResult {
  LossBreakdown losses;
  Matrix grad_features;
  LinearGrad grad_private;
  LinearGrad grad_shared_low;
  LinearGrad grad_shared_high;
  /// False when the shared classifiers took no part (their gradients are then meaningless).
  bool shared_used = false;
};

/// Student objective for one batch and its gradients w.r.t. the student's
/// features and all heads. teacher == nullptr gives the unimodal objective.
ObjectiveResult student_objective(const Matrix& features, std::span<const int> labels,
                                  const Linear& private_head, const SharedClassifiers& shared,
                                  const TeacherView* teacher, const ExperimentConfig& config,
                                  const BandSplit& split);

/// Full-set loss breakdown of the distillation objective for given parameters.
LossBreakdown distillation_losses(const ModalityModel& student, const SharedClassifiers& shared,
                                  const ModalityModel& teacher, const Dataset& data,
                                  const ExperimentConfig& config);

}  // namespace fdkd

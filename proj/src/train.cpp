// SPDX-License-Identifier: Apache-2.0
#include "fdkd/train.hpp"

#include "fdkd/errors.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fdkd {

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(poly_power >= 0.0) || !std::isfinite(poly_power)) throw ConfigError("poly power must be >= 0");
  if (!std::isfinite(weights.lambda1) || !std::isfinite(weights.lambda2) || weights.lambda1 < 0.0 ||
      weights.lambda2 < 0.0) {
    throw ConfigError("lambda1 and lambda2 must be finite and >= 0");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (!toggles.freq && (toggles.scale || toggles.log)) {
    throw ConfigError("scale and log toggles require freq");
  }
  if (!toggles.freq && (low_loss || high_loss)) throw ConfigError("band loss overrides require freq");
  if (feature_dim < 2 || feature_dim % 2 != 0) throw ConfigError("feature dim must be even and >= 2");
  for (std::size_t h : hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
}

BandLossKind ExperimentConfig::resolved_low_loss() const { return low_loss.value_or(BandLossKind::mse); }

BandLossKind ExperimentConfig::resolved_high_loss() const {
  return high_loss.value_or(toggles.log ? BandLossKind::logmse : BandLossKind::mse);
}

EncoderShape ExperimentConfig::encoder_shape(std::size_t input_dim) const {
  EncoderShape s;
  s.widths.clear();
  s.widths.push_back(input_dim);
  s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
  s.widths.push_back(feature_dim);
  s.output_relu = output_relu;
  s.residual = residual && input_dim == feature_dim;
  return s;
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["student_modality"] = std::string(to_string(c.student_modality));
  j["epochs"] = c.epochs;
  j["batch"] = c.batch_size;
  j["lr"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["poly_power"] = c.poly_power;
  j["lambda1"] = c.weights.lambda1;
  j["lambda2"] = c.weights.lambda2;
  j["threshold"] = c.threshold;
  j["freq"] = c.toggles.freq;
  j["align"] = c.toggles.align;
  j["scale"] = c.toggles.scale;
  j["log"] = c.toggles.log;
  j["low_loss"] = c.low_loss ? nlohmann::ordered_json(std::string(to_string(*c.low_loss))) : nullptr;
  j["high_loss"] = c.high_loss ? nlohmann::ordered_json(std::string(to_string(*c.high_loss))) : nullptr;
  j["align_standardized"] = c.align_standardized;
  j["dedup_student_band_ce"] = c.dedup_student_band_ce;
  j["hidden"] = c.hidden;
  j["dim"] = c.feature_dim;
  j["output_relu"] = c.output_relu;
  j["residual"] = c.residual;
  j["seed"] = c.seed;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c.student_modality = parse_modality(j.value("student_modality", std::string("a")));
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch", c.batch_size);
    c.learning_rate = j.value("lr", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.poly_power = j.value("poly_power", c.poly_power);
    c.weights.lambda1 = j.value("lambda1", c.weights.lambda1);
    c.weights.lambda2 = j.value("lambda2", c.weights.lambda2);
    c.threshold = j.value("threshold", c.threshold);
    c.toggles.freq = j.value("freq", c.toggles.freq);
    c.toggles.align = j.value("align", c.toggles.align);
    c.toggles.scale = j.value("scale", c.toggles.scale);
    c.toggles.log = j.value("log", c.toggles.log);
    if (j.contains("low_loss") && !j["low_loss"].is_null()) {
      c.low_loss = parse_band_loss(j["low_loss"].get<std::string>());
    }
    if (j.contains("high_loss") && !j["high_loss"].is_null()) {
      c.high_loss = parse_band_loss(j["high_loss"].get<std::string>());
    }
    c.align_standardized = j.value("align_standardized", c.align_standardized);
    c.dedup_student_band_ce = j.value("dedup_student_band_ce", c.dedup_student_band_ce);
    c.hidden = j.value("hidden", c.hidden);
    c.feature_dim = j.value("dim", c.feature_dim);
    c.output_relu = j.value("output_relu", c.output_relu);
    c.residual = j.value("residual", c.residual);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(r, k) > logits(r, best)) best = k;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

EvalResult evaluate(const ModalityModel& model, const Dataset& split) {
  if (split.empty()) throw DataError("cannot evaluate on an empty split");
  EvalResult out;
  out.logits = model.head.forward(model.encoder.forward(split.features(model.modality)));
  out.predictions = argmax_rows(out.logits);
  const std::size_t classes = model.head.out_dim();
  std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const int y = split.samples[i].label;
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw LabelError("label " + std::to_string(y) + " outside the model's class range");
    }
    ++totals[static_cast<std::size_t>(y)];
    if (out.predictions[i] == y) {
      ++correct;
      ++hits[static_cast<std::size_t>(y)];
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  out.per_class_accuracy.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    out.per_class_accuracy[k] =
        totals[k] ? static_cast<double>(hits[k]) / static_cast<double>(totals[k]) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

nlohmann::ordered_json breakdown_json(const LossBreakdown& b) {
  nlohmann::ordered_json j;
  j["task"] = b.task;
  j["align"] = b.align;
  j["low"] = b.low;
  j["high"] = b.high;
  j["total"] = b.total;
  return j;
}

}  // namespace

nlohmann::ordered_json to_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["kind"] = r.kind;
  j["student_modality"] = std::string(to_string(r.student_modality));
  j["teacher_modality"] =
      r.teacher_modality ? nlohmann::ordered_json(std::string(to_string(*r.teacher_modality))) : nullptr;
  j["seed"] = r.seed;
  j["config"] = r.config;
  j["epochs_run"] = r.epochs.size();
  j["steps"] = r.steps;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    nlohmann::ordered_json row;
    row["epoch"] = e;
    row.update(breakdown_json(r.epochs[e]));
    epochs.push_back(std::move(row));
  }
  j["epochs"] = std::move(epochs);
  j["train_accuracy"] = r.train_accuracy;
  j["test_accuracy"] = r.test_accuracy;
  j["per_class_accuracy"] = r.per_class_accuracy;
  j["teacher_hash_before"] = r.teacher_hash_before ? nlohmann::ordered_json(hex64(*r.teacher_hash_before)) : nullptr;
  j["teacher_hash_after"] = r.teacher_hash_after ? nlohmann::ordered_json(hex64(*r.teacher_hash_after)) : nullptr;
  j["wall_time_seconds"] = r.wall_time_seconds;
  return j;
}

Checkpoint TrainResult::checkpoint() const { return snapshot(model, shared ? &*shared : nullptr); }

// ---------------------------------------------------------------------------
// Objective

namespace {

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

TeacherView gather(const TeacherView& t, std::span<const std::size_t> idx) {
  return {gather_rows(t.raw, idx),
          {gather_rows(t.bands.low, idx), gather_rows(t.bands.high, idx)},
          {gather_rows(t.standardized.low, idx), gather_rows(t.standardized.high, idx)}};
}

}  // namespace

TeacherView teacher_view(const Matrix& features, const BandSplit& split) {
  TeacherView t;
  t.raw = features;
  t.bands = decompose_rows(t.raw, split);
  t.standardized = {normalize_rows(t.bands.low, true).values, normalize_rows(t.bands.high, false).values};
  return t;
}

ObjectiveResult student_objective(const Matrix& features, std::span<const int> labels,
                                  const Linear& private_head, const SharedClassifiers& shared,
                                  const TeacherView* teacher, const ExperimentConfig& cfg,
                                  const BandSplit& split) {
  ObjectiveResult out;
  LossParts parts;
  const Toggles& tg = cfg.toggles;
  const bool distilling = teacher != nullptr;

  if (!distilling || !tg.freq) {
    TaskResult task = task_loss(features, nullptr, shared, private_head, labels);
    parts.task = task.value;
    out.grad_features = std::move(task.grad_raw);
    out.grad_private = std::move(task.grad_private);
    out.grad_shared_low = std::move(task.grad_low);
    out.grad_shared_high = std::move(task.grad_high);
    if (distilling && tg.align) {
      // Without decomposition the alignment uses one shared classifier on raw features.
      HeadLoss s = head_cross_entropy(shared.low, features, labels);
      HeadLoss t = head_cross_entropy(shared.low, teacher->raw, labels);
      parts.align = s.value + t.value;
      out.grad_features += s.grad_features;
      out.grad_shared_low += s.grad_head;
      out.grad_shared_low += t.grad_head;
      out.shared_used = true;
    }
    out.losses = total_loss(parts, cfg.weights);
    return out;
  }

  const BandBatch bands = decompose_rows(features, split);
  const NormalizedRows low_std = normalize_rows(bands.low, true);
  const NormalizedRows high_std = normalize_rows(bands.high, false);
  const BandBatch standardized{low_std.values, high_std.values};

  Matrix grad_low = Matrix::Zero(features.rows(), features.cols());
  Matrix grad_high = Matrix::Zero(features.rows(), features.cols());
  Matrix grad_low_std = Matrix::Zero(features.rows(), features.cols());
  Matrix grad_high_std = Matrix::Zero(features.rows(), features.cols());

  const bool dedup = cfg.dedup_student_band_ce && tg.align;
  TaskResult task = task_loss(features, dedup ? nullptr : &bands, shared, private_head, labels);
  parts.task = task.value;
  out.grad_features = std::move(task.grad_raw);
  out.grad_private = std::move(task.grad_private);
  out.grad_shared_low = std::move(task.grad_low);
  out.grad_shared_high = std::move(task.grad_high);
  out.shared_used = true;
  if (!dedup) {
    grad_low += task.grad_bands.low;
    grad_high += task.grad_bands.high;
  }

  if (tg.align) {
    const bool use_std = cfg.align_standardized;
    AlignResult al = align_loss(use_std ? standardized : bands,
                                use_std ? teacher->standardized : teacher->bands, shared, labels);
    parts.align = al.value;
    (use_std ? grad_low_std : grad_low) += al.grad_a.low;
    (use_std ? grad_high_std : grad_high) += al.grad_a.high;
    out.grad_shared_low += al.grad_low;
    out.grad_shared_high += al.grad_high;
  }

  // Band distillation toward the frozen teacher.
  const Matrix& s_low = tg.scale ? standardized.low : bands.low;
  const Matrix& s_high = tg.scale ? standardized.high : bands.high;
  const Matrix& t_low = tg.scale ? teacher->standardized.low : teacher->bands.low;
  const Matrix& t_high = tg.scale ? teacher->standardized.high : teacher->bands.high;
  LossGrad low = band_loss(cfg.resolved_low_loss(), s_low, t_low);
  LossGrad high = band_loss(cfg.resolved_high_loss(), s_high, t_high);
  parts.low = low.value;
  parts.high = high.value;
  (tg.scale ? grad_low_std : grad_low) += cfg.weights.lambda1 * low.grad;
  (tg.scale ? grad_high_std : grad_high) += cfg.weights.lambda2 * high.grad;

  grad_low += normalize_rows_backward(low_std, grad_low_std);
  grad_high += normalize_rows_backward(high_std, grad_high_std);
  out.grad_features += decompose_backward(grad_low, grad_high, split);

  out.losses = total_loss(parts, cfg.weights);
  return out;
}

namespace {

struct Accumulator {
  LossBreakdown sum;
  double rows = 0.0;

  void add(const LossBreakdown& b, double n) {
    sum.task += n * b.task;
    sum.align += n * b.align;
    sum.low += n * b.low;
    sum.high += n * b.high;
    sum.total += n * b.total;
    rows += n;
  }
  LossBreakdown mean() const {
    return {sum.task / rows, sum.align / rows, sum.low / rows, sum.high / rows, sum.total / rows};
  }
};

void check_dataset(const Dataset& d, const char* what) {
  if (d.empty()) throw DataError(std::string(what) + " split is empty");
}

TrainResult run(const Dataset& train, const Dataset& test, const ModalityModel* teacher,
                const ExperimentConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  check_dataset(train, "training");
  check_dataset(test, "test");
  if (train.dim != test.dim) throw DimensionError("train and test feature widths differ");

  const EncoderShape shape = cfg.encoder_shape(train.dim);
  const BandSplit split = BandSplit::make(cfg.feature_dim, cfg.threshold);
  const std::size_t classes = train.num_classes;

  std::optional<TeacherView> tfeat;
  std::uint64_t teacher_hash = 0;
  if (teacher) {
    if (teacher->encoder.shape().feature_dim() != cfg.feature_dim) {
      throw DimensionError("teacher emits " + std::to_string(teacher->encoder.shape().feature_dim()) +
                           "-wide features, student emits " + std::to_string(cfg.feature_dim));
    }
    if (teacher->encoder.shape().input_dim() != train.dim) {
      throw DimensionError("teacher input width does not match the dataset");
    }
    if (teacher->head.out_dim() != classes) throw DimensionError("teacher class count differs");
    teacher_hash = parameter_hash(*teacher);
    tfeat = teacher_view(teacher->encoder.forward(train.features(teacher->modality)), split);
  }

  const SeededRng root(cfg.seed);
  TrainResult result;
  {
    SeededRng model_rng = root.split("model", static_cast<std::uint64_t>(cfg.student_modality));
    result.model = ModalityModel::init(cfg.student_modality, shape, classes, model_rng);
  }
  SharedClassifiers shared;
  {
    SeededRng shared_rng = root.split("shared");
    shared = SharedClassifiers::init(cfg.feature_dim, classes, shared_rng);
  }

  const std::size_t n = train.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  SgdConfig sgd{cfg.learning_rate, cfg.momentum, cfg.poly_power,
                static_cast<std::uint64_t>(cfg.epochs * batches)};
  SgdMomentum student_opt(sgd);
  SgdMomentum shared_opt(sgd);

  const Matrix inputs = train.features(cfg.student_modality);
  const std::vector<int> labels = train.labels();
  bool shared_touched = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng shuffle_rng = root.split("shuffle", epoch);
    shuffle_rng.shuffle(order);

    Accumulator acc;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      std::vector<int> batch_labels;
      batch_labels.reserve(idx.size());
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);

      const EncoderTrace trace = result.model.encoder.forward_trace(gather_rows(inputs, idx));
      std::optional<TeacherView> tb;
      if (tfeat) tb = gather(*tfeat, idx);

      ObjectiveResult obj;
      try {
        obj = student_objective(trace.features, batch_labels, result.model.head, shared,
                              tb ? &*tb : nullptr, cfg, split);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      acc.add(obj.losses, static_cast<double>(idx.size()));

      const EncoderGrad enc_grad = result.model.encoder.backward(trace, obj.grad_features);
      try {
        if (obj.shared_used) {
          shared_opt.step(parameters(shared), gradients(obj.grad_shared_low, obj.grad_shared_high));
          shared_touched = true;
        }
        student_opt.step(parameters(result.model), gradients(enc_grad, obj.grad_private));
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
    }
    result.report.epochs.push_back(acc.mean());
  }

  if (shared_touched) result.shared = std::move(shared);

  TrainReport& r = result.report;
  r.kind = teacher ? "distill" : "unimodal";
  r.student_modality = cfg.student_modality;
  if (teacher) {
    r.teacher_modality = teacher->modality;
    r.teacher_hash_before = teacher_hash;
    r.teacher_hash_after = parameter_hash(*teacher);
  }
  r.config = to_json(cfg);
  r.seed = cfg.seed;
  r.steps = student_opt.steps_taken();
  r.train_accuracy = evaluate(result.model, train).accuracy;
  const EvalResult ev = evaluate(result.model, test);
  r.test_accuracy = ev.accuracy;
  r.per_class_accuracy = ev.per_class_accuracy;
  r.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace

TrainResult train_unimodal(const Dataset& train, const Dataset& test, const ExperimentConfig& config) {
  return run(train, test, nullptr, config);
}

TrainResult distill(const Dataset& train, const Dataset& test, const ModalityModel& teacher,
                    const ExperimentConfig& config) {
  return run(train, test, &teacher, config);
}

LossBreakdown distillation_losses(const ModalityModel& student, const SharedClassifiers& shared,
                                  const ModalityModel& teacher, const Dataset& data,
                                  const ExperimentConfig& config) {
  config.validate();
  check_dataset(data, "evaluation");
  const BandSplit split = BandSplit::make(config.feature_dim, config.threshold);
  const TeacherView tv = teacher_view(teacher.encoder.forward(data.features(teacher.modality)), split);
  const Matrix features = student.encoder.forward(data.features(student.modality));
  return student_objective(features, data.labels(), student.head, shared, &tv, config, split).losses;
}

}  // namespace fdkd

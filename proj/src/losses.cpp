// SPDX-License-Identifier: Apache-2.0
#include "fdkd/losses.hpp"

#include "fdkd/errors.hpp"

#include <cmath>
#include <string>

namespace fdkd {

LossBreakdown total_loss(const LossParts& p, const LossWeights& w) {
  const std::pair<const char*, double> terms[] = {
      {"task", p.task}, {"align", p.align}, {"low", p.low}, {"high", p.high},
      {"lambda1", w.lambda1}, {"lambda2", w.lambda2}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term '") + name + "'");
  }
  LossBreakdown b{p.task, p.align, p.low, p.high, 0.0};
  b.total = p.task + p.align;
  b.total += w.lambda1 * p.low;
  b.total += w.lambda2 * p.high;
  if (!std::isfinite(b.total)) throw NumericError("non-finite loss term 'total'");
  return b;
}

std::string_view to_string(BandLossKind k) noexcept { return k == BandLossKind::mse ? "mse" : "logmse"; }

BandLossKind parse_band_loss(std::string_view text) {
  if (text == "mse") return BandLossKind::mse;
  if (text == "logmse") return BandLossKind::logmse;
  throw ConfigError("unknown band loss '" + std::string(text) + "' (expected mse or logmse)");
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("loss operands differ in shape: " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
  if (a.size() == 0) throw DimensionError("loss operands are empty");
}

}  // namespace

LossGrad mse_band_loss(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b);
  const double scale = 1.0 / static_cast<double>(a.size());
  const Matrix diff = a - b;
  return {diff.squaredNorm() * scale, 2.0 * scale * diff};
}

double sigma(double u) noexcept { return u >= 0.0 ? std::log1p(u) : -std::log1p(-u); }

double sigma_derivative(double u) noexcept { return 1.0 / (1.0 + std::abs(u)); }

LossGrad logmse_band_loss(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b);
  const double scale = 1.0 / static_cast<double>(a.size());
  LossGrad out{0.0, Matrix(a.rows(), a.cols())};
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = sigma(a.data()[i]) - sigma(b.data()[i]);
    out.value += d * d;
    out.grad.data()[i] = 2.0 * scale * d * sigma_derivative(a.data()[i]);
  }
  out.value *= scale;
  return out;
}

LossGrad band_loss(BandLossKind kind, const Matrix& a, const Matrix& b) {
  return kind == BandLossKind::mse ? mse_band_loss(a, b) : logmse_band_loss(a, b);
}

LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  if (c < 2) throw DimensionError("cross-entropy needs at least two classes");
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) {
    throw DimensionError("cross-entropy got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  LossGrad out{0.0, Matrix(n, c)};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c) {
      throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
    const double m = logits.row(r).maxCoeff();
    double z = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) z += std::exp(logits(r, k) - m);
    const double log_z = std::log(z);
    out.value += log_z - (logits(r, y) - m);
    for (Eigen::Index k = 0; k < c; ++k) {
      out.grad(r, k) = (std::exp(logits(r, k) - m - log_z) - (k == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

HeadLoss head_cross_entropy(const Linear& head, const Matrix& features, std::span<const int> labels) {
  LossGrad ce = cross_entropy(head.forward(features), labels);
  HeadLoss out;
  out.value = ce.value;
  out.grad_head = linear_backward(head, features, ce.grad, &out.grad_features);
  return out;
}

AlignResult align_loss(const BandBatch& a, const BandBatch& b, const SharedClassifiers& heads,
                       std::span<const int> labels) {
  HeadLoss high_a = head_cross_entropy(heads.high, a.high, labels);
  HeadLoss high_b = head_cross_entropy(heads.high, b.high, labels);
  HeadLoss low_a = head_cross_entropy(heads.low, a.low, labels);
  HeadLoss low_b = head_cross_entropy(heads.low, b.low, labels);

  AlignResult out;
  out.value = high_a.value + high_b.value + low_a.value + low_b.value;
  out.grad_a = {std::move(low_a.grad_features), std::move(high_a.grad_features)};
  out.grad_b = {std::move(low_b.grad_features), std::move(high_b.grad_features)};
  out.grad_high = std::move(high_a.grad_head);
  out.grad_high += high_b.grad_head;
  out.grad_low = std::move(low_a.grad_head);
  out.grad_low += low_b.grad_head;
  return out;
}

TaskResult task_loss(const Matrix& raw, const BandBatch* bands, const SharedClassifiers& heads,
                     const Linear& private_head, std::span<const int> labels) {
  HeadLoss raw_ce = head_cross_entropy(private_head, raw, labels);
  TaskResult out;
  out.value = raw_ce.value;
  out.grad_raw = std::move(raw_ce.grad_features);
  out.grad_private = std::move(raw_ce.grad_head);
  if (!bands) {
    out.grad_low = LinearGrad::zeros_like(heads.low);
    out.grad_high = LinearGrad::zeros_like(heads.high);
    return out;
  }
  HeadLoss low = head_cross_entropy(heads.low, bands->low, labels);
  HeadLoss high = head_cross_entropy(heads.high, bands->high, labels);
  out.value += low.value;
  out.value += high.value;
  out.grad_bands = {std::move(low.grad_features), std::move(high.grad_features)};
  out.grad_low = std::move(low.grad_head);
  out.grad_high = std::move(high.grad_head);
  return out;
}

}  // namespace fdkd

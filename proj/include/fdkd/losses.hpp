// SPDX-License-Identifier: Apache-2.0
//
// Training objectives with exact gradients.
//
//   total = task + align + lambda1 * low + lambda2 * high
//
// Gradients are hand-derived; tests check every path against central
// finite differences.
#pragma once

#include "fdkd/frequency.hpp"
#include "fdkd/models.hpp"
#include "fdkd/numerics.hpp"

#include <span>
#include <string_view>

namespace fdkd {

struct LossWeights {
  double lambda1 = 1.0;  // low band
  double lambda2 = 1.0;  // high band
};

/// Sum order is fixed: ((task + align) + lambda1 * low) + lambda2 * high.
struct LossBreakdown {
  double task = 0.0;
  double align = 0.0;
  double low = 0.0;
  double high = 0.0;
  double total = 0.0;
};

struct LossParts {
  double task = 0.0;
  double align = 0.0;
  double low = 0.0;
  double high = 0.0;
};

/// Throws NumericError naming the first non-finite term.
LossBreakdown total_loss(const LossParts& parts, const LossWeights& w);

/// Loss value and its gradient w.r.t. the first argument.
struct LossGrad {
  double value = 0.0;
  Matrix grad;
};

enum class BandLossKind { mse, logmse };

std::string_view to_string(BandLossKind k) noexcept;
BandLossKind parse_band_loss(std::string_view text);

/// (1 / (N D)) * sum (a - b)^2.
LossGrad mse_band_loss(const Matrix& a, const Matrix& b);

/// sign(u) * log(1 + |u|).
double sigma(double u) noexcept;
/// 1 / (1 + |u|).
double sigma_derivative(double u) noexcept;

/// (1 / (N D)) * sum (sigma(a) - sigma(b))^2.
LossGrad logmse_band_loss(const Matrix& a, const Matrix& b);

LossGrad band_loss(BandLossKind kind, const Matrix& a, const Matrix& b);

/// Mean over rows of -log softmax(logits)[label]. Gradient is w.r.t. logits.
/// Throws LabelError for labels outside [0, C) and DimensionError for C < 2.
LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Cross-entropy of a linear classifier applied to `features`.
struct HeadLoss {
  double value = 0.0;
  Matrix grad_features;
  LinearGrad grad_head;
};

HeadLoss head_cross_entropy(const Linear& head, const Matrix& features, std::span<const int> labels);

struct BandGrads {
  Matrix low;
  Matrix high;
};

struct AlignResult {
  double value = 0.0;
  BandGrads grad_a;
  BandGrads grad_b;
  LinearGrad grad_low;   // shared low-band classifier
  LinearGrad grad_high;  // shared high-band classifier
};

/// CE(high(a)) + CE(high(b)) + CE(low(a)) + CE(low(b)) through the shared
/// classifiers, summed in that order.
AlignResult align_loss(const BandBatch& a, const BandBatch& b, const SharedClassifiers& heads,
                       std::span<const int> labels);

struct TaskResult {
  double value = 0.0;
  Matrix grad_raw;
  /// Empty when bands were not supplied.
  BandGrads grad_bands;
  LinearGrad grad_private;
  LinearGrad grad_low;
  LinearGrad grad_high;
};

/// CE(private(raw)) + CE(low(bands.low)) + CE(high(bands.high)). With
/// bands == nullptr only the raw-feature term is computed and the shared
/// classifier gradients are zero.
TaskResult task_loss(const Matrix& raw, const BandBatch* bands, const SharedClassifiers& heads,
                     const Linear& private_head, std::span<const int> labels);

}  // namespace fdkd

// SPDX-License-Identifier: Apache-2.0
//
// Low/high band decomposition of feature vectors with binary masks over the
// real half spectrum, plus feature standardization.
#pragma once

#include "fdkd/numerics.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace fdkd {

/// Binary low/high mask over the K = D/2 + 1 bins of a length-D signal.
/// Low band is [0, cutoff), high band is [cutoff, K). The DC bin is low.
struct BandSplit {
  double threshold = 0.5;
  std::size_t cutoff = 1;
  std::size_t bins = 2;

  /// cutoff = max(1, floor(K * threshold)), capped at K - 1.
  /// Throws ConfigError for threshold outside (0, 1), DimensionError for a bad D.
  static BandSplit make(std::size_t dim, double threshold = 0.5);

  std::size_t dim() const noexcept { return 2 * (bins - 1); }
  bool is_low(std::size_t k) const noexcept { return k < cutoff; }
};

struct FrequencyBands {
  RealVec low;
  RealVec high;
};

FrequencyBands decompose(std::span<const double> x, const BandSplit& split);

/// Row-wise decomposition of a batch.
struct BandBatch {
  Matrix low;
  Matrix high;
};

BandBatch decompose_rows(const Matrix& x, const BandSplit& split);

/// Gradient of a loss w.r.t. x given its gradients w.r.t. the low and high
/// bands. Each band map is a symmetric projector, so this is just another
/// decomposition of the incoming gradients.
Matrix decompose_backward(const Matrix& grad_low, const Matrix& grad_high, const BandSplit& split);

/// Zeroes the DC bin and transforms back; equals mean subtraction.
RealVec dc_filter(std::span<const double> x);

struct Standardized {
  RealVec values;
  /// Centered norm fell below 1e-12; values are all zero.
  bool degenerate = false;
};

/// (x - mean) / ||x - mean||. Constant input gives zeros and the degenerate flag.
Standardized standardize(std::span<const double> x);

struct StandardizedBands {
  FrequencyBands bands;
  bool low_degenerate = false;
  bool high_degenerate = false;
};

/// Low band is standardized. The high band already has no DC component, so
/// it is only L2-normalized.
StandardizedBands standardize_bands(const FrequencyBands& b);

/// Cached row-wise normalization: y_i = c_i / max(||c_i||, eps), with
/// c_i = x_i - mean(x_i) when centering, c_i = x_i otherwise.
struct NormalizedRows {
  Matrix values;
  Vector norms;
  std::vector<bool> degenerate;
  bool centered = true;
};

NormalizedRows normalize_rows(const Matrix& x, bool center);

/// Backprop through normalize_rows. Degenerate rows get zero gradient.
Matrix normalize_rows_backward(const NormalizedRows& fwd, const Matrix& grad);

}  // namespace fdkd

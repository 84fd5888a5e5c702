// SPDX-License-Identifier: Apache-2.0
#include "fdkd/frequency.hpp"

#include "fdkd/errors.hpp"

#include <cmath>
#include <string>

namespace fdkd {

namespace {

constexpr double kNormEps = 1e-12;

void check_split(std::size_t dim, const BandSplit& split) {
  if (dim % 2 != 0 || dim / 2 + 1 != split.bins) {
    throw DimensionError("band split built for " + std::to_string(split.bins) +
                         " bins does not match a length-" + std::to_string(dim) + " vector");
  }
}

}  // namespace

BandSplit BandSplit::make(std::size_t dim, double threshold) {
  if (dim < 2 || dim % 2 != 0) {
    throw DimensionError("band split needs an even dimension >= 2, got " + std::to_string(dim));
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("band threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  BandSplit s;
  s.threshold = threshold;
  s.bins = dim / 2 + 1;
  const auto raw = static_cast<std::size_t>(std::floor(static_cast<double>(s.bins) * threshold));
  s.cutoff = std::min(std::max<std::size_t>(1, raw), s.bins - 1);
  return s;
}

FrequencyBands decompose(std::span<const double> x, const BandSplit& split) {
  check_split(x.size(), split);
  const Spectrum full = rdft(x);
  Spectrum low = Spectrum::zeros(x.size());
  Spectrum high = Spectrum::zeros(x.size());
  for (std::size_t k = 0; k < full.size(); ++k) {
    (split.is_low(k) ? low : high)[k] = full[k];
  }
  return {irdft(low), irdft(high)};
}

BandBatch decompose_rows(const Matrix& x, const BandSplit& split) {
  BandBatch out{Matrix(x.rows(), x.cols()), Matrix(x.rows(), x.cols())};
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    FrequencyBands b = decompose(row_span(x, r), split);
    std::copy(b.low.begin(), b.low.end(), row_span(out.low, r).begin());
    std::copy(b.high.begin(), b.high.end(), row_span(out.high, r).begin());
  }
  return out;
}

Matrix decompose_backward(const Matrix& grad_low, const Matrix& grad_high, const BandSplit& split) {
  if (grad_low.rows() != grad_high.rows() || grad_low.cols() != grad_high.cols()) {
    throw DimensionError("band gradients must share a shape");
  }
  Matrix out(grad_low.rows(), grad_low.cols());
  for (Eigen::Index r = 0; r < grad_low.rows(); ++r) {
    const RealVec gl = decompose(row_span(grad_low, r), split).low;
    const RealVec gh = decompose(row_span(grad_high, r), split).high;
    auto dst = row_span(out, r);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = gl[j] + gh[j];
  }
  return out;
}

RealVec dc_filter(std::span<const double> x) {
  Spectrum s = rdft(x);
  s[0] = {0.0, 0.0};
  return irdft(s);
}

Standardized standardize(std::span<const double> x) {
  if (x.size() < 2) {
    throw DimensionError("standardize needs at least two entries");
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());

  Standardized out;
  out.values.resize(x.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.values[i] = x[i] - mean;
    norm += out.values[i] * out.values[i];
  }
  norm = std::sqrt(norm);
  if (norm < kNormEps) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    out.degenerate = true;
    return out;
  }
  for (double& v : out.values) v /= norm;
  return out;
}

StandardizedBands standardize_bands(const FrequencyBands& b) {
  if (b.low.size() != b.high.size()) {
    throw DimensionError("band vectors differ in length");
  }
  StandardizedBands out;
  Standardized low = standardize(b.low);
  out.bands.low = std::move(low.values);
  out.low_degenerate = low.degenerate;

  double norm = 0.0;
  for (double v : b.high) norm += v * v;
  norm = std::sqrt(norm);
  out.bands.high.assign(b.high.size(), 0.0);
  if (norm < kNormEps) {
    out.high_degenerate = true;
  } else {
    for (std::size_t i = 0; i < b.high.size(); ++i) out.bands.high[i] = b.high[i] / norm;
  }
  return out;
}

NormalizedRows normalize_rows(const Matrix& x, bool center) {
  NormalizedRows out;
  out.centered = center;
  out.values = x;
  if (center) out.values.colwise() -= x.rowwise().mean();
  out.norms = out.values.rowwise().norm();
  out.degenerate.assign(static_cast<std::size_t>(x.rows()), false);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (out.norms(r) < kNormEps) {
      out.values.row(r).setZero();
      out.degenerate[static_cast<std::size_t>(r)] = true;
    } else {
      out.values.row(r) /= out.norms(r);
    }
  }
  return out;
}

Matrix normalize_rows_backward(const NormalizedRows& fwd, const Matrix& grad) {
  if (grad.rows() != fwd.values.rows() || grad.cols() != fwd.values.cols()) {
    throw DimensionError("gradient shape does not match normalized batch");
  }
  Matrix out(grad.rows(), grad.cols());
  for (Eigen::Index r = 0; r < grad.rows(); ++r) {
    if (fwd.degenerate[static_cast<std::size_t>(r)]) {
      out.row(r).setZero();
      continue;
    }
    const auto y = fwd.values.row(r);
    const auto g = grad.row(r);
    // d(c/|c|) = (I - y y^T) / |c|
    out.row(r) = (g - y * y.dot(g)) / fwd.norms(r);
    if (fwd.centered) out.row(r).array() -= out.row(r).mean();
  }
  return out;
}

}  // namespace fdkd

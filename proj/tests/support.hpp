// SPDX-License-Identifier: Apache-2.0
//
// Independent oracles shared by the unit tests: a naive complex DFT,
// central finite differences and small random instances.
#pragma once

#include "fdkd/numerics.hpp"

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace fdkd::test {

/// Full O(D^2) complex DFT, bins 0..D-1.
inline std::vector<Complex> naive_dft(const std::vector<double>& x) {
  const std::size_t d = x.size();
  std::vector<Complex> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    Complex acc{0.0, 0.0};
    for (std::size_t n = 0; n < d; ++n) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k * n % d) / static_cast<double>(d);
      acc += x[n] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

/// Inverse of naive_dft, real part only.
inline std::vector<double> naive_idft_real(const std::vector<Complex>& X) {
  const std::size_t d = X.size();
  std::vector<double> out(d);
  for (std::size_t n = 0; n < d; ++n) {
    Complex acc{0.0, 0.0};
    for (std::size_t k = 0; k < d; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k * n % d) / static_cast<double>(d);
      acc += X[k] * Complex(std::cos(angle), std::sin(angle));
    }
    out[n] = acc.real() / static_cast<double>(d);
  }
  return out;
}

/// Low band via full-spectrum masking: keep bin k when min(k, D-k) < cutoff.
inline std::vector<double> naive_low_band(const std::vector<double>& x, std::size_t cutoff) {
  std::vector<Complex> X = naive_dft(x);
  const std::size_t d = x.size();
  for (std::size_t k = 0; k < d; ++k) {
    if (std::min(k, d - k) >= cutoff) X[k] = 0.0;
  }
  return naive_idft_real(X);
}

inline std::vector<double> random_vector(SeededRng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline Matrix random_matrix(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Central differences of f at x with step h, one coordinate at a time.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + h;
    const double up = f(probe);
    probe.data()[i] = saved - h;
    const double down = f(probe);
    probe.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-10).
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double denom = std::max(analytic.norm() + numeric.norm(), 1e-10);
  return (analytic - numeric).norm() / denom;
}

}  // namespace fdkd::test

// SPDX-License-Identifier: Apache-2.0
//
// Dense types, a splittable deterministic RNG and the real-input discrete
// Fourier transform pair used by the band decomposition.
//
// Transform convention: the forward transform is unnormalized,
//   X[k] = sum_n x[n] exp(-2 pi i k n / D),  k = 0 .. D/2,
// and the inverse carries the 1/D factor.
#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fdkd {

/// Batches are stored one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RealVec = std::vector<double>;
using Complex = std::complex<double>;

/// Half spectrum of a real signal of even length D: K = D/2 + 1 bins.
class Spectrum {
 public:
  Spectrum() = default;
  /// Throws DimensionError unless bins.size() == source_dim/2 + 1 with an even source_dim >= 2.
  Spectrum(std::vector<Complex> bins, std::size_t source_dim);

  static Spectrum zeros(std::size_t source_dim);

  std::size_t source_dim() const noexcept { return source_dim_; }
  std::size_t size() const noexcept { return bins_.size(); }

  Complex& operator[](std::size_t k) { return bins_[k]; }
  const Complex& operator[](std::size_t k) const { return bins_[k]; }

  std::span<const Complex> bins() const noexcept { return bins_; }
  std::span<Complex> bins() noexcept { return bins_; }

 private:
  std::vector<Complex> bins_;
  std::size_t source_dim_ = 0;
};

/// Forward transform. O(D log D) for power-of-two D, direct summation otherwise.
Spectrum rdft(std::span<const double> x);

/// Inverse transform. Throws SpectrumError if bin 0 or bin D/2 carries an
/// imaginary part (the input cannot come from a real signal).
RealVec irdft(const Spectrum& s);

struct Cosine {
  double value = 0.0;
  /// Set when either norm is below 1e-12; value is then 0.
  bool degenerate = false;
};

Cosine cosine_similarity(std::span<const double> a, std::span<const double> b);

inline std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<double> row_span(Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// FNV-1a over raw bytes; used for checksums and stream derivation.
std::uint64_t fnv1a64(std::span<const std::byte> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// xoshiro256** seeded through splitmix64. Distributions are implemented
/// here rather than taken from <random> so streams are identical across
/// standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  /// Independent child stream keyed by (purpose, index). The parent is not
  /// advanced, so children can be derived in any order.
  SeededRng split(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace fdkd

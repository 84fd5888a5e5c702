// SPDX-License-Identifier: Apache-2.0
#include "fdkd/numerics.hpp"

#include "fdkd/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

namespace fdkd {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::spectrum: return "spectrum";
    case ErrorCategory::label: return "label";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::data: return "data";
    case ErrorCategory::pairing: return "pairing";
    case ErrorCategory::checkpoint: return "checkpoint";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

namespace {

void check_transform_dim(std::size_t d) {
  if (d < 2 || d % 2 != 0) {
    throw DimensionError("transform length must be even and >= 2, got " + std::to_string(d));
  }
}

// exp(-2 pi i m / d) with m reduced mod d first so large k*n products stay exact.
Complex twiddle(std::size_t m, std::size_t d) {
  const double angle = -2.0 * std::numbers::pi * static_cast<double>(m % d) / static_cast<double>(d);
  return {std::cos(angle), std::sin(angle)};
}

// In-place iterative radix-2 transform; inverse=true flips the sign of the exponent.
void fft_pow2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      Complex w = twiddle(k * (n / len), n);
      if (inverse) w = std::conj(w);
      for (std::size_t i = 0; i < n; i += len) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

}  // namespace

Spectrum::Spectrum(std::vector<Complex> bins, std::size_t source_dim)
    : bins_(std::move(bins)), source_dim_(source_dim) {
  check_transform_dim(source_dim);
  if (bins_.size() != source_dim / 2 + 1) {
    throw DimensionError("spectrum of a length-" + std::to_string(source_dim) + " signal needs " +
                         std::to_string(source_dim / 2 + 1) + " bins, got " +
                         std::to_string(bins_.size()));
  }
}

Spectrum Spectrum::zeros(std::size_t source_dim) {
  check_transform_dim(source_dim);
  return Spectrum(std::vector<Complex>(source_dim / 2 + 1), source_dim);
}

Spectrum rdft(std::span<const double> x) {
  const std::size_t d = x.size();
  check_transform_dim(d);
  const std::size_t k_count = d / 2 + 1;
  std::vector<Complex> out(k_count);

  if (std::has_single_bit(d)) {
    std::vector<Complex> work(x.begin(), x.end());
    fft_pow2(work, false);
    std::copy_n(work.begin(), k_count, out.begin());
  } else {
    for (std::size_t k = 0; k < k_count; ++k) {
      Complex acc{0.0, 0.0};
      for (std::size_t n = 0; n < d; ++n) acc += x[n] * twiddle(k * n, d);
      out[k] = acc;
    }
  }
  // Exact real-input symmetry at DC and Nyquist.
  out.front().imag(0.0);
  out.back().imag(0.0);
  return Spectrum(std::move(out), d);
}

RealVec irdft(const Spectrum& s) {
  const std::size_t d = s.source_dim();
  check_transform_dim(d);
  const std::size_t k_count = s.size();

  double scale = 1.0;
  for (const Complex& c : s.bins()) scale = std::max(scale, std::abs(c));
  const double tol = 1e-9 * scale;
  if (std::abs(s[0].imag()) > tol || std::abs(s[k_count - 1].imag()) > tol) {
    throw SpectrumError("DC and Nyquist bins of a real spectrum must have zero imaginary part");
  }

  RealVec x(d);
  const double inv_d = 1.0 / static_cast<double>(d);
  if (std::has_single_bit(d)) {
    std::vector<Complex> full(d);
    full[0] = {s[0].real(), 0.0};
    full[d / 2] = {s[k_count - 1].real(), 0.0};
    for (std::size_t k = 1; k < d / 2; ++k) {
      full[k] = s[k];
      full[d - k] = std::conj(s[k]);
    }
    fft_pow2(full, true);
    for (std::size_t n = 0; n < d; ++n) x[n] = full[n].real() * inv_d;
  } else {
    for (std::size_t n = 0; n < d; ++n) {
      double acc = s[0].real() + ((n % 2 == 0) ? 1.0 : -1.0) * s[k_count - 1].real();
      for (std::size_t k = 1; k + 1 < k_count; ++k) {
        acc += 2.0 * (s[k] * std::conj(twiddle(k * n, d))).real();
      }
      x[n] = acc * inv_d;
    }
  }
  return x;
}

Cosine cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine similarity of vectors with lengths " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return {0.0, true};
  return {std::clamp(dot / (na * nb), -1.0, 1.0), false};
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())));
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

SeededRng SeededRng::split(std::string_view purpose, std::uint64_t index) const {
  std::uint64_t x = seed_ ^ fnv1a64(purpose);
  std::uint64_t mixed = splitmix64(x);
  x = mixed ^ (index * 0xd1b54a32d192ed03ULL);
  return SeededRng(splitmix64(x));
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SeededRng::below(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

}  // namespace fdkd

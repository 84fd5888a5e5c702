// SPDX-License-Identifier: Apache-2.0
//
// MLP encoders, linear heads, the SGD-momentum optimizer with poly decay,
// and the binary checkpoint format.
#pragma once

#include "fdkd/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fdkd {

enum class Modality { a, b };

std::string_view to_string(Modality m) noexcept;
/// Accepts "a"/"b" (case-insensitive). Throws ConfigError otherwise.
Modality parse_modality(std::string_view text);
inline Modality other(Modality m) noexcept { return m == Modality::a ? Modality::b : Modality::a; }

/// Affine map y = x W^T + b applied row-wise.
struct Linear {
  Matrix weight;  // out x in
  Vector bias;    // out

  static Linear zeros(std::size_t in, std::size_t out);
  /// Weights then biases, row-major, each drawn from U(-1/sqrt(in), 1/sqrt(in)).
  static Linear uniform_init(std::size_t in, std::size_t out, SeededRng& rng);

  std::size_t in_dim() const noexcept { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const noexcept { return static_cast<std::size_t>(weight.rows()); }

  Matrix forward(const Matrix& x) const;
};

struct LinearGrad {
  Matrix weight;
  Vector bias;

  static LinearGrad zeros_like(const Linear& l);
  LinearGrad& operator+=(const LinearGrad& o);
};

/// Parameter gradients of y = forward(input). When grad_input is non-null it
/// receives dL/d input.
LinearGrad linear_backward(const Linear& layer, const Matrix& input, const Matrix& grad_output,
                           Matrix* grad_input = nullptr);

/// Layer widths [D_in, H..., D]; rectifier between layers. `output_relu`
/// also rectifies the last layer. With `residual` (requires D_in == D) the
/// input is added to the output.
struct EncoderShape {
  std::vector<std::size_t> widths{64, 128, 128, 64};
  bool output_relu = false;
  bool residual = true;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t feature_dim() const { return widths.back(); }
};

struct EncoderTrace {
  Matrix input;
  /// Pre-activation output of every layer.
  std::vector<Matrix> pre;
  Matrix features;
};

struct EncoderGrad {
  std::vector<LinearGrad> layers;
};

class MlpEncoder {
 public:
  MlpEncoder() = default;
  MlpEncoder(EncoderShape shape, std::vector<Linear> layers);

  static MlpEncoder init(const EncoderShape& shape, SeededRng& rng);
  static MlpEncoder zeros(const EncoderShape& shape);

  const EncoderShape& shape() const noexcept { return shape_; }
  std::vector<Linear>& layers() noexcept { return layers_; }
  const std::vector<Linear>& layers() const noexcept { return layers_; }

  /// Features for a batch; throws DimensionError on an input width mismatch.
  Matrix forward(const Matrix& x) const;
  EncoderTrace forward_trace(const Matrix& x) const;
  EncoderGrad backward(const EncoderTrace& trace, const Matrix& grad_features) const;

 private:
  EncoderShape shape_;
  std::vector<Linear> layers_;
};

/// Encoder plus the private raw-feature classifier for one modality.
struct ModalityModel {
  Modality modality = Modality::a;
  MlpEncoder encoder;
  Linear head;
  bool frozen = false;

  static ModalityModel init(Modality m, const EncoderShape& shape, std::size_t classes,
                            SeededRng& rng);
};

/// Linear classifiers shared by both modalities' low and high bands.
struct SharedClassifiers {
  Linear low;
  Linear high;

  static SharedClassifiers init(std::size_t feature_dim, std::size_t classes, SeededRng& rng);
};

using ParamList = std::vector<std::span<double>>;
using GradList = std::vector<std::span<const double>>;

/// Encoder layers then the private head, weight before bias.
ParamList parameters(ModalityModel& m);
ParamList parameters(SharedClassifiers& s);
GradList gradients(const EncoderGrad& enc, const LinearGrad& head);
GradList gradients(const LinearGrad& low, const LinearGrad& high);

std::uint64_t parameter_hash(const ModalityModel& m);

/// lr0 * (1 - t/T)^power, clamped to 0 for t >= T.
double poly_learning_rate(double lr0, std::uint64_t step, std::uint64_t total_steps, double power);

struct SgdConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double poly_power = 0.9;
  std::uint64_t total_steps = 1;
};

/// v <- m v + g;  p <- p - lr(t) v. One optimizer per parameter group.
class SgdMomentum {
 public:
  explicit SgdMomentum(SgdConfig config) : config_(config) {}

  double current_learning_rate() const;
  std::uint64_t steps_taken() const noexcept { return step_; }
  const SgdConfig& config() const noexcept { return config_; }

  /// Throws DimensionError on shape mismatch and NumericError on a
  /// non-finite gradient; nothing is modified in either case.
  void step(const ParamList& params, const GradList& grads);

 private:
  SgdConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> velocity_;
};

// Checkpoint file, little endian:
//   "FDKDCKPT" | u32 version | u32 n_meta | n_meta x (u32 len, key, u32 len, value)
//   | u32 n_tensors | n_tensors x (u32 len, name, u32 rows, u32 cols)
//   | f64 payload in table order | u64 FNV-1a of the payload bytes
struct NamedTensor {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<NamedTensor> tensors;

  std::optional<std::string> meta(std::string_view key) const;
  const NamedTensor* find(std::string_view name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint snapshot(const ModalityModel& model, const SharedClassifiers* shared = nullptr);
/// Copies parameters into an existing model; shapes must match exactly.
void restore(ModalityModel& model, const Checkpoint& ckpt);
/// Rebuilds the model (shape included) from a checkpoint.
ModalityModel model_from_checkpoint(const Checkpoint& ckpt);
std::optional<SharedClassifiers> shared_from_checkpoint(const Checkpoint& ckpt);

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);
/// Writes through a temporary file and rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fdkd

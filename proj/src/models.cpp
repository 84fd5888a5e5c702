// SPDX-License-Identifier: Apache-2.0
#include "fdkd/models.hpp"

#include "fdkd/errors.hpp"
#include "fdkd/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>

namespace fdkd {

std::string_view to_string(Modality m) noexcept { return m == Modality::a ? "a" : "b"; }

Modality parse_modality(std::string_view text) {
  if (text == "a" || text == "A") return Modality::a;
  if (text == "b" || text == "B") return Modality::b;
  throw ConfigError("unknown modality '" + std::string(text) + "' (expected a or b)");
}

// ---------------------------------------------------------------------------
// Linear

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return {Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
          Vector::Zero(static_cast<Eigen::Index>(out))};
}

Linear Linear::uniform_init(std::size_t in, std::size_t out, SeededRng& rng) {
  Linear l = zeros(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.uniform(-bound, bound);
  return l;
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != weight.cols()) {
    throw DimensionError("linear layer expects width " + std::to_string(weight.cols()) + ", got " +
                         std::to_string(x.cols()));
  }
  Matrix y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

LinearGrad LinearGrad::zeros_like(const Linear& l) {
  return {Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())};
}

LinearGrad& LinearGrad::operator+=(const LinearGrad& o) {
  weight += o.weight;
  bias += o.bias;
  return *this;
}

LinearGrad linear_backward(const Linear& layer, const Matrix& input, const Matrix& grad_output,
                           Matrix* grad_input) {
  if (grad_output.cols() != layer.weight.rows() || input.rows() != grad_output.rows()) {
    throw DimensionError("linear backward: gradient shape does not match layer output");
  }
  LinearGrad g{grad_output.transpose() * input, grad_output.colwise().sum().transpose()};
  if (grad_input) *grad_input = grad_output * layer.weight;
  return g;
}

// ---------------------------------------------------------------------------
// Encoder

namespace {

void validate_shape(const EncoderShape& shape) {
  if (shape.widths.size() < 2) throw ConfigError("encoder needs at least input and output widths");
  for (std::size_t w : shape.widths) {
    if (w < 1) throw ConfigError("encoder widths must be >= 1");
  }
  if (shape.residual && shape.input_dim() != shape.feature_dim()) {
    throw ConfigError("residual encoder needs equal input and feature widths");
  }
}

}  // namespace

MlpEncoder::MlpEncoder(EncoderShape shape, std::vector<Linear> layers)
    : shape_(std::move(shape)), layers_(std::move(layers)) {
  validate_shape(shape_);
  if (layers_.size() + 1 != shape_.widths.size()) {
    throw DimensionError("encoder layer count does not match its width table");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].in_dim() != shape_.widths[i] || layers_[i].out_dim() != shape_.widths[i + 1] ||
        static_cast<std::size_t>(layers_[i].bias.size()) != shape_.widths[i + 1]) {
      throw DimensionError("encoder layer " + std::to_string(i) + " has the wrong shape");
    }
  }
}

MlpEncoder MlpEncoder::init(const EncoderShape& shape, SeededRng& rng) {
  validate_shape(shape);
  std::vector<Linear> layers;
  for (std::size_t i = 0; i + 1 < shape.widths.size(); ++i) {
    layers.push_back(Linear::uniform_init(shape.widths[i], shape.widths[i + 1], rng));
  }
  return MlpEncoder(shape, std::move(layers));
}

MlpEncoder MlpEncoder::zeros(const EncoderShape& shape) {
  validate_shape(shape);
  std::vector<Linear> layers;
  for (std::size_t i = 0; i + 1 < shape.widths.size(); ++i) {
    layers.push_back(Linear::zeros(shape.widths[i], shape.widths[i + 1]));
  }
  return MlpEncoder(shape, std::move(layers));
}

EncoderTrace MlpEncoder::forward_trace(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != shape_.input_dim()) {
    throw DimensionError("encoder expects input width " + std::to_string(shape_.input_dim()) +
                         ", got " + std::to_string(x.cols()));
  }
  EncoderTrace t;
  t.input = x;
  t.pre.reserve(layers_.size());
  Matrix act = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    t.pre.push_back(layers_[i].forward(act));
    if (i + 1 < layers_.size()) act = t.pre.back().cwiseMax(0.0);
  }
  t.features = shape_.output_relu ? Matrix(t.pre.back().cwiseMax(0.0)) : t.pre.back();
  if (shape_.residual) t.features += x;
  return t;
}

Matrix MlpEncoder::forward(const Matrix& x) const { return forward_trace(x).features; }

EncoderGrad MlpEncoder::backward(const EncoderTrace& trace, const Matrix& grad_features) const {
  if (grad_features.rows() != trace.features.rows() || grad_features.cols() != trace.features.cols()) {
    throw DimensionError("encoder backward: gradient shape does not match features");
  }
  EncoderGrad g;
  g.layers.resize(layers_.size());
  Matrix grad = grad_features;
  if (shape_.output_relu) grad = grad.cwiseProduct((trace.pre.back().array() > 0.0).cast<double>().matrix());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Matrix input = (i == 0) ? trace.input : Matrix(trace.pre[i - 1].cwiseMax(0.0));
    Matrix grad_in;
    g.layers[i] = linear_backward(layers_[i], input, grad, i > 0 ? &grad_in : nullptr);
    if (i > 0) grad = grad_in.cwiseProduct((trace.pre[i - 1].array() > 0.0).cast<double>().matrix());
  }
  return g;
}

ModalityModel ModalityModel::init(Modality m, const EncoderShape& shape, std::size_t classes,
                                  SeededRng& rng) {
  ModalityModel model;
  model.modality = m;
  SeededRng enc_rng = rng.split("encoder");
  SeededRng head_rng = rng.split("private-head");
  model.encoder = MlpEncoder::init(shape, enc_rng);
  model.head = Linear::uniform_init(shape.feature_dim(), classes, head_rng);
  return model;
}

SharedClassifiers SharedClassifiers::init(std::size_t feature_dim, std::size_t classes,
                                          SeededRng& rng) {
  SeededRng low_rng = rng.split("shared-low");
  SeededRng high_rng = rng.split("shared-high");
  return {Linear::uniform_init(feature_dim, classes, low_rng),
          Linear::uniform_init(feature_dim, classes, high_rng)};
}

// ---------------------------------------------------------------------------
// Parameter views

namespace {

template <typename T>
std::span<double> view(T& t) {
  return {t.data(), static_cast<std::size_t>(t.size())};
}
template <typename T>
std::span<const double> cview(const T& t) {
  return {t.data(), static_cast<std::size_t>(t.size())};
}

}  // namespace

ParamList parameters(ModalityModel& m) {
  ParamList out;
  for (Linear& l : m.encoder.layers()) {
    out.push_back(view(l.weight));
    out.push_back(view(l.bias));
  }
  out.push_back(view(m.head.weight));
  out.push_back(view(m.head.bias));
  return out;
}

ParamList parameters(SharedClassifiers& s) {
  return {view(s.low.weight), view(s.low.bias), view(s.high.weight), view(s.high.bias)};
}

GradList gradients(const EncoderGrad& enc, const LinearGrad& head) {
  GradList out;
  for (const LinearGrad& l : enc.layers) {
    out.push_back(cview(l.weight));
    out.push_back(cview(l.bias));
  }
  out.push_back(cview(head.weight));
  out.push_back(cview(head.bias));
  return out;
}

GradList gradients(const LinearGrad& low, const LinearGrad& high) {
  return {cview(low.weight), cview(low.bias), cview(high.weight), cview(high.bias)};
}

std::uint64_t parameter_hash(const ModalityModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::span<const double> v) { h = fnv1a64(std::as_bytes(v), h); };
  for (const Linear& l : m.encoder.layers()) {
    mix(cview(l.weight));
    mix(cview(l.bias));
  }
  mix(cview(m.head.weight));
  mix(cview(m.head.bias));
  return h;
}

// ---------------------------------------------------------------------------
// Optimizer

double poly_learning_rate(double lr0, std::uint64_t step, std::uint64_t total_steps, double power) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * std::pow(frac, power);
}

double SgdMomentum::current_learning_rate() const {
  return poly_learning_rate(config_.learning_rate, step_, config_.total_steps, config_.poly_power);
}

void SgdMomentum::step(const ParamList& params, const GradList& grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.size(), 0.0);
  }
  if (velocity_.size() != params.size()) throw DimensionError("optimizer parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || velocity_[i].size() != params[i].size()) {
      throw DimensionError("gradient " + std::to_string(i) + " does not match its parameter");
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in tensor " + std::to_string(i) + "; step aborted");
      }
    }
  }
  const double lr = current_learning_rate();
  const double m = config_.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < v.size(); ++j) {
      v[j] = m * v[j] + grads[i][j];
      params[i][j] -= lr * v[j];
    }
  }
  ++step_;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::optional<std::string> Checkpoint::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const NamedTensor* Checkpoint::find(std::string_view name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

NamedTensor tensor_of(std::string name, const Matrix& m) {
  return {std::move(name), static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols()),
          std::vector<double>(m.data(), m.data() + m.size())};
}

NamedTensor tensor_of(std::string name, const Vector& v) {
  return {std::move(name), static_cast<std::uint32_t>(v.size()), 1,
          std::vector<double>(v.data(), v.data() + v.size())};
}

void add_linear(Checkpoint& c, const std::string& prefix, const Linear& l) {
  c.tensors.push_back(tensor_of(prefix + ".weight", l.weight));
  c.tensors.push_back(tensor_of(prefix + ".bias", l.bias));
}

const NamedTensor& require(const Checkpoint& c, const std::string& name) {
  const NamedTensor* t = c.find(name);
  if (!t) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  return *t;
}

void copy_into(const NamedTensor& t, Matrix& m) {
  if (t.rows != m.rows() || t.cols != m.cols()) {
    throw CheckpointError("tensor '" + t.name + "' is " + std::to_string(t.rows) + "x" +
                          std::to_string(t.cols) + ", model expects " + std::to_string(m.rows()) +
                          "x" + std::to_string(m.cols()));
  }
  std::copy(t.values.begin(), t.values.end(), m.data());
}

void copy_into(const NamedTensor& t, Vector& v) {
  if (t.rows != v.size() || t.cols != 1) {
    throw CheckpointError("tensor '" + t.name + "' does not match a bias of length " +
                          std::to_string(v.size()));
  }
  std::copy(t.values.begin(), t.values.end(), v.data());
}

void restore_linear(const Checkpoint& c, const std::string& prefix, Linear& l) {
  copy_into(require(c, prefix + ".weight"), l.weight);
  copy_into(require(c, prefix + ".bias"), l.bias);
}

std::string join_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(w[i]);
  }
  return s;
}

std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(',', start), s.size());
    try {
      out.push_back(std::stoul(s.substr(start, end - start)));
    } catch (const std::exception&) {
      throw CheckpointError("bad width table '" + s + "'");
    }
    start = end + 1;
  }
  return out;
}

}  // namespace

Checkpoint snapshot(const ModalityModel& model, const SharedClassifiers* shared) {
  Checkpoint c;
  c.metadata = {{"modality", std::string(to_string(model.modality))},
                {"widths", join_widths(model.encoder.shape().widths)},
                {"output_relu", model.encoder.shape().output_relu ? "1" : "0"},
                {"residual", model.encoder.shape().residual ? "1" : "0"},
                {"classes", std::to_string(model.head.out_dim())},
                {"shared", shared ? "1" : "0"}};
  const auto& layers = model.encoder.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) add_linear(c, "encoder." + std::to_string(i), layers[i]);
  add_linear(c, "head", model.head);
  if (shared) {
    add_linear(c, "shared.low", shared->low);
    add_linear(c, "shared.high", shared->high);
  }
  return c;
}

void restore(ModalityModel& model, const Checkpoint& ckpt) {
  auto& layers = model.encoder.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    restore_linear(ckpt, "encoder." + std::to_string(i), layers[i]);
  }
  if (ckpt.find("encoder." + std::to_string(layers.size()) + ".weight")) {
    throw CheckpointError("checkpoint encoder is deeper than the target model");
  }
  restore_linear(ckpt, "head", model.head);
}

ModalityModel model_from_checkpoint(const Checkpoint& ckpt) {
  const auto widths = ckpt.meta("widths");
  const auto classes = ckpt.meta("classes");
  const auto modality = ckpt.meta("modality");
  if (!widths || !classes || !modality) throw CheckpointError("checkpoint metadata incomplete");
  EncoderShape shape;
  shape.widths = parse_widths(*widths);
  shape.output_relu = ckpt.meta("output_relu").value_or("0") == "1";
  shape.residual = ckpt.meta("residual").value_or("0") == "1";
  ModalityModel m;
  try {
    m.modality = parse_modality(*modality);
    m.encoder = MlpEncoder::zeros(shape);
    m.head = Linear::zeros(shape.feature_dim(), std::stoul(*classes));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint metadata: ") + e.what());
  }
  restore(m, ckpt);
  return m;
}

std::optional<SharedClassifiers> shared_from_checkpoint(const Checkpoint& ckpt) {
  const NamedTensor* lw = ckpt.find("shared.low.weight");
  const NamedTensor* hw = ckpt.find("shared.high.weight");
  if (!lw || !hw) return std::nullopt;
  SharedClassifiers s{Linear::zeros(lw->cols, lw->rows), Linear::zeros(hw->cols, hw->rows)};
  restore_linear(ckpt, "shared.low", s.low);
  restore_linear(ckpt, "shared.high", s.high);
  return s;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'F', 'D', 'K', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    buf.insert(buf.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    const auto* p = reinterpret_cast<const std::byte*>(s.data());
    buf.insert(buf.end(), p, p + s.size());
  }
  std::vector<std::byte> buf;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> b) : bytes(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw CheckpointError("checkpoint truncated");
  }
  std::span<const std::byte> bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char ch : kMagic) w.put(ch);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.put_string(k);
    w.put_string(v);
  }
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const NamedTensor& t : ckpt.tensors) {
    if (t.values.size() != static_cast<std::size_t>(t.rows) * t.cols) {
      throw CheckpointError("tensor '" + t.name + "' payload does not match its shape");
    }
    w.put_string(t.name);
    w.put(t.rows);
    w.put(t.cols);
  }
  const std::size_t payload_start = w.buf.size();
  for (const NamedTensor& t : ckpt.tensors) {
    for (double v : t.values) w.put(v);
  }
  const std::uint64_t sum =
      fnv1a64(std::span<const std::byte>(w.buf).subspan(payload_start));
  w.put(sum);
  return std::move(w.buf);
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  Reader r(bytes);
  for (char ch : kMagic) {
    if (r.get<char>() != ch) throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    std::string v = r.get_string();
    c.metadata.emplace_back(std::move(k), std::move(v));
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.get_string();
    t.rows = r.get<std::uint32_t>();
    t.cols = r.get<std::uint32_t>();
    c.tensors.push_back(std::move(t));
  }
  const std::size_t payload_start = r.pos;
  for (NamedTensor& t : c.tensors) {
    const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols;
    r.need(n * sizeof(double));
    t.values.resize(n);
    for (double& v : t.values) v = r.get<double>();
  }
  const std::uint64_t expected = fnv1a64(bytes.subspan(payload_start, r.pos - payload_start));
  if (r.get<std::uint64_t>() != expected) throw CheckpointError("checkpoint checksum mismatch");
  if (r.pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::byte> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(bytes);
}

}  // namespace fdkd

// SPDX-License-Identifier: Apache-2.0
#include "fdkd/data.hpp"

#include "fdkd/errors.hpp"
#include "fdkd/frequency.hpp"
#include "fdkd/io.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <string_view>

namespace fdkd {

void SyntheticConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (input_dim < 4 || input_dim % 2 != 0) throw ConfigError("input_dim must be even and >= 4");
  if (train_size < num_classes || test_size < num_classes) {
    throw ConfigError("train and test sizes must be >= num_classes");
  }
  const BandSplit split = BandSplit::make(input_dim, band_threshold);
  // Semantic content goes to the non-DC low bins.
  if (semantic_dim < 1 || semantic_dim > split.cutoff) {
    throw ConfigError("semantic_dim " + std::to_string(semantic_dim) + " exceeds low-band capacity " +
                      std::to_string(split.cutoff));
  }
  const double reals[] = {prototype_scale, semantic_noise, low_perturbation, high_signal,
                          high_noise,      scale_a,        offset_a,         scale_b,
                          offset_b};
  for (double v : reals) {
    if (!std::isfinite(v)) throw ConfigError("generator parameters must be finite");
  }
  if (semantic_noise < 0 || low_perturbation < 0 || high_signal < 0 || high_noise < 0) {
    throw ConfigError("noise and signal strengths must be >= 0");
  }
}

nlohmann::ordered_json to_json(const SyntheticConfig& c) {
  nlohmann::ordered_json j;
  j["num_classes"] = c.num_classes;
  j["input_dim"] = c.input_dim;
  j["semantic_dim"] = c.semantic_dim;
  j["train_size"] = c.train_size;
  j["test_size"] = c.test_size;
  j["band_threshold"] = c.band_threshold;
  j["prototype_scale"] = c.prototype_scale;
  j["semantic_noise"] = c.semantic_noise;
  j["low_perturbation"] = c.low_perturbation;
  j["high_signal"] = c.high_signal;
  j["high_noise"] = c.high_noise;
  j["scale_a"] = c.scale_a;
  j["offset_a"] = c.offset_a;
  j["scale_b"] = c.scale_b;
  j["offset_b"] = c.offset_b;
  j["seed"] = c.seed;
  return j;
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  try {
    c.num_classes = j.value("num_classes", c.num_classes);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.semantic_dim = j.value("semantic_dim", c.semantic_dim);
    c.train_size = j.value("train_size", c.train_size);
    c.test_size = j.value("test_size", c.test_size);
    c.band_threshold = j.value("band_threshold", c.band_threshold);
    c.prototype_scale = j.value("prototype_scale", c.prototype_scale);
    c.semantic_noise = j.value("semantic_noise", c.semantic_noise);
    c.low_perturbation = j.value("low_perturbation", c.low_perturbation);
    c.high_signal = j.value("high_signal", c.high_signal);
    c.high_noise = j.value("high_noise", c.high_noise);
    c.scale_a = j.value("scale_a", c.scale_a);
    c.offset_a = j.value("offset_a", c.offset_a);
    c.scale_b = j.value("scale_b", c.scale_b);
    c.offset_b = j.value("offset_b", c.offset_b);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad generator config: ") + e.what());
  }
  c.validate();
  return c;
}

Matrix Dataset::features(Modality m) const {
  Matrix out(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const RealVec& v = samples[i].features(m);
    std::copy(v.begin(), v.end(), row_span(out, static_cast<Eigen::Index>(i)).begin());
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

namespace {

// Per-class and per-modality structure shared by every sample of a run.
struct GeneratorTables {
  BandSplit split;
  std::vector<std::vector<double>> prototypes;           // [class][semantic]
  std::vector<std::vector<Complex>> projection;          // [low bin][semantic]
  std::vector<std::vector<std::vector<Complex>>> high;   // [modality][class][high bin]
  double bin_scale = 1.0;
};

Complex complex_normal(SeededRng& rng) {
  // Unit total variance.
  return {rng.normal() * std::sqrt(0.5), rng.normal() * std::sqrt(0.5)};
}

GeneratorTables build_tables(const SyntheticConfig& c) {
  GeneratorTables t;
  t.split = BandSplit::make(c.input_dim, c.band_threshold);
  const SeededRng root(c.seed);
  // A bin of unit variance contributes 2/D to each coordinate's variance after
  // the inverse transform; sqrt(D) puts a full band of such bins at O(1).
  t.bin_scale = std::sqrt(static_cast<double>(c.input_dim));

  for (std::size_t k = 0; k < c.num_classes; ++k) {
    SeededRng rng = root.split("prototype", k);
    std::vector<double> z(c.semantic_dim);
    for (double& v : z) v = c.prototype_scale * rng.normal();
    t.prototypes.push_back(std::move(z));
  }
  SeededRng proj_rng = root.split("projection");
  const double proj_norm = 1.0 / std::sqrt(static_cast<double>(c.semantic_dim));
  t.projection.assign(t.split.cutoff, std::vector<Complex>(c.semantic_dim));
  for (std::size_t k = 1; k < t.split.cutoff; ++k) {
    for (auto& w : t.projection[k]) w = complex_normal(proj_rng) * proj_norm;
  }
  t.high.resize(2);
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t k = 0; k < c.num_classes; ++k) {
      SeededRng rng = root.split(m == 0 ? "high-pattern-a" : "high-pattern-b", k);
      std::vector<Complex> pattern(t.split.bins - t.split.cutoff);
      for (auto& v : pattern) v = complex_normal(rng);
      t.high[m].push_back(std::move(pattern));
    }
  }
  return t;
}

RealVec synthesize(const SyntheticConfig& c, const GeneratorTables& t, const std::vector<double>& z,
                   int label, std::size_t modality, SeededRng& rng) {
  Spectrum s = Spectrum::zeros(c.input_dim);
  for (std::size_t k = 1; k < t.split.cutoff; ++k) {
    Complex v{0.0, 0.0};
    for (std::size_t j = 0; j < z.size(); ++j) v += t.projection[k][j] * z[j];
    v += c.low_perturbation * complex_normal(rng);
    s[k] = v * t.bin_scale;
  }
  const auto& pattern = t.high[modality][static_cast<std::size_t>(label)];
  for (std::size_t k = t.split.cutoff; k < t.split.bins; ++k) {
    Complex v = c.high_signal * pattern[k - t.split.cutoff] + c.high_noise * complex_normal(rng);
    s[k] = v * t.bin_scale;
  }
  s[t.split.bins - 1].imag(0.0);
  RealVec x = irdft(s);
  const double scale = modality == 0 ? c.scale_a : c.scale_b;
  const double offset = modality == 0 ? c.offset_a : c.offset_b;
  for (double& v : x) v = scale * v + offset;
  return x;
}

Dataset generate_split(const SyntheticConfig& c, const GeneratorTables& t, std::string_view name,
                       std::size_t count) {
  Dataset d;
  d.num_classes = c.num_classes;
  d.dim = c.input_dim;
  d.samples.resize(count);
  const SeededRng root(c.seed);
  // Each sample owns its stream, so samples could be generated in any order.
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng rng = root.split(name, i);
    PairedSample& s = d.samples[i];
    s.id = static_cast<std::int64_t>(i);
    s.label = static_cast<int>(i % c.num_classes);
    std::vector<double> z = t.prototypes[static_cast<std::size_t>(s.label)];
    for (double& v : z) v += c.semantic_noise * rng.normal();
    SeededRng rng_a = rng.split("modality-a");
    SeededRng rng_b = rng.split("modality-b");
    s.x_a = synthesize(c, t, z, s.label, 0, rng_a);
    s.x_b = synthesize(c, t, z, s.label, 1, rng_b);
  }
  return d;
}

}  // namespace

SyntheticData generate(const SyntheticConfig& config) {
  config.validate();
  const GeneratorTables tables = build_tables(config);
  return {generate_split(config, tables, "train", config.train_size),
          generate_split(config, tables, "test", config.test_size)};
}

std::string features_to_csv(const Dataset& d) {
  std::string out = "id,label,m";
  for (std::size_t j = 0; j < d.dim; ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (const PairedSample& s : d.samples) {
    for (Modality m : {Modality::a, Modality::b}) {
      out += std::to_string(s.id) + ',' + std::to_string(s.label) + ',' + std::string(to_string(m));
      for (double v : s.features(m)) {
        out += ',';
        out += format_double(v);
      }
      out += '\n';
    }
  }
  return out;
}

void save_features(const Dataset& d, const std::filesystem::path& path) {
  write_file_atomic(path, features_to_csv(d));
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, out);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void fail(std::size_t line, const std::string& why) {
  throw ParseError("line " + std::to_string(line) + ": " + why);
}

}  // namespace

Dataset parse_features_csv(const std::string& text, std::optional<std::size_t> num_classes) {
  std::vector<std::string_view> lines;
  {
    std::string_view rest = text;
    while (!rest.empty()) {
      const std::size_t nl = rest.find('\n');
      std::string_view line = rest.substr(0, nl);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }
  if (lines.empty() || lines.front().empty()) fail(1, "missing header");

  const auto header = split_csv(lines.front());
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "m") {
    fail(1, "header must start with id,label,m and list at least one feature");
  }
  const std::size_t dim = header.size() - 3;
  for (std::size_t j = 0; j < dim; ++j) {
    if (header[3 + j] != "f" + std::to_string(j)) {
      fail(1, "expected column f" + std::to_string(j) + ", found '" + std::string(header[3 + j]) + "'");
    }
  }

  struct Partial {
    int label = -1;
    std::size_t first_line = 0;
    std::optional<RealVec> a, b;
  };
  std::map<std::int64_t, Partial> by_id;
  std::vector<std::int64_t> order;
  int max_label = -1;

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) {
      if (i + 1 == lines.size()) break;
      fail(line_no, "empty row");
    }
    const auto fields = split_csv(lines[i]);
    if (fields.size() != header.size()) {
      fail(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    std::int64_t id = 0;
    int label = 0;
    if (!parse_number(fields[0], id)) fail(line_no, "bad id '" + std::string(fields[0]) + "'");
    if (!parse_number(fields[1], label)) fail(line_no, "bad label '" + std::string(fields[1]) + "'");
    if (label < 0 || (num_classes && static_cast<std::size_t>(label) >= *num_classes)) {
      fail(line_no, "label " + std::to_string(label) + " out of range");
    }
    Modality m;
    if (fields[2] == "a") {
      m = Modality::a;
    } else if (fields[2] == "b") {
      m = Modality::b;
    } else {
      fail(line_no, "modality must be a or b, found '" + std::string(fields[2]) + "'");
    }
    RealVec values(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      if (!parse_number(fields[3 + j], values[j]) || !std::isfinite(values[j])) {
        fail(line_no, "bad value in column f" + std::to_string(j));
      }
    }
    auto [it, inserted] = by_id.try_emplace(id);
    Partial& p = it->second;
    if (inserted) {
      p.label = label;
      p.first_line = line_no;
      order.push_back(id);
    } else if (p.label != label) {
      fail(line_no, "label disagrees with line " + std::to_string(p.first_line) + " for id " +
                        std::to_string(id));
    }
    auto& slot = (m == Modality::a) ? p.a : p.b;
    if (slot) fail(line_no, "duplicate modality row for id " + std::to_string(id));
    slot = std::move(values);
    max_label = std::max(max_label, label);
  }

  Dataset d;
  d.dim = dim;
  d.num_classes = num_classes.value_or(static_cast<std::size_t>(std::max(2, max_label + 1)));
  for (std::int64_t id : order) {
    Partial& p = by_id[id];
    if (!p.a || !p.b) {
      throw PairingError("id " + std::to_string(id) + " (line " + std::to_string(p.first_line) +
                         ") lacks a row for modality " + (p.a ? "b" : "a"));
    }
    d.samples.push_back({id, p.label, std::move(*p.a), std::move(*p.b)});
  }
  return d;
}

Dataset load_features(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  return parse_features_csv(read_file_text(path), num_classes);
}

}  // namespace fdkd

// SPDX-License-Identifier: Apache-2.0
#include "fdkd/analysis.hpp"

#include "fdkd/errors.hpp"
#include "fdkd/io.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>

namespace fdkd {

SimilarityReport similarity_report(const Matrix& features_a, const Matrix& features_b,
                                   const BandSplit& split, std::string source) {
  if (features_a.rows() != features_b.rows()) {
    throw PairingError("similarity needs paired rows: " + std::to_string(features_a.rows()) + " vs " +
                       std::to_string(features_b.rows()));
  }
  if (features_a.cols() != features_b.cols()) {
    throw DimensionError("paired features differ in width");
  }
  SimilarityReport r;
  r.samples = static_cast<std::size_t>(features_a.rows());
  r.threshold = split.threshold;
  r.source = std::move(source);

  const BandBatch ba = decompose_rows(features_a, split);
  const BandBatch bb = decompose_rows(features_b, split);
  double sums[3] = {0.0, 0.0, 0.0};
  std::size_t counts[3] = {0, 0, 0};
  std::size_t* degenerate[3] = {&r.degenerate_raw, &r.degenerate_low, &r.degenerate_high};
  for (Eigen::Index i = 0; i < features_a.rows(); ++i) {
    const Cosine c[3] = {cosine_similarity(row_span(features_a, i), row_span(features_b, i)),
                         cosine_similarity(row_span(ba.low, i), row_span(bb.low, i)),
                         cosine_similarity(row_span(ba.high, i), row_span(bb.high, i))};
    for (int v = 0; v < 3; ++v) {
      if (c[v].degenerate) {
        ++*degenerate[v];
      } else {
        sums[v] += c[v].value;
        ++counts[v];
      }
    }
  }
  double* means[3] = {&r.raw, &r.low, &r.high};
  for (int v = 0; v < 3; ++v) *means[v] = counts[v] ? sums[v] / static_cast<double>(counts[v]) : 0.0;
  return r;
}

nlohmann::ordered_json to_json(const SimilarityReport& r) {
  nlohmann::ordered_json j;
  j["source"] = r.source;
  j["threshold"] = r.threshold;
  j["samples"] = r.samples;
  j["mean_cosine"] = {{"raw", r.raw}, {"low", r.low}, {"high", r.high}};
  j["degenerate"] = {{"raw", r.degenerate_raw}, {"low", r.degenerate_low}, {"high", r.degenerate_high}};
  j["note"] = "paired per-sample cosine on unstandardized features; per-modality mean offsets are kept";
  return j;
}

std::string similarity_csv(const SimilarityReport& r) {
  std::string out = "variant,mean_cosine,degenerate\n";
  out += "raw," + format_double(r.raw) + ',' + std::to_string(r.degenerate_raw) + '\n';
  out += "low," + format_double(r.low) + ',' + std::to_string(r.degenerate_low) + '\n';
  out += "high," + format_double(r.high) + ',' + std::to_string(r.degenerate_high) + '\n';
  return out;
}

RealVec mean_profile(const Matrix& features) {
  if (features.rows() == 0) throw DataError("mean profile of an empty batch");
  const Vector m = features.colwise().mean().transpose();
  return RealVec(m.data(), m.data() + m.size());
}

std::string mean_profile_csv(const RealVec& mean_a, const RealVec& mean_b) {
  if (mean_a.size() != mean_b.size()) throw DimensionError("mean profiles differ in length");
  std::string out = "dim,mean_a,mean_b\n";
  for (std::size_t j = 0; j < mean_a.size(); ++j) {
    out += std::to_string(j) + ',' + format_double(mean_a[j]) + ',' + format_double(mean_b[j]) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

std::string to_string(AblationSuite s) {
  switch (s) {
    case AblationSuite::components: return "components";
    case AblationSuite::loss_grid: return "loss_grid";
    case AblationSuite::threshold: return "threshold";
    case AblationSuite::lambda: return "lambda";
  }
  return "unknown";
}

AblationSuite parse_ablation_suite(const std::string& text) {
  if (text == "components") return AblationSuite::components;
  if (text == "loss_grid" || text == "loss-grid") return AblationSuite::loss_grid;
  if (text == "threshold") return AblationSuite::threshold;
  if (text == "lambda") return AblationSuite::lambda;
  throw ConfigError("unknown ablation suite '" + text + "'");
}

namespace {

std::string trim_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<AblationVariant> ablation_variants(AblationSuite suite, const ExperimentConfig& base) {
  std::vector<AblationVariant> out;
  auto with = [&](std::string label, auto&& edit) {
    ExperimentConfig c = base;
    c.low_loss.reset();
    c.high_loss.reset();
    edit(c);
    out.push_back({std::move(label), std::move(c)});
  };
  switch (suite) {
    case AblationSuite::components: {
      struct Pattern {
        const char* label;
        Toggles t;
      };
      const Pattern patterns[] = {
          {"none", {false, false, false, false}},
          {"freq", {true, false, false, false}},
          {"align", {false, true, false, false}},
          {"freq+align", {true, true, false, false}},
          {"freq+scale", {true, false, true, false}},
          {"freq+align+scale", {true, true, true, false}},
          {"freq+align+scale+log", {true, true, true, true}},
      };
      for (const Pattern& p : patterns) with(p.label, [&](ExperimentConfig& c) { c.toggles = p.t; });
      break;
    }
    case AblationSuite::loss_grid:
      for (BandLossKind low : {BandLossKind::mse, BandLossKind::logmse}) {
        for (BandLossKind high : {BandLossKind::mse, BandLossKind::logmse}) {
          with("low=" + std::string(to_string(low)) + ",high=" + std::string(to_string(high)),
               [&](ExperimentConfig& c) {
                 c.toggles = Toggles{};
                 c.low_loss = low;
                 c.high_loss = high;
               });
        }
      }
      break;
    case AblationSuite::threshold:
      for (auto [label, t] : {std::pair{"1/4", 0.25}, std::pair{"1/3", 1.0 / 3.0}, std::pair{"1/2", 0.5}}) {
        with(std::string("threshold=") + label, [&](ExperimentConfig& c) {
          c.toggles = Toggles{};
          c.threshold = t;
        });
      }
      break;
    case AblationSuite::lambda:
      for (double l1 : {0.5, 1.0, 3.0, 5.0}) {
        for (double l2 : {0.5, 1.0, 3.0, 5.0}) {
          with("lambda1=" + trim_number(l1) + ",lambda2=" + trim_number(l2), [&](ExperimentConfig& c) {
            c.toggles = Toggles{};
            c.weights = {l1, l2};
          });
        }
      }
      break;
  }
  return out;
}

namespace {

struct Task {
  std::size_t row;
  std::size_t seed_index;
  Modality student;
};

double run_task(const Task& t, const std::vector<AblationVariant>& variants,
                const std::vector<std::uint64_t>& seeds,
                const std::map<std::pair<std::size_t, int>, ModalityModel>& teachers,
                const Dataset& train, const Dataset& test) {
  ExperimentConfig c = variants[t.row].config;
  c.student_modality = t.student;
  c.seed = seeds[t.seed_index];
  const ModalityModel& teacher = teachers.at({t.seed_index, static_cast<int>(other(t.student))});
  return distill(train, test, teacher, c).report.test_accuracy;
}

// Runs tasks across `jobs` forked workers. Each worker streams
// "<task index> <accuracy>" lines back through a pipe.
std::vector<double> run_tasks_forked(const std::vector<Task>& tasks, std::size_t jobs,
                                     const std::function<double(const Task&)>& fn) {
  std::vector<double> results(tasks.size(), 0.0);
  std::vector<bool> done(tasks.size(), false);
  struct Worker {
    pid_t pid;
    int fd;
  };
  std::vector<Worker> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    int fds[2];
    if (pipe(fds) != 0) throw DataError(std::string("pipe failed: ") + std::strerror(errno));
    const pid_t pid = fork();
    if (pid < 0) throw DataError(std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
      close(fds[0]);
      FILE* out = fdopen(fds[1], "w");
      int status = 0;
      try {
        for (std::size_t i = w; i < tasks.size(); i += jobs) {
          std::fprintf(out, "%zu %s\n", i, format_double(fn(tasks[i])).c_str());
          std::fflush(out);
        }
      } catch (const std::exception& e) {
        std::fprintf(out, "E %s\n", e.what());
        status = 3;
      }
      std::fclose(out);
      _exit(status);
    }
    close(fds[1]);
    workers.push_back({pid, fds[0]});
  }
  std::string failure;
  for (const Worker& w : workers) {
    FILE* in = fdopen(w.fd, "r");
    char line[1024];
    while (std::fgets(line, sizeof line, in)) {
      if (line[0] == 'E') {
        failure = line + 2;
        continue;
      }
      std::size_t idx = 0;
      char value[64];
      if (std::sscanf(line, "%zu %63s", &idx, value) == 2 && idx < tasks.size()) {
        results[idx] = std::strtod(value, nullptr);
        done[idx] = true;
      }
    }
    std::fclose(in);
    int status = 0;
    waitpid(w.pid, &status, 0);
  }
  if (!failure.empty()) throw NumericError("ablation worker failed: " + failure);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!done[i]) throw DataError("ablation worker died before reporting task " + std::to_string(i));
  }
  return results;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

AblationGrid run_ablation(AblationSuite suite, const ExperimentConfig& base, const Dataset& train,
                          const Dataset& test, const AblationOptions& options) {
  if (options.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  const std::vector<AblationVariant> variants = ablation_variants(suite, base);
  for (const auto& v : variants) v.config.validate();

  AblationGrid grid;
  grid.suite = suite;
  grid.seeds = options.seeds;

  // Unimodal runs double as teachers and as the no-distillation baseline.
  std::map<std::pair<std::size_t, int>, ModalityModel> teachers;
  for (std::size_t s = 0; s < options.seeds.size(); ++s) {
    for (Modality m : {Modality::a, Modality::b}) {
      ExperimentConfig c = base;
      c.student_modality = m;
      c.seed = options.seeds[s];
      TrainResult r = train_unimodal(train, test, c);
      (m == Modality::a ? grid.baseline_a : grid.baseline_b).push_back(r.report.test_accuracy);
      r.model.frozen = true;
      teachers.emplace(std::pair{s, static_cast<int>(m)}, std::move(r.model));
    }
  }

  std::vector<Task> tasks;
  for (std::size_t row = 0; row < variants.size(); ++row) {
    for (std::size_t s = 0; s < options.seeds.size(); ++s) {
      for (Modality m : {Modality::a, Modality::b}) tasks.push_back({row, s, m});
    }
  }
  auto fn = [&](const Task& t) { return run_task(t, variants, options.seeds, teachers, train, test); };
  std::vector<double> acc;
  if (options.jobs > 1) {
    acc = run_tasks_forked(tasks, std::min(options.jobs, tasks.size()), fn);
  } else {
    for (const Task& t : tasks) acc.push_back(fn(t));
  }

  for (std::size_t row = 0; row < variants.size(); ++row) {
    AblationRow r;
    r.label = variants[row].label;
    ExperimentConfig echo = variants[row].config;
    echo.seed = options.seeds.front();
    r.config = to_json(echo);
    r.config.erase("student_modality");
    r.config.erase("seed");
    grid.rows.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    AblationRow& r = grid.rows[tasks[i].row];
    (tasks[i].student == Modality::a ? r.accuracy_a : r.accuracy_b).push_back(acc[i]);
  }
  for (AblationRow& r : grid.rows) {
    r.mean_a = mean_of(r.accuracy_a);
    r.mean_b = mean_of(r.accuracy_b);
  }
  return grid;
}

nlohmann::ordered_json to_json(const AblationGrid& g) {
  nlohmann::ordered_json j;
  j["suite"] = to_string(g.suite);
  j["seeds"] = g.seeds;
  j["baseline"] = {{"accuracy_a", g.baseline_a},
                   {"accuracy_b", g.baseline_b},
                   {"mean_a", mean_of(g.baseline_a)},
                   {"mean_b", mean_of(g.baseline_b)}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const AblationRow& r : g.rows) {
    nlohmann::ordered_json row;
    row["label"] = r.label;
    row["config"] = r.config;
    row["accuracy_a"] = r.accuracy_a;
    row["accuracy_b"] = r.accuracy_b;
    row["mean_a"] = r.mean_a;
    row["mean_b"] = r.mean_b;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

std::string ablation_csv(const AblationGrid& g) {
  std::string out =
      "label,freq,align,scale,log,low_loss,high_loss,threshold,lambda1,lambda2,mean_a,mean_b\n";
  auto field = [](const nlohmann::ordered_json& j, const char* key) -> std::string {
    const auto& v = j.at(key);
    if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return "";
    return format_double(v.get<double>());
  };
  for (const AblationRow& r : g.rows) {
    out += '"' + r.label + '"';
    for (const char* key : {"freq", "align", "scale", "log", "low_loss", "high_loss", "threshold",
                            "lambda1", "lambda2"}) {
      out += ',' + field(r.config, key);
    }
    out += ',' + format_double(r.mean_a) + ',' + format_double(r.mean_b) + '\n';
  }
  return out;
}

void validate_ablation_json(const nlohmann::json& j) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw DataError("ablation grid: " + what);
  };
  require(j.is_object(), "top level must be an object");
  require(j.contains("suite") && j["suite"].is_string(), "missing suite");
  parse_ablation_suite(j["suite"].get<std::string>());
  require(j.contains("seeds") && j["seeds"].is_array() && !j["seeds"].empty(), "missing seeds");
  const std::size_t n_seeds = j["seeds"].size();
  require(j.contains("baseline") && j["baseline"].is_object(), "missing baseline");
  for (const char* k : {"accuracy_a", "accuracy_b"}) {
    require(j["baseline"].contains(k) && j["baseline"][k].size() == n_seeds, std::string("baseline.") + k);
  }
  require(j.contains("rows") && j["rows"].is_array() && !j["rows"].empty(), "missing rows");
  for (const auto& row : j["rows"]) {
    require(row.contains("label") && row["label"].is_string(), "row without label");
    require(row.contains("config") && row["config"].is_object(), "row without config");
    for (const char* k : {"freq", "align", "scale", "log", "threshold", "lambda1", "lambda2"}) {
      require(row["config"].contains(k), std::string("row config lacks ") + k);
    }
    for (const char* k : {"accuracy_a", "accuracy_b"}) {
      require(row.contains(k) && row[k].is_array() && row[k].size() == n_seeds,
              std::string("row ") + k + " must have one entry per seed");
      for (const auto& v : row[k]) {
        require(v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0,
                "accuracy outside [0, 1]");
      }
    }
    for (const char* k : {"mean_a", "mean_b"}) require(row.contains(k) && row[k].is_number(), k);
  }
}

}  // namespace fdkd

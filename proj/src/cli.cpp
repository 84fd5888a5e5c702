// SPDX-License-Identifier: Apache-2.0
#include "fdkd/cli.hpp"

#include "fdkd/analysis.hpp"
#include "fdkd/data.hpp"
#include "fdkd/io.hpp"
#include "fdkd/models.hpp"
#include "fdkd/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fdkd::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage:
    case ErrorCategory::config:
      return 1;
    case ErrorCategory::numeric:
      return 3;
    default:
      return 2;
  }
}

namespace {

struct ExperimentFlags {
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  std::size_t batch = 64;
  double lr = 1e-2;
  double momentum = 0.9;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double threshold = 0.5;
  std::size_t dim = 64;
  bool no_freq = false;
  bool no_align = false;
  bool no_scale = false;
  bool no_log = false;
  std::string student_modality = "a";
  std::string low_loss;
  std::string high_loss;
  bool align_standardized = false;
  bool dedup = false;
};

void add_experiment_flags(CLI::App* app, ExperimentFlags& f, bool student_flag) {
  app->add_option("--seed", f.seed, "Run seed");
  app->add_option("--epochs", f.epochs, "Training epochs");
  app->add_option("--batch", f.batch, "Batch size")->check(CLI::PositiveNumber);
  app->add_option("--lr", f.lr, "Base learning rate");
  app->add_option("--momentum", f.momentum, "SGD momentum");
  app->add_option("--lambda1", f.lambda1, "Low-band distillation weight");
  app->add_option("--lambda2", f.lambda2, "High-band distillation weight");
  app->add_option("--threshold", f.threshold, "Low-band fraction of the spectrum");
  app->add_option("--dim", f.dim, "Feature dimension D");
  app->add_flag("--no-freq", f.no_freq, "Disable frequency decomposition (also disables scale and log)");
  app->add_flag("--no-align", f.no_align, "Disable shared-classifier alignment");
  app->add_flag("--no-scale", f.no_scale, "Disable band standardization");
  app->add_flag("--no-log", f.no_log, "Use MSE instead of logMSE on the high band");
  if (student_flag) {
    app->add_option("--student-modality", f.student_modality, "Modality to train (a or b)")
        ->check(CLI::IsMember({"a", "b"}));
  }
  app->add_option("--low-loss", f.low_loss, "Override the low-band loss (mse or logmse)")
      ->check(CLI::IsMember({"mse", "logmse"}));
  app->add_option("--high-loss", f.high_loss, "Override the high-band loss (mse or logmse)")
      ->check(CLI::IsMember({"mse", "logmse"}));
  app->add_flag("--align-standardized", f.align_standardized, "Feed standardized bands to the shared classifiers");
  app->add_flag("--dedup-student-band-ce", f.dedup,
                "Drop the student band cross-entropy terms from the task loss");
}

ExperimentConfig resolve(const ExperimentFlags& f) {
  ExperimentConfig c;
  c.seed = f.seed;
  c.epochs = f.epochs;
  c.batch_size = f.batch;
  c.learning_rate = f.lr;
  c.momentum = f.momentum;
  c.weights = {f.lambda1, f.lambda2};
  c.threshold = f.threshold;
  c.feature_dim = f.dim;
  c.toggles = {!f.no_freq, !f.no_align, !f.no_freq && !f.no_scale, !f.no_freq && !f.no_log};
  c.student_modality = parse_modality(f.student_modality);
  if (!f.low_loss.empty()) c.low_loss = parse_band_loss(f.low_loss);
  if (!f.high_loss.empty()) c.high_loss = parse_band_loss(f.high_loss);
  c.align_standardized = f.align_standardized;
  c.dedup_student_band_ce = f.dedup;
  c.validate();
  return c;
}

struct DataFlags {
  std::string dir;
  std::optional<std::size_t> classes;
};

void add_data_flags(CLI::App* app, DataFlags& d) {
  app->add_option("--data", d.dir, "Directory holding train.csv and test.csv")->required();
  app->add_option("--classes", d.classes, "Number of classes (default: inferred from train.csv)");
}

struct Splits {
  Dataset train;
  Dataset test;
};

Splits load_splits(const DataFlags& d) {
  Splits s;
  s.train = load_features(fs::path(d.dir) / "train.csv", d.classes);
  s.test = load_features(fs::path(d.dir) / "test.csv", s.train.num_classes);
  if (s.train.dim != s.test.dim) throw DimensionError("train.csv and test.csv have different widths");
  return s;
}

Dataset load_split(const DataFlags& d, const std::string& split, std::optional<std::size_t> classes) {
  if (split != "train" && split != "test") throw UsageError("--split must be train or test");
  return load_features(fs::path(d.dir) / (split + ".csv"), d.classes ? d.classes : classes);
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

fs::path prepare_out(const std::string& out) {
  const fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory " + out + ": " + ec.message());
  return p;
}

void write_echo(const fs::path& out, const std::string& command, ordered_json resolved) {
  ordered_json j;
  j["command"] = command;
  j.update(resolved);
  write_file_atomic(out / "config.json", dump(j));
}

// ---------------------------------------------------------------------------

struct GenData {
  SyntheticConfig cfg;
  std::string out;
};

void run_gen_data(const GenData& g) {
  g.cfg.validate();
  const fs::path out = prepare_out(g.out);
  const SyntheticData data = generate(g.cfg);
  save_features(data.train, out / "train.csv");
  save_features(data.test, out / "test.csv");
  ordered_json r;
  r["synthetic"] = to_json(g.cfg);
  write_echo(out, "gen-data", r);
}

struct Train {
  ExperimentFlags exp;
  DataFlags data;
  std::string teacher;
  bool student_given = false;
  std::string out;
};

void write_train_outputs(const fs::path& out, const TrainResult& result) {
  save_checkpoint(out / "model.ckpt", result.checkpoint());
  write_file_atomic(out / "report.json", dump(to_json(result.report)));
}

void run_train_uni(const Train& t) {
  const ExperimentConfig cfg = resolve(t.exp);
  const Splits s = load_splits(t.data);
  const fs::path out = prepare_out(t.out);
  ordered_json r;
  r["data"] = t.data.dir;
  r["experiment"] = to_json(cfg);
  write_echo(out, "train-uni", r);
  write_train_outputs(out, train_unimodal(s.train, s.test, cfg));
}

void run_distill(const Train& t) {
  const ModalityModel teacher = model_from_checkpoint(load_checkpoint(t.teacher));
  ExperimentFlags flags = t.exp;
  if (!t.student_given) flags.student_modality = std::string(to_string(other(teacher.modality)));
  const ExperimentConfig cfg = resolve(flags);
  const Splits s = load_splits(t.data);
  const fs::path out = prepare_out(t.out);
  ordered_json r;
  r["data"] = t.data.dir;
  r["teacher"] = t.teacher;
  r["teacher_modality"] = std::string(to_string(teacher.modality));
  r["experiment"] = to_json(cfg);
  write_echo(out, "distill", r);
  write_train_outputs(out, distill(s.train, s.test, teacher, cfg));
}

struct Eval {
  std::string checkpoint;
  DataFlags data;
  std::string split = "test";
  std::string out;
};

void run_eval(const Eval& e) {
  const ModalityModel model = model_from_checkpoint(load_checkpoint(e.checkpoint));
  const Dataset d = load_split(e.data, e.split, model.head.out_dim());
  const fs::path out = prepare_out(e.out);
  ordered_json r;
  r["checkpoint"] = e.checkpoint;
  r["data"] = e.data.dir;
  r["split"] = e.split;
  write_echo(out, "eval", r);
  const EvalResult ev = evaluate(model, d);
  ordered_json j;
  j["modality"] = std::string(to_string(model.modality));
  j["split"] = e.split;
  j["samples"] = d.size();
  j["accuracy"] = ev.accuracy;
  j["per_class_accuracy"] = ev.per_class_accuracy;
  write_file_atomic(out / "eval.json", dump(j));
}

struct Analyze {
  DataFlags data;
  std::string features;
  std::string checkpoint_a;
  std::string checkpoint_b;
  std::string split = "train";
  double threshold = 0.5;
  std::string out;
};

struct PairedFeatures {
  Matrix a;
  Matrix b;
};

ModalityModel load_model_for(const std::string& path, Modality expected) {
  ModalityModel m = model_from_checkpoint(load_checkpoint(path));
  if (m.modality != expected) {
    throw UsageError(path + " holds a modality-" + std::string(to_string(m.modality)) + " model, expected " +
                     std::string(to_string(expected)));
  }
  return m;
}

PairedFeatures encode_pair(const Dataset& d, const std::string& ckpt_a, const std::string& ckpt_b) {
  const ModalityModel ma = load_model_for(ckpt_a, Modality::a);
  const ModalityModel mb = load_model_for(ckpt_b, Modality::b);
  return {ma.encoder.forward(d.features(Modality::a)), mb.encoder.forward(d.features(Modality::b))};
}

void run_analyze(const Analyze& a) {
  const bool from_file = !a.features.empty();
  if (from_file == !a.data.dir.empty()) throw UsageError("give exactly one of --features or --data");
  if (a.checkpoint_a.empty() != a.checkpoint_b.empty()) {
    throw UsageError("--checkpoint-a and --checkpoint-b go together");
  }
  if (from_file && !a.checkpoint_a.empty()) throw UsageError("checkpoints need --data, not --features");

  std::string source;
  PairedFeatures f;
  if (from_file) {
    const Dataset d = load_features(a.features, a.data.classes);
    f = {d.features(Modality::a), d.features(Modality::b)};
    source = "features:" + a.features;
  } else {
    const Dataset d = load_split(a.data, a.split, std::nullopt);
    if (a.checkpoint_a.empty()) {
      f = {d.features(Modality::a), d.features(Modality::b)};
      source = "input:" + a.split;
    } else {
      f = encode_pair(d, a.checkpoint_a, a.checkpoint_b);
      source = "trained:" + a.split;
    }
  }
  const BandSplit split = BandSplit::make(static_cast<std::size_t>(f.a.cols()), a.threshold);
  const SimilarityReport rep = similarity_report(f.a, f.b, split, source);

  const fs::path out = prepare_out(a.out);
  ordered_json r;
  r["data"] = a.data.dir;
  r["features"] = a.features;
  r["checkpoint_a"] = a.checkpoint_a;
  r["checkpoint_b"] = a.checkpoint_b;
  r["split"] = a.split;
  r["threshold"] = a.threshold;
  write_echo(out, "analyze", r);
  write_file_atomic(out / "similarity.json", dump(to_json(rep)));
  write_file_atomic(out / "similarity.csv", similarity_csv(rep));
  write_file_atomic(out / "mean_profile.csv", mean_profile_csv(mean_profile(f.a), mean_profile(f.b)));
}

struct Ablate {
  ExperimentFlags exp;
  DataFlags data;
  std::string suite = "components";
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t jobs = 1;
  std::string out;
};

void run_ablate(const Ablate& a) {
  const ExperimentConfig base = resolve(a.exp);
  const AblationSuite suite = parse_ablation_suite(a.suite);
  if (a.seeds.empty()) throw UsageError("--seeds needs at least one seed");
  const Splits s = load_splits(a.data);
  const fs::path out = prepare_out(a.out);
  ordered_json r;
  r["data"] = a.data.dir;
  r["suite"] = a.suite;
  r["seeds"] = a.seeds;
  r["experiment"] = to_json(base);
  write_echo(out, "ablate", r);
  const AblationGrid grid = run_ablation(suite, base, s.train, s.test, {a.seeds, a.jobs});
  write_file_atomic(out / "grid.json", dump(to_json(grid)));
  write_file_atomic(out / "grid.csv", ablation_csv(grid));
}

struct Export {
  DataFlags data;
  std::string checkpoint_a;
  std::string checkpoint_b;
  std::string split = "test";
  std::string out;
};

void run_export(const Export& e) {
  Dataset d = load_split(e.data, e.split, std::nullopt);
  const PairedFeatures f = encode_pair(d, e.checkpoint_a, e.checkpoint_b);
  if (f.a.cols() != f.b.cols()) throw DimensionError("the two encoders emit different widths");
  d.dim = static_cast<std::size_t>(f.a.cols());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.samples[i].x_a.assign(f.a.row(r).begin(), f.a.row(r).end());
    d.samples[i].x_b.assign(f.b.row(r).begin(), f.b.row(r).end());
  }
  const fs::path out = prepare_out(e.out);
  ordered_json r;
  r["data"] = e.data.dir;
  r["checkpoint_a"] = e.checkpoint_a;
  r["checkpoint_b"] = e.checkpoint_b;
  r["split"] = e.split;
  write_echo(out, "export-features", r);
  save_features(d, out / "features.csv");
}

// Plain `key = value` lines (with `#` comments) apply to whichever subcommand
// is being run.
class SubcommandConfig : public CLI::ConfigTOML {
 public:
  explicit SubcommandConfig(const CLI::App* app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> items = CLI::ConfigTOML::from_config(input);
    const auto subs = app_->get_subcommands();
    if (subs.empty()) return items;
    for (auto& item : items) item.parents.insert(item.parents.begin(), subs.front()->get_name());
    return items;
  }

 private:
  const CLI::App* app_;
};

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-decoupled cross-modal knowledge distillation"};
  app.name("fdkd");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  GenData gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate the paired synthetic benchmark");
  gen_cmd->add_option("--seed", gen.cfg.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--dim", gen.cfg.input_dim, "Input dimension per modality");
  gen_cmd->add_option("--classes", gen.cfg.num_classes, "Number of classes");
  gen_cmd->add_option("--semantic-dim", gen.cfg.semantic_dim, "Width of the shared semantic code");
  gen_cmd->add_option("--train-size", gen.cfg.train_size, "Training pairs");
  gen_cmd->add_option("--test-size", gen.cfg.test_size, "Test pairs");
  gen_cmd->add_option("--threshold", gen.cfg.band_threshold, "Band split used to place the signal");
  gen_cmd->add_option("--semantic-noise", gen.cfg.semantic_noise, "Noise on the shared semantic code");
  gen_cmd->add_option("--low-perturbation", gen.cfg.low_perturbation, "Per-modality noise on low bins");
  gen_cmd->add_option("--high-signal", gen.cfg.high_signal, "Class pattern strength on high bins");
  gen_cmd->add_option("--high-noise", gen.cfg.high_noise, "Noise on high bins");

  Train uni;
  CLI::App* uni_cmd = app.add_subcommand("train-uni", "Train one modality with cross-entropy only");
  add_experiment_flags(uni_cmd, uni.exp, true);
  add_data_flags(uni_cmd, uni.data);
  uni_cmd->add_option("--out", uni.out, "Output directory")->required();

  Train dist;
  CLI::App* dist_cmd = app.add_subcommand("distill", "Distill a frozen teacher into a student of the other modality");
  add_experiment_flags(dist_cmd, dist.exp, false);
  dist_cmd->add_option("--student-modality", dist.exp.student_modality,
                       "Modality to train (default: the one the teacher does not use)")
      ->check(CLI::IsMember({"a", "b"}))
      ->default_str("other");
  add_data_flags(dist_cmd, dist.data);
  dist_cmd->add_option("--teacher", dist.teacher, "Teacher checkpoint")->required();
  dist_cmd->add_option("--out", dist.out, "Output directory")->required();

  Eval ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  add_data_flags(eval_cmd, ev.data);
  eval_cmd->add_option("--split", ev.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  Analyze an;
  CLI::App* an_cmd = app.add_subcommand("analyze", "Cross-modal band similarity and mean profiles");
  an_cmd->add_option("--data", an.data.dir, "Directory holding train.csv and test.csv");
  an_cmd->add_option("--classes", an.data.classes, "Number of classes (default: inferred)");
  an_cmd->add_option("--features", an.features, "Paired feature CSV to analyze directly");
  an_cmd->add_option("--checkpoint-a", an.checkpoint_a, "Modality-a checkpoint (analyze trained features)");
  an_cmd->add_option("--checkpoint-b", an.checkpoint_b, "Modality-b checkpoint (analyze trained features)");
  an_cmd->add_option("--split", an.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  an_cmd->add_option("--threshold", an.threshold, "Low-band fraction of the spectrum");
  an_cmd->add_option("--out", an.out, "Output directory")->required();

  Ablate ab;
  CLI::App* ab_cmd = app.add_subcommand("ablate", "Run an ablation grid over seeds");
  add_experiment_flags(ab_cmd, ab.exp, false);
  add_data_flags(ab_cmd, ab.data);
  ab_cmd->add_option("--suite", ab.suite, "components, loss_grid, threshold or lambda")
      ->check(CLI::IsMember({"components", "loss_grid", "threshold", "lambda"}));
  ab_cmd->add_option("--seeds", ab.seeds, "Comma-separated seeds")->delimiter(',');
  ab_cmd->add_option("--jobs", ab.jobs, "Worker processes")->check(CLI::PositiveNumber);
  ab_cmd->add_option("--out", ab.out, "Output directory")->required();

  Export ex;
  CLI::App* ex_cmd = app.add_subcommand("export-features", "Write trained features of both modalities as CSV");
  add_data_flags(ex_cmd, ex.data);
  ex_cmd->add_option("--checkpoint-a", ex.checkpoint_a, "Modality-a checkpoint")->required();
  ex_cmd->add_option("--checkpoint-b", ex.checkpoint_b, "Modality-b checkpoint")->required();
  ex_cmd->add_option("--split", ex.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ex_cmd->add_option("--out", ex.out, "Output directory")->required();

  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<SubcommandConfig>(&app));
  app.set_config("--config", "", "Read `key = value` options for the subcommand from a file; command-line flags win");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error:usage: " << e.what() << "\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 1;
  }

  try {
    if (gen_cmd->parsed()) run_gen_data(gen);
    else if (uni_cmd->parsed()) run_train_uni(uni);
    else if (dist_cmd->parsed()) {
      dist.student_given = dist_cmd->count("--student-modality") > 0;
      run_distill(dist);
    } else if (eval_cmd->parsed()) run_eval(ev);
    else if (an_cmd->parsed()) run_analyze(an);
    else if (ab_cmd->parsed()) run_ablate(ab);
    else if (ex_cmd->parsed()) run_export(ex);
  } catch (const Error& e) {
    err << "error:" << category_name(e.category()) << ": " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error:data: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace fdkd::cli

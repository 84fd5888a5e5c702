// SPDX-License-Identifier: Apache-2.0
#include "fdkd/cli.hpp"
#include "fdkd/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "fdkd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = fdkd::cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
  const int status = std::system((std::string(FDKD_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fdkd_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> small_gen(const fs::path& out, const std::string& seed = "7") {
  return {"gen-data", "--seed", seed, "--train-size", "120", "--test-size", "60", "--out", out.string()};
}

const fs::path& shared_data() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("shared_data");
    REQUIRE(run(small_gen(d)).code == 0);
    return d;
  }();
  return dir;
}

const fs::path& teacher_b() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("teacher_b");
    REQUIRE(run({"train-uni", "--student-modality", "b", "--epochs", "2", "--data", shared_data().string(),
                 "--out", d.string()})
                .code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help exits zero and lists every flag with its default") {
    CHECK(run_binary("--help") == 0);
    CHECK(run_binary("distill --help") == 0);
    std::string all;
    for (const char* sub : {"gen-data", "train-uni", "distill", "eval", "analyze", "ablate", "export-features"}) {
      const Outcome o = run({sub, "--help"});
      CHECK(o.code == 0);
      all += o.out;
    }
    for (const char* flag : {"--seed", "--out", "--dim", "--classes", "--epochs", "--batch", "--lr", "--momentum",
                             "--lambda1", "--lambda2", "--threshold", "--no-freq", "--no-align", "--no-scale",
                             "--no-log", "--student-modality", "--teacher", "--low-loss", "--high-loss",
                             "--align-standardized", "--dedup-student-band-ce", "--jobs"}) {
      CHECK_MESSAGE(all.find(flag) != std::string::npos, flag);
    }
    const std::string distill = run({"distill", "--help"}).out;
    for (const char* shown : {"--epochs UINT [30]", "--batch UINT:POSITIVE [64]", "--lr FLOAT [0.01]",
                              "--momentum FLOAT [0.9]", "--lambda1 FLOAT [1]", "--lambda2 FLOAT [1]",
                              "--threshold FLOAT [0.5]", "--dim UINT [64]"}) {
      CHECK_MESSAGE(distill.find(shown) != std::string::npos, shown);
    }
    CHECK(run({"gen-data", "--help"}).out.find("--classes UINT [6]") != std::string::npos);
  }

  TEST_CASE("usage errors exit 1 with the machine-readable prefix") {
    Outcome o = run({"distill", "--data", shared_data().string(), "--out", "/tmp/x"});
    CHECK(o.code == 1);
    CHECK(o.err.rfind("error:usage:", 0) == 0);
    CHECK(o.err.find("--teacher") != std::string::npos);
    CHECK(o.err.find("Usage") != std::string::npos);

    o = run({"train-uni", "--bogus"});
    CHECK(o.code == 1);
    CHECK(o.err.rfind("error:usage:", 0) == 0);
    CHECK(run({}).code == 1);
    CHECK(run({"no-such-command"}).code == 1);
    CHECK(run({"train-uni", "--data", shared_data().string(), "--out", "/tmp/x", "--momentum", "2"}).code == 1);
    CHECK(run({"train-uni", "--data", shared_data().string(), "--out", "/tmp/x", "--no-freq", "--high-loss", "mse"})
              .code == 1);
  }

  TEST_CASE("gen-data is idempotent") {
    const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    REQUIRE(run(small_gen(a)).code == 0);
    const std::string train1 = slurp(a / "train.csv"), config1 = slurp(a / "config.json");
    REQUIRE(run(small_gen(a)).code == 0);
    REQUIRE(run(small_gen(b)).code == 0);
    CHECK(slurp(a / "train.csv") == train1);
    CHECK(slurp(a / "config.json") == config1);
    CHECK(slurp(b / "train.csv") == train1);
    CHECK(slurp(b / "test.csv") == slurp(a / "test.csv"));
    const json cfg = read_json(a / "config.json");
    CHECK(cfg["command"] == "gen-data");
    CHECK(cfg["synthetic"]["seed"] == 7);
    REQUIRE(run(small_gen(b, "8")).code == 0);
    CHECK(slurp(b / "train.csv") != train1);
  }

  TEST_CASE("train-uni is idempotent apart from wall time") {
    const fs::path out = fresh_dir("uni");
    const std::vector<std::string> args{"train-uni", "--epochs", "2", "--seed", "3", "--data",
                                        shared_data().string(), "--out", out.string()};
    REQUIRE(run(args).code == 0);
    const std::string ckpt = slurp(out / "model.ckpt"), cfg = slurp(out / "config.json");
    json report = read_json(out / "report.json");
    REQUIRE(run(args).code == 0);
    json again = read_json(out / "report.json");
    CHECK(slurp(out / "model.ckpt") == ckpt);
    CHECK(slurp(out / "config.json") == cfg);
    report.erase("wall_time_seconds");
    again.erase("wall_time_seconds");
    CHECK(report == again);
  }

  TEST_CASE("full pipeline") {
    const fs::path root = fresh_dir("pipeline");
    const std::string data = shared_data().string();
    REQUIRE(run({"train-uni", "--student-modality", "a", "--epochs", "2", "--data", data, "--out",
                 (root / "uni_a").string()})
                .code == 0);
    const Outcome kd = run({"distill", "--epochs", "2", "--data", data, "--teacher",
                            (teacher_b() / "model.ckpt").string(), "--out", (root / "kd").string()});
    REQUIRE_MESSAGE(kd.code == 0, kd.err);
    const json report = read_json(root / "kd" / "report.json");
    CHECK(report["kind"] == "distill");
    CHECK(report["student_modality"] == "a");
    CHECK(report["teacher_modality"] == "b");
    CHECK(report["teacher_hash_before"] == report["teacher_hash_after"]);
    CHECK(read_json(root / "kd" / "config.json")["command"] == "distill");

    const std::string ckpt = (root / "kd" / "model.ckpt").string();
    REQUIRE(run_binary("eval --checkpoint " + ckpt + " --data " + data + " --out " + (root / "eval").string()) == 0);
    const json ev = read_json(root / "eval" / "eval.json");
    CHECK(ev["accuracy"] == report["test_accuracy"]);
    CHECK(ev["modality"] == "a");
    CHECK(ev["samples"] == 60);

    const Outcome an = run({"analyze", "--data", data, "--checkpoint-a", (root / "uni_a" / "model.ckpt").string(),
                            "--checkpoint-b", (teacher_b() / "model.ckpt").string(), "--out",
                            (root / "analyze").string()});
    REQUIRE_MESSAGE(an.code == 0, an.err);
    const json sim = read_json(root / "analyze" / "similarity.json");
    CHECK(sim["samples"] == 120);
    CHECK(fs::exists(root / "analyze" / "similarity.csv"));
    CHECK(fs::exists(root / "analyze" / "mean_profile.csv"));

    const Outcome ex = run({"export-features", "--data", data, "--checkpoint-a",
                            (root / "uni_a" / "model.ckpt").string(), "--checkpoint-b",
                            (teacher_b() / "model.ckpt").string(), "--out", (root / "features").string()});
    REQUIRE_MESSAGE(ex.code == 0, ex.err);
    const Outcome an2 = run({"analyze", "--features", (root / "features" / "features.csv").string(), "--out",
                             (root / "analyze_features").string()});
    REQUIRE_MESSAGE(an2.code == 0, an2.err);
    const json sim2 = read_json(root / "analyze_features" / "similarity.json");
    CHECK(sim2["samples"] == 60);

    const Outcome ab = run({"ablate", "--suite", "loss_grid", "--seeds", "0", "--epochs", "1", "--jobs", "2",
                            "--data", data, "--out", (root / "ablate").string()});
    REQUIRE_MESSAGE(ab.code == 0, ab.err);
    CHECK(read_json(root / "ablate" / "grid.json")["rows"].size() == 4);
    CHECK(fs::exists(root / "ablate" / "grid.csv"));
  }

  TEST_CASE("config file values apply and command-line flags win") {
    const fs::path out = fresh_dir("config");
    {
      std::ofstream cfg(out / "run.conf");
      cfg << "# quick run\nepochs = 1\nlr = 0.05\nlambda2 = 3  # trailing comment\n";
    }
    const std::string data = shared_data().string();
    Outcome o = run({"--config", (out / "run.conf").string(), "train-uni", "--data", data, "--out",
                     (out / "r1").string()});
    REQUIRE_MESSAGE(o.code == 0, o.err);
    json echo = read_json(out / "r1" / "config.json");
    CHECK(echo["command"] == "train-uni");
    CHECK(echo["experiment"]["epochs"] == 1);
    CHECK(echo["experiment"]["lr"] == 0.05);
    CHECK(echo["experiment"]["lambda2"] == 3.0);

    o = run({"--config", (out / "run.conf").string(), "train-uni", "--epochs", "2", "--data", data, "--out",
             (out / "r2").string()});
    REQUIRE(o.code == 0);
    CHECK(read_json(out / "r2" / "config.json")["experiment"]["epochs"] == 2);

    {
      std::ofstream bad(out / "bad.conf");
      bad << "epochs = 1\nbogus = 4\n";
    }
    o = run({"--config", (out / "bad.conf").string(), "train-uni", "--data", data, "--out", (out / "r3").string()});
    CHECK(o.code == 1);
    CHECK(o.err.rfind("error:usage:", 0) == 0);
  }

  TEST_CASE("data, checkpoint and numeric failures") {
    const fs::path out = fresh_dir("errors");
    {
      std::ofstream junk(out / "junk.ckpt");
      junk << "not a checkpoint";
    }
    Outcome o = run({"eval", "--checkpoint", (out / "junk.ckpt").string(), "--data", shared_data().string(),
                     "--out", (out / "e").string()});
    CHECK(o.code == 2);
    CHECK(o.err.rfind("error:checkpoint:", 0) == 0);

    o = run({"train-uni", "--data", (out / "missing").string(), "--out", (out / "m").string()});
    CHECK(o.code == 2);
    CHECK(o.err.rfind("error:", 0) == 0);

    fs::create_directories(out / "broken");
    {
      std::ofstream t(out / "broken" / "train.csv");
      t << "id,label,m,f0,f1\n0,1,a,1,2\n0,1,b,1\n";
      std::ofstream s(out / "broken" / "test.csv");
      s << "id,label,m,f0,f1\n0,1,a,1,2\n0,1,b,1,2\n";
    }
    o = run({"train-uni", "--data", (out / "broken").string(), "--out", (out / "b").string()});
    CHECK(o.code == 2);
    CHECK(o.err.rfind("error:parse:", 0) == 0);
    CHECK(o.err.find("line 3") != std::string::npos);

    o = run({"distill", "--lr", "1e300", "--epochs", "1", "--data", shared_data().string(), "--teacher",
             (teacher_b() / "model.ckpt").string(), "--out", (out / "n").string()});
    CHECK(o.code == 3);
    CHECK(o.err.rfind("error:numeric:", 0) == 0);

    CHECK(fdkd::cli::exit_code(fdkd::ErrorCategory::usage) == 1);
    CHECK(fdkd::cli::exit_code(fdkd::ErrorCategory::config) == 1);
    CHECK(fdkd::cli::exit_code(fdkd::ErrorCategory::numeric) == 3);
    CHECK(fdkd::cli::exit_code(fdkd::ErrorCategory::parse) == 2);
    CHECK(fdkd::cli::exit_code(fdkd::ErrorCategory::data) == 2);
  }
}

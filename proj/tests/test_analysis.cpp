// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "fdkd/analysis.hpp"
#include "fdkd/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace fdkd;
using fdkd::test::random_matrix;

namespace {

const SyntheticData& tiny_data() {
  static const SyntheticData d = [] {
    SyntheticConfig c;
    c.train_size = 120;
    c.test_size = 60;
    c.seed = 4;
    return generate(c);
  }();
  return d;
}

ExperimentConfig tiny_base() {
  ExperimentConfig c;
  c.epochs = 2;
  return c;
}

}  // namespace

TEST_SUITE("similarity") {
  TEST_CASE("identical batches") {
    SeededRng rng(1);
    Matrix x = random_matrix(rng, 10, 16);
    x.row(3).setConstant(2.0);
    const SimilarityReport r = similarity_report(x, x, BandSplit::make(16), "test");
    CHECK(r.raw == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.low == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.high == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.samples == 10);
    CHECK(r.degenerate_raw == 0);
    CHECK(r.degenerate_low == 0);
    CHECK(r.degenerate_high == 1);
  }

  TEST_CASE("negated batches") {
    SeededRng rng(2);
    const Matrix x = random_matrix(rng, 8, 16);
    const SimilarityReport r = similarity_report(x, -x, BandSplit::make(16), "test");
    CHECK(r.raw == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.low == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.high == doctest::Approx(-1.0).epsilon(1e-12));
  }

  TEST_CASE("bounded and symmetric under swapping modalities") {
    SeededRng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix a = random_matrix(rng, 6, 32), b = random_matrix(rng, 6, 32);
      const BandSplit split = BandSplit::make(32, 1.0 / 3.0);
      const SimilarityReport ab = similarity_report(a, b, split, "x"), ba = similarity_report(b, a, split, "x");
      CHECK(ab.raw == ba.raw);
      CHECK(ab.low == ba.low);
      CHECK(ab.high == ba.high);
      for (double v : {ab.raw, ab.low, ab.high}) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
    }
  }

  TEST_CASE("errors") {
    SeededRng rng(4);
    CHECK_THROWS_AS(similarity_report(random_matrix(rng, 3, 8), random_matrix(rng, 4, 8), BandSplit::make(8), ""),
                    PairingError);
    CHECK_THROWS_AS(similarity_report(random_matrix(rng, 3, 8), random_matrix(rng, 3, 6), BandSplit::make(8), ""),
                    DimensionError);
  }

  TEST_CASE("json and csv layout") {
    SeededRng rng(5);
    const Matrix x = random_matrix(rng, 4, 8);
    const SimilarityReport r = similarity_report(x, x, BandSplit::make(8, 0.25), "inputs");
    const auto j = to_json(r);
    CHECK(j["source"] == "inputs");
    CHECK(j["threshold"] == 0.25);
    CHECK(j["samples"] == 4);
    CHECK(j["mean_cosine"].contains("low"));
    CHECK(similarity_csv(r).rfind("variant,mean_cosine,degenerate\nraw,", 0) == 0);
  }
}

TEST_SUITE("mean profile") {
  TEST_CASE("constant batch and single sample") {
    const Matrix c = Matrix::Constant(5, 3, -1.5);
    CHECK(mean_profile(c) == RealVec{-1.5, -1.5, -1.5});
    Matrix one(1, 3);
    one << 0.25, -7.0, 3.0;
    CHECK(mean_profile(one) == RealVec{0.25, -7.0, 3.0});
    CHECK_THROWS_AS(mean_profile(Matrix(0, 3)), DataError);
  }

  TEST_CASE("generator defaults put modality a above b") {
    const SyntheticData d = generate(SyntheticConfig{});
    const RealVec a = mean_profile(d.train.features(Modality::a));
    const RealVec b = mean_profile(d.train.features(Modality::b));
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
    MESSAGE("mean of means a " << ma << " b " << mb);
    CHECK(ma > mb);
    const std::string csv = mean_profile_csv(a, b);
    CHECK(csv.rfind("dim,mean_a,mean_b\n0,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 65);
  }
}

TEST_SUITE("ablation") {
  TEST_CASE("suite enumeration") {
    const ExperimentConfig base;
    CHECK(ablation_variants(AblationSuite::components, base).size() == 7);
    CHECK(ablation_variants(AblationSuite::loss_grid, base).size() == 4);
    CHECK(ablation_variants(AblationSuite::threshold, base).size() == 3);
    CHECK(ablation_variants(AblationSuite::lambda, base).size() == 16);

    std::set<std::pair<BandLossKind, BandLossKind>> kinds;
    for (const auto& v : ablation_variants(AblationSuite::loss_grid, base)) {
      kinds.insert({v.config.resolved_low_loss(), v.config.resolved_high_loss()});
    }
    CHECK(kinds.size() == 4);

    const auto comps = ablation_variants(AblationSuite::components, base);
    CHECK(comps.front().config.toggles.freq == false);
    CHECK(comps.front().config.toggles.align == false);
    const Toggles last = comps.back().config.toggles;
    CHECK((last.freq && last.align && last.scale && last.log));
    for (const auto& v : comps) v.config.validate();

    std::set<double> thresholds;
    for (const auto& v : ablation_variants(AblationSuite::threshold, base)) thresholds.insert(v.config.threshold);
    CHECK(thresholds == std::set<double>{0.25, 1.0 / 3.0, 0.5});

    std::set<std::pair<double, double>> lambdas;
    for (const auto& v : ablation_variants(AblationSuite::lambda, base)) {
      lambdas.insert({v.config.weights.lambda1, v.config.weights.lambda2});
    }
    CHECK(lambdas.size() == 16);
    CHECK(lambdas.count({0.5, 5.0}) == 1);

    CHECK(parse_ablation_suite("loss_grid") == AblationSuite::loss_grid);
    CHECK_THROWS_AS(parse_ablation_suite("everything"), ConfigError);
  }

  TEST_CASE("components grid: baseline identity, schema, re-runnable rows, worker processes") {
    const SyntheticData& d = tiny_data();
    AblationOptions opts;
    opts.seeds = {0, 5};
    const AblationGrid g = run_ablation(AblationSuite::components, tiny_base(), d.train, d.test, opts);
    REQUIRE(g.rows.size() == 7);
    CHECK(g.rows.front().label == "none");
    CHECK(g.rows.front().accuracy_a == g.baseline_a);
    CHECK(g.rows.front().accuracy_b == g.baseline_b);

    const auto j = to_json(g);
    validate_ablation_json(nlohmann::json::parse(j.dump()));
    CHECK(j["rows"].size() == 7);
    const std::string csv = ablation_csv(g);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);

    const AblationRow& full = g.rows.back();
    for (std::size_t s = 0; s < opts.seeds.size(); ++s) {
      nlohmann::json echoed = full.config;
      echoed["seed"] = opts.seeds[s];
      echoed["student_modality"] = "a";
      const ExperimentConfig student_cfg = experiment_config_from_json(echoed);
      ExperimentConfig teacher_cfg = tiny_base();
      teacher_cfg.student_modality = Modality::b;
      teacher_cfg.seed = opts.seeds[s];
      const ModalityModel teacher = train_unimodal(d.train, d.test, teacher_cfg).model;
      CHECK(distill(d.train, d.test, teacher, student_cfg).report.test_accuracy == full.accuracy_a[s]);
    }

    opts.jobs = 3;
    const AblationGrid forked = run_ablation(AblationSuite::components, tiny_base(), d.train, d.test, opts);
    CHECK(to_json(forked).dump() == j.dump());
  }

  TEST_CASE("grid validation rejects broken layouts") {
    nlohmann::json j = {{"suite", "threshold"},
                        {"seeds", {0}},
                        {"baseline", {{"accuracy_a", {0.5}}, {"accuracy_b", {0.5}}}},
                        {"rows",
                         {{{"label", "t"},
                           {"config",
                            {{"freq", true}, {"align", true}, {"scale", true}, {"log", true},
                             {"threshold", 0.5}, {"lambda1", 1}, {"lambda2", 1}}},
                           {"accuracy_a", {0.7}},
                           {"accuracy_b", {0.6}},
                           {"mean_a", 0.7},
                           {"mean_b", 0.6}}}}};
    validate_ablation_json(j);
    auto broken = j;
    broken["rows"][0]["accuracy_a"] = {1.5};
    CHECK_THROWS_AS(validate_ablation_json(broken), DataError);
    broken = j;
    broken["rows"][0]["accuracy_b"] = {0.5, 0.5};
    CHECK_THROWS_AS(validate_ablation_json(broken), DataError);
    broken = j;
    broken["rows"][0]["config"].erase("lambda1");
    CHECK_THROWS_AS(validate_ablation_json(broken), DataError);
    broken = j;
    broken["suite"] = "bogus";
    CHECK_THROWS(validate_ablation_json(broken));
  }

  TEST_CASE("no seeds") {
    AblationOptions opts;
    opts.seeds.clear();
    CHECK_THROWS_AS(run_ablation(AblationSuite::loss_grid, tiny_base(), tiny_data().train, tiny_data().test, opts),
                    ConfigError);
  }
}

// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "fdkd/errors.hpp"
#include "fdkd/train.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

using namespace fdkd;

namespace {

const SyntheticData& small_data() {
  static const SyntheticData d = [] {
    SyntheticConfig c;
    c.train_size = 300;
    c.test_size = 120;
    c.seed = 2;
    return generate(c);
  }();
  return d;
}

ExperimentConfig quick(Modality student, std::uint64_t seed = 0) {
  ExperimentConfig c;
  c.student_modality = student;
  c.epochs = 4;
  c.seed = seed;
  return c;
}

nlohmann::ordered_json without_wall_time(nlohmann::ordered_json j) {
  j.erase("wall_time_seconds");
  return j;
}

const ModalityModel& teacher_b() {
  static const ModalityModel t = train_unimodal(small_data().train, small_data().test, quick(Modality::b, 9)).model;
  return t;
}

}  // namespace

TEST_SUITE("experiment config") {
  TEST_CASE("json round trip") {
    ExperimentConfig c;
    c.student_modality = Modality::b;
    c.weights = {0.5, 3.0};
    c.threshold = 0.25;
    c.toggles.log = false;
    c.high_loss = BandLossKind::mse;
    c.align_standardized = true;
    c.seed = 77;
    const auto j = to_json(c);
    CHECK(to_json(experiment_config_from_json(nlohmann::json::parse(j.dump()))) == j);
  }

  TEST_CASE("validation") {
    ExperimentConfig c;
    c.validate();
    CHECK(c.resolved_low_loss() == BandLossKind::mse);
    CHECK(c.resolved_high_loss() == BandLossKind::logmse);
    c.toggles.log = false;
    CHECK(c.resolved_high_loss() == BandLossKind::mse);

    auto invalid = [](auto mutate) {
      ExperimentConfig bad;
      mutate(bad);
      CHECK_THROWS_AS(bad.validate(), ConfigError);
    };
    invalid([](ExperimentConfig& x) { x.weights.lambda1 = -1.0; });
    invalid([](ExperimentConfig& x) { x.weights.lambda2 = INFINITY; });
    invalid([](ExperimentConfig& x) { x.toggles = {false, true, true, false}; });
    invalid([](ExperimentConfig& x) { x.toggles = {false, false, false, true}; });
    invalid([](ExperimentConfig& x) { x.batch_size = 0; });
    invalid([](ExperimentConfig& x) { x.threshold = 1.0; });
    invalid([](ExperimentConfig& x) { x.learning_rate = -1.0; });
  }
}

TEST_SUITE("evaluate") {
  TEST_CASE("perfect predictions score one") {
    Dataset d;
    d.num_classes = 3;
    d.dim = 4;
    for (int i = 0; i < 9; ++i) {
      RealVec x(4, 0.0);
      x[static_cast<std::size_t>(i % 3)] = 1.0;
      d.samples.push_back({i, i % 3, x, x});
    }
    ModalityModel m;
    m.encoder = MlpEncoder::zeros({{4, 5, 4}, false, true});
    m.head = Linear::zeros(4, 3);
    for (int k = 0; k < 3; ++k) m.head.weight(k, k) = 1.0;
    const EvalResult r = evaluate(m, d);
    CHECK(r.accuracy == 1.0);
    CHECK(r.per_class_accuracy == std::vector<double>{1.0, 1.0, 1.0});
  }

  TEST_CASE("all-tied logits predict the lowest class") {
    const Dataset& test = small_data().test;
    ModalityModel m;
    m.encoder = MlpEncoder::zeros({{64, 8, 64}, false, true});
    m.head = Linear::zeros(64, test.num_classes);
    const EvalResult r = evaluate(m, test);
    const auto zeros = std::count_if(test.samples.begin(), test.samples.end(), [](const auto& s) { return s.label == 0; });
    CHECK(r.accuracy == static_cast<double>(zeros) / static_cast<double>(test.size()));
    CHECK(std::all_of(r.predictions.begin(), r.predictions.end(), [](int p) { return p == 0; }));
    CHECK(argmax_rows(Matrix::Constant(1, 3, 2.0)) == std::vector<int>{0});
  }

  TEST_CASE("agrees with recounting argmax over the returned logits") {
    const ModalityModel& t = teacher_b();
    const Dataset& test = small_data().test;
    const EvalResult r = evaluate(t, test);
    const Matrix logits = t.head.forward(t.encoder.forward(test.features(Modality::b)));
    REQUIRE((logits - r.logits).norm() == 0.0);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      std::vector<double> v(static_cast<std::size_t>(logits.cols()));
      for (Eigen::Index k = 0; k < logits.cols(); ++k) v[static_cast<std::size_t>(k)] = logits(i, k);
      const auto best = std::max_element(v.begin(), v.end()) - v.begin();
      if (best == test.samples[static_cast<std::size_t>(i)].label) ++correct;
    }
    CHECK(r.accuracy == static_cast<double>(correct) / static_cast<double>(test.size()));
  }

  TEST_CASE("empty split") {
    Dataset empty;
    empty.dim = 64;
    empty.num_classes = 6;
    CHECK_THROWS_AS(evaluate(teacher_b(), empty), DataError);
  }
}

TEST_SUITE("unimodal training") {
  TEST_CASE("zero epochs takes no step") {
    ExperimentConfig c = quick(Modality::a);
    c.epochs = 0;
    const TrainResult r = train_unimodal(small_data().train, small_data().test, c);
    CHECK(r.report.steps == 0);
    CHECK(r.report.epochs.empty());
    CHECK(r.report.test_accuracy < 1.0 / 6.0 + 0.15);
    SeededRng rng = SeededRng(0).split("model", 0);
    ModalityModel init = ModalityModel::init(Modality::a, c.encoder_shape(64), 6, rng);
    CHECK(parameter_hash(r.model) == parameter_hash(init));
  }

  TEST_CASE("same seed gives an identical report") {
    const ExperimentConfig c = quick(Modality::a, 5);
    const TrainResult x = train_unimodal(small_data().train, small_data().test, c);
    const TrainResult y = train_unimodal(small_data().train, small_data().test, c);
    CHECK(without_wall_time(to_json(x.report)).dump() == without_wall_time(to_json(y.report)).dump());
    CHECK(parameter_hash(x.model) == parameter_hash(y.model));
    CHECK(x.report.epochs.size() == 4);
    CHECK(x.report.steps == 4 * 5);
    CHECK_FALSE(x.shared.has_value());
  }

  TEST_CASE("clearly above chance on the default data") {
    const SyntheticData d = generate(SyntheticConfig{});
    for (Modality m : {Modality::a, Modality::b}) {
      ExperimentConfig c;
      c.student_modality = m;
      const TrainResult r = train_unimodal(d.train, d.test, c);
      MESSAGE("modality " << to_string(m) << " test accuracy " << r.report.test_accuracy);
      CHECK(r.report.test_accuracy > 1.0 / 6.0 + 0.15);
      CHECK(r.report.epochs.size() == c.epochs);
    }
  }
}

TEST_SUITE("distillation") {
  TEST_CASE("all components off with zero weights reproduces unimodal training") {
    ExperimentConfig c = quick(Modality::a, 3);
    c.toggles = Toggles::all_off();
    c.weights = {0.0, 0.0};
    const TrainResult uni = train_unimodal(small_data().train, small_data().test, c);
    const TrainResult kd = distill(small_data().train, small_data().test, teacher_b(), c);
    REQUIRE(uni.report.epochs.size() == kd.report.epochs.size());
    for (std::size_t e = 0; e < uni.report.epochs.size(); ++e) {
      CHECK(uni.report.epochs[e].task == kd.report.epochs[e].task);
      CHECK(uni.report.epochs[e].total == kd.report.epochs[e].total);
      CHECK(kd.report.epochs[e].align == 0.0);
      CHECK(kd.report.epochs[e].low == 0.0);
    }
    CHECK(parameter_hash(uni.model) == parameter_hash(kd.model));
    CHECK(uni.report.test_accuracy == kd.report.test_accuracy);
  }

  TEST_CASE("teacher is untouched and the loss breakdown identity holds") {
    const std::uint64_t before = parameter_hash(teacher_b());
    ExperimentConfig c = quick(Modality::a, 4);
    c.weights = {2.0, 0.5};
    const TrainResult r = distill(small_data().train, small_data().test, teacher_b(), c);
    CHECK(parameter_hash(teacher_b()) == before);
    REQUIRE(r.report.teacher_hash_before.has_value());
    CHECK(*r.report.teacher_hash_before == before);
    CHECK(*r.report.teacher_hash_after == before);
    CHECK(r.report.kind == "distill");
    CHECK(r.shared.has_value());
    for (const LossBreakdown& b : r.report.epochs) {
      const double rebuilt = ((b.task + b.align) + 2.0 * b.low) + 0.5 * b.high;
      CHECK(std::abs(b.total - rebuilt) <= 1e-12 * std::abs(b.total));
      CHECK(b.low >= 0.0);
      CHECK(b.high >= 0.0);
      CHECK(b.align > 0.0);
    }
    CHECK(r.report.test_accuracy >= 0.0);
    CHECK(r.report.test_accuracy <= 1.0);
  }

  TEST_CASE("distillation is deterministic") {
    const ExperimentConfig c = quick(Modality::a, 6);
    const TrainResult x = distill(small_data().train, small_data().test, teacher_b(), c);
    const TrainResult y = distill(small_data().train, small_data().test, teacher_b(), c);
    CHECK(without_wall_time(to_json(x.report)).dump() == without_wall_time(to_json(y.report)).dump());
  }

  TEST_CASE("self-distillation with a heavy low-band weight shrinks the low-band loss") {
    ExperimentConfig c = quick(Modality::a, 1);
    c.epochs = 200;
    c.residual = false;
    c.weights = {1e3, 1.0};
    const EncoderShape shape = c.encoder_shape(64);
    SeededRng student_rng = SeededRng(c.seed).split("model", static_cast<std::uint64_t>(Modality::a));
    const ModalityModel student0 = ModalityModel::init(Modality::a, shape, 6, student_rng);
    ModalityModel teacher = student0;
    teacher.modality = Modality::b;
    SeededRng shared_rng = SeededRng(c.seed).split("shared");
    const SharedClassifiers shared0 = SharedClassifiers::init(64, 6, shared_rng);

    const Dataset& train = small_data().train;
    const double initial = distillation_losses(student0, shared0, teacher, train, c).low;
    const TrainResult r = distill(train, small_data().test, teacher, c);
    REQUIRE(r.shared.has_value());
    const double final_low = distillation_losses(r.model, *r.shared, teacher, train, c).low;
    MESSAGE("low-band loss " << initial << " -> " << final_low);
    CHECK(initial > 0.0);
    CHECK(final_low * 10.0 <= initial);
  }

  TEST_CASE("teacher feature width must match") {
    SeededRng rng(1);
    const ModalityModel narrow = ModalityModel::init(Modality::b, {{64, 16, 32}, false, false}, 6, rng);
    CHECK_THROWS_AS(distill(small_data().train, small_data().test, narrow, quick(Modality::a)), DimensionError);
  }

  TEST_CASE("a diverging run names the term, epoch and batch") {
    ExperimentConfig c = quick(Modality::a);
    c.learning_rate = 1e300;
    try {
      distill(small_data().train, small_data().test, teacher_b(), c);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string what = e.what();
      CHECK(what.find("epoch") != std::string::npos);
      CHECK(what.find("batch") != std::string::npos);
    }
  }

  TEST_CASE("unimodal objective is the private-head cross-entropy alone") {
    SeededRng rng(8);
    const ExperimentConfig c;
    const BandSplit split = BandSplit::make(64);
    const Matrix x = test::random_matrix(rng, 5, 64);
    const Linear head = Linear::uniform_init(64, 6, rng);
    const SharedClassifiers shared = SharedClassifiers::init(64, 6, rng);
    const std::vector<int> y{0, 1, 2, 3, 4};
    const ObjectiveResult r = student_objective(x, y, head, shared, nullptr, c, split);
    CHECK(r.losses.task == cross_entropy(head.forward(x), y).value);
    CHECK(r.losses.align == 0.0);
    CHECK(r.losses.low == 0.0);
    CHECK(r.losses.high == 0.0);
    CHECK_FALSE(r.shared_used);
  }
}

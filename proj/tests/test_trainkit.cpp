#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "stain/dataset.hpp"
#include "stain/error.hpp"
#include "stain/rng.hpp"
#include "stain/trainkit.hpp"

using namespace stain;
using namespace stain::trainkit;

namespace {

// Small synthetic feature set: positives carry a loud band in one slice.
FeatureSet toy_set(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  FeatureSet set;
  for (std::size_t i = 0; i < n; ++i) {
    dsp::Spectrogram s;
    s.config = dsp::StftConfig{};
    s.frame_hop_s = s.config.frame_hop_s();
    s.values = numerics::Tensor({s.config.kept_bins, 40});
    for (auto& v : s.values.data()) v = rng.uniform(-10.0, -6.0);
    const int label = static_cast<int>(i % 2);
    if (label == 1) {
      for (std::size_t b = 20; b < 60; ++b) {
        for (std::size_t f = 22; f < 30; ++f) s.values.at(b, f) = rng.uniform(-1.0, 1.0);
      }
    }
    set.spectra.push_back(std::move(s));
    set.labels.push_back(label);
    set.names.push_back("toy_" + std::to_string(i));
  }
  return set;
}

Model constant_half_model() {
  models::ModelConfig mc;
  mc.kind = ModelKind::cnn;
  Model m = Model::create(mc, 1);
  for (auto& p : m.parameters()) p.value.fill(0.0);
  return m;
}

}  // namespace

TEST_CASE("metrics closed forms") {
  MetricsReport r = metrics({40, 10, 40, 10});
  CHECK(r.sensitivity == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.specificity == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.accuracy == doctest::Approx(0.8).epsilon(1e-15));
  // (1600 - 100) / sqrt(50^4) = 1500 / 2500
  CHECK(r.mcc == doctest::Approx(0.6).epsilon(1e-15));

  r = metrics({50, 0, 50, 0});
  CHECK(r.sensitivity == 1.0);
  CHECK(r.specificity == 1.0);
  CHECK(r.accuracy == 1.0);
  CHECK(r.mcc == 1.0);

  SUBCASE("all-positive predictor on balanced data") {
    r = metrics({50, 50, 0, 0});
    CHECK(r.sensitivity == 1.0);
    CHECK(r.specificity == 0.0);
    CHECK(r.accuracy == 0.5);
    CHECK(r.mcc == 0.0);
  }
  CHECK_THROWS_AS(metrics({}), std::invalid_argument);
}

TEST_CASE("metrics agree with a brute-force recount and stay in range") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 60));
    std::vector<int> labels, preds;
    for (std::size_t i = 0; i < n; ++i) {
      labels.push_back(static_cast<int>(rng.uniform_int(0, 1)));
      preds.push_back(static_cast<int>(rng.uniform_int(0, 1)));
    }
    const ConfusionMatrix cm = confusion(labels, preds);
    REQUIRE(cm.total() == n);
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      (labels[i] ? (preds[i] ? tp : fn) : (preds[i] ? fp : tn)) += 1;
    }
    const MetricsReport r = metrics(cm);
    CHECK(r.accuracy == doctest::Approx((tp + tn) / n).epsilon(1e-12));
    if (tp + fn > 0) CHECK(r.sensitivity == doctest::Approx(tp / (tp + fn)).epsilon(1e-12));
    if (tn + fp > 0) CHECK(r.specificity == doctest::Approx(tn / (tn + fp)).epsilon(1e-12));
    CHECK(r.mcc >= -1.0);
    CHECK(r.mcc <= 1.0);
    CHECK(r.sensitivity >= 0.0);
    CHECK(r.sensitivity <= 1.0);
    CHECK(r.specificity >= 0.0);
    CHECK(r.specificity <= 1.0);

    // Swapping the roles of the classes.
    std::vector<int> fl(labels), fpred(preds);
    for (auto& v : fl) v = 1 - v;
    for (auto& v : fpred) v = 1 - v;
    const ConfusionMatrix f = confusion(fl, fpred);
    CHECK(f.tp == cm.tn);
    CHECK(f.tn == cm.tp);
    CHECK(f.fp == cm.fn);
    CHECK(f.fn == cm.fp);
    CHECK(metrics(f).accuracy == doctest::Approx(r.accuracy).epsilon(1e-15));
    CHECK(metrics(f).mcc == doctest::Approx(r.mcc).epsilon(1e-12));
  }
  CHECK_THROWS_AS(confusion({1, 0}, {1}), std::invalid_argument);
}

TEST_CASE("evaluate threshold semantics") {
  const FeatureSet set = toy_set(6, 3);
  const Model m = constant_half_model();
  const Evaluation ev = evaluate(m, set);
  for (double p : ev.probabilities) CHECK(p == 0.5);
  CHECK(ev.cm.tp == 0);
  CHECK(ev.cm.fp == 0);
  CHECK(ev.cm.fn == 3);
  CHECK(ev.cm.tn == 3);
  CHECK(ev.cm.total() == set.size());
  CHECK(evaluate(m, set, 0.49).cm.tp == 3);
  CHECK(evaluate(m, set).cm == ev.cm);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.lr = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("training is deterministic") {
  const FeatureSet set = toy_set(4, 5);
  TrainConfig c;
  c.kind = ModelKind::stain;
  c.epochs = 1;
  c.seed = 9;
  const auto a = models::serialize(train(set, c).checkpoint);
  const auto b = models::serialize(train(set, c).checkpoint);
  CHECK(a == b);
  c.seed = 10;
  CHECK(models::serialize(train(set, c).checkpoint) != a);
}

TEST_CASE("lr 0 leaves parameters unchanged") {
  const FeatureSet set = toy_set(4, 6);
  for (ModelKind kind : {ModelKind::cnn, ModelKind::rnn, ModelKind::crnn, ModelKind::stain}) {
    TrainConfig c;
    c.kind = kind;
    c.lr = 0.0;
    c.epochs = 2;
    c.batch_size = 2;
    const TrainResult r = train(set, c);
    models::ModelConfig mc = r.checkpoint.config;
    const Model fresh = Model::create(mc, derive_seed(c.seed, "init"));
    const Model trained = r.checkpoint.model();
    REQUIRE(fresh.parameters().size() == trained.parameters().size());
    for (std::size_t i = 0; i < fresh.parameters().size(); ++i) {
      CHECK(fresh.parameters()[i].value.data()[0] == trained.parameters()[i].value.data()[0]);
      CHECK(std::equal(fresh.parameters()[i].value.data().begin(), fresh.parameters()[i].value.data().end(),
                       trained.parameters()[i].value.data().begin()));
    }
    CHECK(r.epoch_losses.size() == 2);
    CHECK(r.epoch_losses[0] == r.epoch_losses[1]);
  }
}

TEST_CASE("training metadata and progress") {
  const FeatureSet set = toy_set(8, 7);
  TrainConfig c;
  c.kind = ModelKind::cnn;
  c.epochs = 3;
  c.batch_size = 4;
  c.lr = 0.02;
  std::vector<double> seen;
  const TrainResult r = train(set, c, [&](std::size_t, double l) { seen.push_back(l); });
  CHECK(seen == r.epoch_losses);
  CHECK(r.checkpoint.meta("epochs") == "3");
  CHECK(r.checkpoint.meta("train_examples") == "8");
  CHECK(std::stod(*r.checkpoint.meta("final_loss")) == doctest::Approx(r.epoch_losses.back()).epsilon(1e-12));
  // The stored standardization comes from the training features.
  const auto [mean, sd] = feature_stats(set);
  CHECK(r.checkpoint.config.feature_mean == mean);
  CHECK(r.checkpoint.config.feature_std == sd);
}

TEST_CASE("non-finite loss names the example") {
  FeatureSet set = toy_set(4, 8);
  set.spectra[2].values.at(0, 0) = std::nan("");
  TrainConfig c;
  c.kind = ModelKind::cnn;
  c.epochs = 1;
  CHECK_THROWS_WITH_AS(train(set, c), doctest::Contains("epoch 1"), NumericError);
  CHECK_THROWS_WITH_AS(train(set, c), doctest::Contains("toy_"), NumericError);
}

TEST_CASE("benchmark rows and records") {
  const FeatureSet tr = toy_set(6, 11), te = toy_set(4, 12);
  BenchmarkConfig bc = BenchmarkConfig::defaults(3);
  for (auto& r : bc.runs) {
    r.epochs = 1;
    r.batch_size = 3;
  }
  const auto rows = benchmark(tr, te, bc);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.ok());
    CHECK(r.seed == 3);
    CHECK(r.cm.total() == te.size());
    CHECK(r.checkpoint.has_value());
  }
  CHECK(rows[0].kind == ModelKind::cnn);
  CHECK(rows[3].kind == ModelKind::stain);

  const auto again = benchmark(tr, te, bc);
  CHECK(render_table(rows) == render_table(again));
  CHECK(render_records(rows) == render_records(again));

  const std::string rec = render_records(rows);
  CHECK(std::count(rec.begin(), rec.end(), '\n') == 4);
  CHECK(rec.rfind("{\"kind\":\"cnn\",\"tp\":", 0) == 0);
  for (const char* key : {"\"fp\":", "\"tn\":", "\"fn\":", "\"se\":", "\"sp\":", "\"acc\":", "\"mcc\":", "\"seed\":"}) {
    CHECK(rec.find(key) != std::string::npos);
  }

  SUBCASE("one failing model does not stop the others") {
    bc.runs[2].epochs = 0;  // crnn rejects its config
    const auto r2 = benchmark(tr, te, bc);
    REQUIRE(r2.size() == 4);
    CHECK(r2[0].ok());
    CHECK(r2[1].ok());
    CHECK(r2[3].ok());
    CHECK_FALSE(r2[2].ok());
    CHECK(r2[2].error.find("epochs") != std::string::npos);
    CHECK(render_records(r2).find("\"error\"") != std::string::npos);
    CHECK(render_table(r2).find("FAILED") != std::string::npos);
  }
}

TEST_CASE("epoch loss falls on the fixture set") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "stain_test_loss_curve";
  fs::remove_all(dir);
  const auto manifest = dataset::generate_fixture_corpus(dir / "corpus", {});
  const dataset::SourceBank bank(manifest, 16000);
  dataset::build_dataset(bank, {}, {200, 200, 1, 1}, dir / "data");
  const FeatureSet set = load_features(dataset::read_index(dir / "data"), "train");
  REQUIRE(set.size() == 400);
  TrainConfig c = default_train_config(ModelKind::stain);
  c.epochs = 5;
  const auto losses = train(set, c).epoch_losses;
  for (std::size_t e = 1; e < losses.size(); ++e) {
    CAPTURE(e);
    CHECK(losses[e] < losses[e - 1]);
  }
  fs::remove_all(dir);
}

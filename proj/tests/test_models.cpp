#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "stain/error.hpp"
#include "stain/models.hpp"

using namespace stain::models;
using stain::SplitMix64;
using stain::dsp::SliceSequence;
using stain::dsp::Spectrogram;
namespace nm = stain::numerics;

namespace {

Spectrogram random_spec(std::size_t frames, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Spectrogram s;
  s.values = oracle::random_tensor(rng, {128, frames});
  s.frame_hop_s = 0.01;
  return s;
}

ModelConfig config_for(ModelKind kind, EncoderKind enc = EncoderKind::pool) {
  ModelConfig c;
  c.kind = kind;
  c.encoder = enc;
  return c;
}

SliceCnnVars bind_cnn(Tape& tape, const Model& m) {
  auto c = [&](const char* n) {
    for (const auto& p : m.parameters())
      if (p.name == n) return tape.constant(p.value);
    return Var{};
  };
  return {c("cnn.conv1.weight"), c("cnn.conv1.bias"), c("cnn.conv2.weight"), c("cnn.conv2.bias"),
          c("cnn.dense1.weight"), c("cnn.dense1.bias"), c("cnn.dense2.weight"), c("cnn.dense2.bias")};
}

const Tensor& param(const Model& m, const char* name) {
  for (const auto& p : m.parameters())
    if (p.name == name) return p.value;
  throw std::out_of_range(name);
}

Tensor relu(Tensor t) {
  for (auto& v : t.data()) v = std::max(v, 0.0);
  return t;
}

// Loop-level reference for the slice CNN embedding.
Tensor embed_oracle(const Tensor& x, const Model& m) {
  Tensor a = relu(oracle::maxpool2d(oracle::conv2d(x, param(m, "cnn.conv1.weight"), param(m, "cnn.conv1.bias"))));
  a = relu(oracle::maxpool2d(oracle::conv2d(a, param(m, "cnn.conv2.weight"), param(m, "cnn.conv2.bias"))));
  Tensor flat({a.size()}, a.values());
  return relu(oracle::dense(flat, param(m, "cnn.dense1.weight"), param(m, "cnn.dense1.bias")));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor slice_input(const Tensor& slice, const Tensor& hidden) {
  std::vector<double> v = slice.values();
  v.insert(v.end(), hidden.values().begin(), hidden.values().end());
  return Tensor({2, slice.dim(0), slice.dim(1)}, v);
}

}  // namespace

TEST_CASE("shape chain") {
  CHECK(ModelConfig{}.flattened_size() == 1984);
  CHECK(ModelConfig{}.frames_per_slice() == 20);
  Model m = Model::create(config_for(ModelKind::stain), 1);
  CHECK(param(m, "cnn.dense1.weight").shape() == nm::Shape{64, 1984});
  CHECK(param(m, "cnn.dense2.weight").shape() == nm::Shape{1, 64});
}

TEST_CASE("slice_cnn_forward") {
  Model m = Model::create(config_for(ModelKind::stain), 7);
  SplitMix64 rng(11);
  SUBCASE("matches the loop oracle") {
    Tensor x = oracle::random_tensor(rng, {2, 128, 20});
    Tape tape(false);
    const double got = slice_cnn_forward(tape.constant(x), bind_cnn(tape, m)).scalar();
    const Tensor e = embed_oracle(x, m);
    const double want =
        sigmoid(oracle::dense(e, param(m, "cnn.dense2.weight"), param(m, "cnn.dense2.bias"))[0]);
    CHECK(std::abs(got - want) < 1e-12);
  }
  SUBCASE("zero input and zero weights give 0.5") {
    for (auto& p : m.parameters()) p.value.fill(0.0);
    Tape tape(false);
    CHECK(slice_cnn_forward(tape.constant(Tensor({2, 128, 20})), bind_cnn(tape, m)).scalar() == 0.5);
  }
  SUBCASE("output strictly inside (0,1)") {
    for (int i = 0; i < 20; ++i) {
      Tape tape(false);
      const double p =
          slice_cnn_forward(tape.constant(oracle::random_tensor(rng, {2, 128, 20}, -50, 50)), bind_cnn(tape, m)).scalar();
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
  SUBCASE("wrong input shape") {
    Tape tape(false);
    CHECK_THROWS_AS(slice_cnn_forward(tape.constant(Tensor({1, 128, 20})), bind_cnn(tape, m)), std::invalid_argument);
    CHECK_THROWS_AS(slice_cnn_forward(tape.constant(Tensor({2, 128, 24})), bind_cnn(tape, m)), std::invalid_argument);
  }
}

TEST_CASE("encode_hidden") {
  SplitMix64 rng(3);
  EncoderVars pool;
  SUBCASE("zero input gives zero hidden (pool)") {
    Tape tape(false);
    Var h = encode_hidden(tape.constant(Tensor({2, 128, 20})), pool, 128, 20);
    CHECK(h.value() == Tensor({1, 128, 20}));
  }
  SUBCASE("pool output matches a loop reference") {
    Tensor x = oracle::random_tensor(rng, {2, 128, 20});
    Tape tape(false);
    const Tensor& h = encode_hidden(tape.constant(x), pool, 128, 20).value();
    for (std::size_t y = 0; y < 128; ++y)
      for (std::size_t c = 0; c < 20; ++c) {
        const std::size_t py = y / 2 * 2, px = c / 2 * 2;
        double m = -INFINITY;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            m = std::max(m, 0.5 * (x.at(0, py + dy, px + dx) + x.at(1, py + dy, px + dx)));
        CHECK(h.at(0, y, c) == m);
      }
  }
  SUBCASE("pool output is invariant to swaps inside a pooling window") {
    Tensor x = oracle::random_tensor(rng, {2, 128, 20});
    Tensor swapped = x;
    for (std::size_t y = 0; y < 128; y += 2)
      for (std::size_t c = 0; c < 20; c += 2)
        for (std::size_t ch = 0; ch < 2; ++ch) std::swap(swapped.at(ch, y, c), swapped.at(ch, y + 1, c + 1));
    Tape tape(false);
    const Tensor a = encode_hidden(tape.constant(x), pool, 128, 20).value();
    CHECK(a == encode_hidden(tape.constant(swapped), pool, 128, 20).value());
  }
  SUBCASE("output shape is 1x128x20 for both kinds") {
    Model m = Model::create(config_for(ModelKind::stain, EncoderKind::vae), 5);
    Tape tape(false);
    EncoderVars vae;
    vae.kind = EncoderKind::vae;
    Var* slots[] = {&vae.tconv1_k, &vae.tconv1_b, &vae.tconv2_k, &vae.tconv2_b,
                    &vae.conv1_k,  &vae.conv1_b,  &vae.conv2_k,  &vae.conv2_b};
    std::size_t i = 0;
    for (const auto& p : m.parameters())
      if (p.name.starts_with("enc.")) *slots[i++] = tape.constant(p.value);
    REQUIRE(i == 8);
    for (int t = 0; t < 3; ++t) {
      Var x = tape.constant(oracle::random_tensor(rng, {2, 128, 20}));
      CHECK(encode_hidden(x, pool, 128, 20).value().shape() == nm::Shape{1, 128, 20});
      const Tensor& h = encode_hidden(x, vae, 128, 20).value();
      CHECK(h.shape() == nm::Shape{1, 128, 20});
      for (double v : h.data()) CHECK(std::abs(v) < 1.0);
    }
  }
}

TEST_CASE("stain_forward") {
  Model m = Model::create(config_for(ModelKind::stain), 21);
  const Spectrogram feats = random_spec(100, 4);
  const SliceSequence seq = stain::dsp::slice(feats);
  REQUIRE(seq.slices.size() == 5);

  SUBCASE("matches a loop reference with the pool hidden state") {
    Tape tape(false);
    auto out = stain_forward(tape, seq, bind_cnn(tape, m), nullptr);
    EncoderVars pool;
    auto with_pool = stain_forward(tape, seq, bind_cnn(tape, m), &pool);
    Tensor hidden({1, 128, 20});
    double best = 0.0;
    for (std::size_t t = 0; t < seq.slices.size(); ++t) {
      const Tensor x = slice_input(seq.slices[t], hidden);
      const double o = sigmoid(oracle::dense(embed_oracle(x, m), param(m, "cnn.dense2.weight"),
                                             param(m, "cnn.dense2.bias"))[0]);
      CHECK(std::abs(with_pool.per_slice[t].scalar() - o) < 1e-12);
      best = std::max(best, o);
      for (std::size_t y = 0; y < 128; ++y)
        for (std::size_t c = 0; c < 20; ++c) {
          double mx = -INFINITY;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              mx = std::max(mx, 0.5 * (x.at(0, y / 2 * 2 + dy, c / 2 * 2 + dx) + x.at(1, y / 2 * 2 + dy, c / 2 * 2 + dx)));
          hidden.at(0, y, c) = mx;
        }
    }
    CHECK(std::abs(with_pool.probability.scalar() - best) < 1e-12);
    CHECK(out.per_slice.size() == 5);
  }
  SUBCASE("final equals the max of per-slice outputs exactly") {
    for (auto kind : {EncoderKind::pool, EncoderKind::vae}) {
      Model mk = Model::create(config_for(ModelKind::stain, kind), 9);
      auto pred = mk.predict(feats);
      CHECK(pred.probability == *std::max_element(pred.per_slice.begin(), pred.per_slice.end()));
    }
    Tape tape(false);
    std::vector<Var> ps;
    for (double v : {0.1, 0.9, 0.3}) ps.push_back(tape.constant(Tensor({1}, {v})));
    CHECK(nm::max_of(ps).scalar() == 0.9);
  }
  SUBCASE("single slice gives o1") {
    auto pred = m.predict(random_spec(20, 8));
    REQUIRE(pred.per_slice.size() == 1);
    CHECK(pred.probability == pred.per_slice[0]);
  }
  SUBCASE("appending a slice never decreases the final output") {
    for (auto kind : {EncoderKind::pool, EncoderKind::vae}) {
      Model mk = Model::create(config_for(ModelKind::stain, kind), 12);
      const Spectrogram big = random_spec(200, 13);
      double prev = 0.0;
      for (std::size_t n = 20; n <= 200; n += 20) {
        Spectrogram s;
        s.frame_hop_s = 0.01;
        s.values = Tensor({128, n});
        for (std::size_t b = 0; b < 128; ++b)
          for (std::size_t f = 0; f < n; ++f) s.values.at(b, f) = big.values.at(b, f);
        const double p = mk.predict(s).probability;
        CHECK(p >= prev);
        prev = p;
      }
    }
  }
  SUBCASE("empty sequence") {
    Tape tape(false);
    CHECK_THROWS_AS(stain_forward(tape, SliceSequence{}, bind_cnn(tape, m), nullptr), std::invalid_argument);
  }
  SUBCASE("weight tying: one shared CNN across steps") {
    const auto before = m.predict(feats);
    const double delta = 0.37;
    m.parameter("cnn.dense2.bias").value[0] += delta;
    const auto after = m.predict(feats);
    auto logit = [](double p) { return std::log(p / (1.0 - p)); };
    for (std::size_t t = 0; t < before.per_slice.size(); ++t) {
      // The pool hidden state does not depend on the CNN, so every step's
      // logit moves by exactly the bias change.
      CHECK(logit(after.per_slice[t]) - logit(before.per_slice[t]) == doctest::Approx(delta).epsilon(1e-9));
    }
  }
}

TEST_CASE("cnn baseline is stain with a zero hidden state") {
  Model cnn = Model::create(config_for(ModelKind::cnn), 31);
  Model vae = Model::create(config_for(ModelKind::stain, EncoderKind::vae), 31);
  // Same seed and table order: the CNN parameters coincide; silence the encoder.
  for (auto& p : vae.parameters()) {
    if (p.name.starts_with("enc.")) p.value.fill(0.0);
    else CHECK(p.value == param(cnn, p.name.c_str()));
  }
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Spectrogram f = random_spec(87, 40 + s);
    const auto a = cnn.predict(f), b = vae.predict(f);
    CHECK(a.probability == b.probability);
    CHECK(a.per_slice == b.per_slice);
  }
}

TEST_CASE("rnn_forward") {
  Model m = Model::create(config_for(ModelKind::rnn), 5);
  SUBCASE("zero weights give 0.5") {
    for (auto& p : m.parameters()) p.value.fill(0.0);
    CHECK(m.predict(random_spec(30, 1)).probability == 0.5);
  }
  SUBCASE("matches a loop reference") {
    const Spectrogram f = random_spec(25, 2);
    const Tensor &wx = param(m, "rnn.wx"), &wh = param(m, "rnn.wh"), &b = param(m, "rnn.bias");
    std::vector<double> h(64, 0.0);
    for (std::size_t t = 0; t < 25; ++t) {
      std::vector<double> nh(64);
      for (std::size_t i = 0; i < 64; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < 128; ++j) s += wx[i * 128 + j] * f.values.at(j, t);
        for (std::size_t j = 0; j < 64; ++j) s += wh[i * 64 + j] * h[j];
        nh[i] = std::tanh(s);
        CHECK(std::abs(nh[i]) < 1.0);
      }
      h = nh;
    }
    double z = param(m, "head.bias")[0];
    for (std::size_t j = 0; j < 64; ++j) z += param(m, "head.weight")[j] * h[j];
    CHECK(std::abs(m.predict(f).probability - sigmoid(z)) < 1e-12);
  }
  SUBCASE("W_h = 0: trailing zero frames erase history") {
    m.parameter("rnn.wh").value.fill(0.0);
    auto with_tail = [](Spectrogram s, std::size_t zeros) {
      Tensor v({128, s.frames() + zeros});
      for (std::size_t b = 0; b < 128; ++b)
        for (std::size_t f = 0; f < s.frames(); ++f) v.at(b, f) = s.values.at(b, f);
      s.values = v;
      return s;
    };
    const double a = m.predict(with_tail(random_spec(10, 1), 1)).probability;
    const double b = m.predict(with_tail(random_spec(10, 1), 4)).probability;
    const double c = m.predict(with_tail(random_spec(33, 2), 2)).probability;
    CHECK(a == b);
    CHECK(a == c);
  }
}

TEST_CASE("crnn_forward") {
  Model m = Model::create(config_for(ModelKind::crnn), 6);
  SUBCASE("zero weights give 0.5") {
    for (auto& p : m.parameters()) p.value.fill(0.0);
    CHECK(m.predict(random_spec(60, 1)).probability == 0.5);
  }
  SUBCASE("single slice = embedding + one recurrent step") {
    const Spectrogram f = random_spec(20, 3);
    const Tensor x({1, 128, 20}, f.values.values());
    const Tensor e = embed_oracle(x, m);
    Tensor h = oracle::dense(e, param(m, "rnn.wx"), param(m, "rnn.bias"));
    for (auto& v : h.data()) v = std::tanh(v);
    const double want = sigmoid(oracle::dense(h, param(m, "head.weight"), param(m, "head.bias"))[0]);
    CHECK(std::abs(m.predict(f).probability - want) < 1e-12);
  }
  SUBCASE("slice order matters") {
    const Spectrogram f = random_spec(40, 4);
    Spectrogram g = f;
    for (std::size_t b = 0; b < 128; ++b)
      for (std::size_t t = 0; t < 20; ++t) std::swap(g.values.at(b, t), g.values.at(b, t + 20));
    CHECK(m.predict(f).probability != m.predict(g).probability);
  }
  SUBCASE("empty sequence") {
    Tape tape(false);
    RecurrentVars r;
    CHECK_THROWS_AS(crnn_forward(tape, SliceSequence{}, bind_cnn(tape, m), r), std::invalid_argument);
  }
}

TEST_CASE("all models stay inside (0,1)") {
  for (auto kind : {ModelKind::cnn, ModelKind::rnn, ModelKind::crnn, ModelKind::stain}) {
    Model m = Model::create(config_for(kind), 77);
    for (std::uint64_t s = 0; s < 3; ++s) {
      Spectrogram f = random_spec(45, s);
      for (auto& v : f.values.data()) v *= 40.0;
      const double p = m.predict(f).probability;
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
}

TEST_CASE("full-model gradient check on a 2-slice input") {
  const Spectrogram f = random_spec(40, 50);
  struct Case {
    ModelKind kind;
    EncoderKind enc;
  };
  for (Case c : {Case{ModelKind::stain, EncoderKind::vae}, Case{ModelKind::stain, EncoderKind::pool},
                 Case{ModelKind::cnn, EncoderKind::pool}, Case{ModelKind::crnn, EncoderKind::pool},
                 Case{ModelKind::rnn, EncoderKind::pool}}) {
    CAPTURE(to_string(c.kind));
    Model m = Model::create(config_for(c.kind, c.enc), 60);
    std::vector<nm::Parameter*> ps;
    for (auto& p : m.parameters()) ps.push_back(&p);
    for (int label : {0, 1}) {
      auto r = oracle::grad_check(
          ps, [&](Tape& t) { return nm::bce_loss(m.forward(t, f).probability, label); }, 1e-5, 1e-7, 40);
      CHECK(r.checked > 100);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("parameter init") {
  Model a = Model::create(config_for(ModelKind::stain, EncoderKind::vae), 99);
  Model b = Model::create(config_for(ModelKind::stain, EncoderKind::vae), 99);
  Model c = Model::create(config_for(ModelKind::stain, EncoderKind::vae), 100);
  CHECK(a.parameters().front().value == b.parameters().front().value);
  CHECK(a.parameters().front().value != c.parameters().front().value);
  for (const auto& p : a.parameters()) {
    const auto& s = p.value.shape();
    const double fan_in = s.size() == 4 ? double(s[1] * 4) : s.size() == 2 ? double(s[1]) : 0.0;
    if (fan_in == 0.0) continue;
    for (double v : p.value.data()) CHECK(std::abs(v) <= std::sqrt(1.0 / fan_in));
  }
}

TEST_CASE("checkpoint") {
  Model m = Model::create(config_for(ModelKind::stain, EncoderKind::vae), 8);
  m.mutable_config().feature_mean = -3.14159;
  m.mutable_config().feature_std = 2.5e-3;
  Checkpoint ck = make_checkpoint(m, {{"seed", "8"}, {"epochs", "3"}, {"final_loss", "0.25"}});
  const auto bytes = serialize(ck);

  SUBCASE("load then save is byte-identical") {
    Checkpoint back = deserialize(bytes);
    CHECK(serialize(back) == bytes);
    CHECK(back.config == m.config());
    CHECK(back.meta("epochs") == std::optional<std::string>("3"));
    CHECK(!back.meta("nope"));
    const auto f = random_spec(40, 1);
    CHECK(back.model().predict(f).probability == m.predict(f).probability);
  }
  SUBCASE("file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "stain_ckpt_test.bin";
    save_checkpoint(path, ck);
    CHECK(serialize(load_checkpoint(path)) == bytes);
    std::filesystem::remove(path);
  }
  SUBCASE("all kinds round trip") {
    for (auto kind : {ModelKind::cnn, ModelKind::rnn, ModelKind::crnn}) {
      auto b = serialize(make_checkpoint(Model::create(config_for(kind), 2), {}));
      CHECK(serialize(deserialize(b)) == b);
    }
  }
  SUBCASE("corrupt files") {
    auto trunc = bytes;
    trunc.resize(trunc.size() - 8);
    CHECK_THROWS_AS(deserialize(trunc), stain::DataError);
    std::vector<std::uint8_t> junk{'n', 'o', 'p', 'e'};
    CHECK_THROWS_AS(deserialize(junk), stain::DataError);
    std::string text(bytes.begin(), bytes.end());
    text.replace(text.find("kind=stain"), 10, "kind=crnn ");
    CHECK_THROWS(deserialize(std::vector<std::uint8_t>(text.begin(), text.end())));
  }
  SUBCASE("architecture mismatch") {
    Checkpoint bad = ck;
    bad.config.encoder = EncoderKind::pool;
    CHECK_THROWS_AS(bad.model(), stain::DataError);
  }
}

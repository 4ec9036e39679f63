#include "stain/models.hpp"

#include <cmath>
#include <stdexcept>

#include "stain/error.hpp"
#include "stain/rng.hpp"

namespace stain::models {

using numerics::Shape;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::cnn: return "cnn";
    case ModelKind::rnn: return "rnn";
    case ModelKind::crnn: return "crnn";
    case ModelKind::stain: return "stain";
  }
  return "?";
}

std::string to_string(EncoderKind kind) { return kind == EncoderKind::pool ? "pool" : "vae"; }

ModelKind parse_model_kind(std::string_view s) {
  if (s == "cnn") return ModelKind::cnn;
  if (s == "rnn") return ModelKind::rnn;
  if (s == "crnn") return ModelKind::crnn;
  if (s == "stain") return ModelKind::stain;
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "' (expected cnn|rnn|crnn|stain)");
}

EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "pool") return EncoderKind::pool;
  if (s == "vae") return EncoderKind::vae;
  throw std::invalid_argument("unknown encoder kind '" + std::string(s) + "' (expected pool|vae)");
}

std::size_t ModelConfig::flattened_size() const {
  std::size_t h = stft.kept_bins, w = frames_per_slice();
  if (h < 6 || w < 6) throw std::invalid_argument("slice is too small for the two conv/pool stages");
  h = (h - 1) / 2;
  w = (w - 1) / 2;
  h = (h - 1) / 2;
  w = (w - 1) / 2;
  return conv2_channels * h * w;
}

std::vector<std::pair<std::string, Shape>> parameter_table(const ModelConfig& c) {
  std::vector<std::pair<std::string, Shape>> t;
  const bool has_cnn = c.kind != ModelKind::rnn;
  const bool has_rnn = c.kind == ModelKind::rnn || c.kind == ModelKind::crnn;
  if (has_cnn) {
    const std::size_t cin = c.slice_cnn_input_channels();
    t.emplace_back("cnn.conv1.weight", Shape{c.conv1_channels, cin, 2, 2});
    t.emplace_back("cnn.conv1.bias", Shape{c.conv1_channels});
    t.emplace_back("cnn.conv2.weight", Shape{c.conv2_channels, c.conv1_channels, 2, 2});
    t.emplace_back("cnn.conv2.bias", Shape{c.conv2_channels});
    t.emplace_back("cnn.dense1.weight", Shape{c.dense_hidden, c.flattened_size()});
    t.emplace_back("cnn.dense1.bias", Shape{c.dense_hidden});
    if (c.kind != ModelKind::crnn) {
      t.emplace_back("cnn.dense2.weight", Shape{1, c.dense_hidden});
      t.emplace_back("cnn.dense2.bias", Shape{1});
    }
  }
  if (c.kind == ModelKind::stain && c.encoder == EncoderKind::vae) {
    t.emplace_back("enc.tconv1.weight", Shape{4, 2, 2, 2});
    t.emplace_back("enc.tconv1.bias", Shape{4});
    t.emplace_back("enc.tconv2.weight", Shape{4, 4, 2, 2});
    t.emplace_back("enc.tconv2.bias", Shape{4});
    t.emplace_back("enc.conv1.weight", Shape{2, 4, 2, 2});
    t.emplace_back("enc.conv1.bias", Shape{2});
    t.emplace_back("enc.conv2.weight", Shape{1, 2, 2, 2});
    t.emplace_back("enc.conv2.bias", Shape{1});
  }
  if (has_rnn) {
    const std::size_t in = c.kind == ModelKind::rnn ? c.stft.kept_bins : c.dense_hidden;
    t.emplace_back("rnn.wx", Shape{c.rnn_hidden, in});
    t.emplace_back("rnn.wh", Shape{c.rnn_hidden, c.rnn_hidden});
    t.emplace_back("rnn.bias", Shape{c.rnn_hidden});
    t.emplace_back("head.weight", Shape{1, c.rnn_hidden});
    t.emplace_back("head.bias", Shape{1});
  }
  return t;
}

// --- forward building blocks --------------------------------------------------

Var slice_cnn_embed(Var input, const SliceCnnVars& p) {
  Var x = numerics::relu(numerics::maxpool2d(numerics::conv2d(input, p.conv1_k, p.conv1_b)));
  x = numerics::relu(numerics::maxpool2d(numerics::conv2d(x, p.conv2_k, p.conv2_b)));
  x = numerics::reshape(x, {x.value().size()});
  return numerics::relu(numerics::dense(x, p.dense1_w, p.dense1_b));
}

Var slice_cnn_forward(Var input, const SliceCnnVars& p) {
  const auto& s = input.value().shape();
  if (s.size() != 3 || s[0] != p.conv1_k.value().dim(1)) {
    throw std::invalid_argument("slice_cnn_forward: input shape " + numerics::shape_to_string(s) +
                                " does not match the first conv layer");
  }
  if (p.dense1_w.value().dim(1) != p.conv2_k.value().dim(0) * (((s[1] - 1) / 2 - 1) / 2) *
                                       (((s[2] - 1) / 2 - 1) / 2)) {
    throw std::invalid_argument("slice_cnn_forward: input shape " + numerics::shape_to_string(s) +
                                " does not match the dense layer");
  }
  return numerics::sigmoid(numerics::dense(slice_cnn_embed(input, p), p.dense2_w, p.dense2_b));
}

Var encode_hidden(Var input, const EncoderVars& p, std::size_t height, std::size_t width) {
  if (p.kind == EncoderKind::pool) {
    Var m = numerics::channel_mean(input);
    return numerics::crop_pad(numerics::upsample_nearest2x(numerics::maxpool2d(m)), height, width);
  }
  Var x = numerics::crop_pad(numerics::conv_transpose2d(input, p.tconv1_k, p.tconv1_b), height, width);
  x = numerics::crop_pad(numerics::conv_transpose2d(x, p.tconv2_k, p.tconv2_b), height, width);
  x = numerics::crop_pad(numerics::conv2d(x, p.conv1_k, p.conv1_b), height, width);
  x = numerics::crop_pad(numerics::conv2d(x, p.conv2_k, p.conv2_b), height, width);
  return numerics::tanh(x);
}

namespace {

Var slice_constant(Tape& tape, const Tensor& slice) {
  return tape.constant(Tensor({1, slice.dim(0), slice.dim(1)}, slice.values()));
}

Var recurrent_step(Var x, Var h, const RecurrentVars& p) {
  return numerics::tanh(numerics::add(numerics::add(numerics::matvec(p.wx, x), numerics::matvec(p.wh, h)), p.bias));
}

Var recurrent_head(Var h, const RecurrentVars& p) {
  return numerics::sigmoid(numerics::dense(h, p.head_w, p.head_b));
}

}  // namespace

StainOutput stain_forward(Tape& tape, const dsp::SliceSequence& seq, const SliceCnnVars& cnn,
                          const EncoderVars* encoder) {
  if (seq.slices.empty()) throw std::invalid_argument("stain_forward: empty slice sequence");
  const std::size_t h = seq.slices[0].dim(0), w = seq.slices[0].dim(1);
  StainOutput out;
  Var hidden = tape.constant(Tensor({1, h, w}));
  for (std::size_t t = 0; t < seq.slices.size(); ++t) {
    Var x = numerics::concat_channels(slice_constant(tape, seq.slices[t]), hidden);
    out.per_slice.push_back(numerics::reshape(slice_cnn_forward(x, cnn), {1}));
    if (encoder && t + 1 < seq.slices.size()) hidden = encode_hidden(x, *encoder, h, w);
  }
  out.probability = numerics::max_of(out.per_slice);
  return out;
}

Var rnn_forward(Tape& tape, const Tensor& features, const RecurrentVars& p) {
  const std::size_t bins = features.dim(0), frames = features.dim(1);
  if (frames == 0) throw std::invalid_argument("rnn_forward: no frames");
  Var h = tape.constant(Tensor({p.wh.value().dim(0)}));
  Tensor column({bins});
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t b = 0; b < bins; ++b) column[b] = features.at(b, f);
    h = recurrent_step(tape.constant(column), h, p);
  }
  return recurrent_head(h, p);
}

Var crnn_forward(Tape& tape, const dsp::SliceSequence& seq, const SliceCnnVars& cnn, const RecurrentVars& p) {
  if (seq.slices.empty()) throw std::invalid_argument("crnn_forward: empty slice sequence");
  Var h = tape.constant(Tensor({p.wh.value().dim(0)}));
  for (const Tensor& s : seq.slices) h = recurrent_step(slice_cnn_embed(slice_constant(tape, s), cnn), h, p);
  return recurrent_head(h, p);
}

// --- Model -------------------------------------------------------------------

Model::Model(ModelConfig config, std::vector<Parameter> params)
    : config_(std::move(config)), params_(std::move(params)) {}

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
  config.stft.validate();
  SplitMix64 rng(seed);
  std::vector<Parameter> params;
  std::size_t fan_in = 1;
  for (auto& [name, shape] : parameter_table(config)) {
    if (shape.size() == 4) fan_in = shape[1] * shape[2] * shape[3];
    else if (shape.size() == 2) fan_in = shape[1];
    // Biases reuse the fan-in of the weight listed before them.
    const double k = std::sqrt(1.0 / static_cast<double>(fan_in));
    Tensor v(shape);
    for (auto& x : v.data()) x = rng.uniform(-k, k);
    params.emplace_back(name, std::move(v));
  }
  return Model(config, std::move(params));
}

Model Model::from_parameters(const ModelConfig& config, std::vector<Parameter> params) {
  const auto table = parameter_table(config);
  if (table.size() != params.size()) {
    throw DataError("checkpoint/architecture mismatch: " + to_string(config.kind) + " expects " +
                    std::to_string(table.size()) + " parameters, found " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].first != params[i].name || table[i].second != params[i].value.shape()) {
      throw DataError("checkpoint/architecture mismatch at parameter '" + params[i].name + "' " +
                      numerics::shape_to_string(params[i].value.shape()) + ", expected '" + table[i].first +
                      "' " + numerics::shape_to_string(table[i].second));
    }
  }
  return Model(config, std::move(params));
}

Parameter& Model::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

dsp::Spectrogram Model::features(const dsp::Spectrogram& spec) const {
  dsp::Spectrogram f = spec;
  const double inv = 1.0 / config_.feature_std;
  for (auto& v : f.values.data()) v = (v - config_.feature_mean) * inv;
  return f;
}

dsp::Spectrogram Model::features(const dsp::AudioClip& clip) const {
  return features(dsp::spectrogram(clip, config_.stft));
}

namespace {

ForwardResult run(const ModelConfig& cfg, Tape& tape, const dsp::Spectrogram& features, const std::vector<Var>& v) {
  if (features.bins() != cfg.stft.kept_bins) {
    throw std::invalid_argument("model expects " + std::to_string(cfg.stft.kept_bins) + " frequency bins, got " +
                                std::to_string(features.bins()));
  }
  std::size_t i = 0;
  auto next = [&] { return v.at(i++); };
  SliceCnnVars cnn{};
  if (cfg.kind != ModelKind::rnn) {
    cnn.conv1_k = next();
    cnn.conv1_b = next();
    cnn.conv2_k = next();
    cnn.conv2_b = next();
    cnn.dense1_w = next();
    cnn.dense1_b = next();
    if (cfg.kind != ModelKind::crnn) {
      cnn.dense2_w = next();
      cnn.dense2_b = next();
    }
  }
  ForwardResult r;
  switch (cfg.kind) {
    case ModelKind::cnn:
    case ModelKind::stain: {
      EncoderVars enc;
      enc.kind = cfg.encoder;
      if (cfg.kind == ModelKind::stain && cfg.encoder == EncoderKind::vae) {
        enc.tconv1_k = next();
        enc.tconv1_b = next();
        enc.tconv2_k = next();
        enc.tconv2_b = next();
        enc.conv1_k = next();
        enc.conv1_b = next();
        enc.conv2_k = next();
        enc.conv2_b = next();
      }
      auto out = stain_forward(tape, dsp::slice(features), cnn, cfg.kind == ModelKind::stain ? &enc : nullptr);
      r.probability = out.probability;
      r.per_slice = std::move(out.per_slice);
      break;
    }
    case ModelKind::rnn:
    case ModelKind::crnn: {
      RecurrentVars rec{next(), next(), next(), next(), next()};
      r.probability = cfg.kind == ModelKind::rnn ? rnn_forward(tape, features.values, rec)
                                                 : crnn_forward(tape, dsp::slice(features), cnn, rec);
      break;
    }
  }
  return r;
}

}  // namespace

ForwardResult Model::forward(Tape& tape, const dsp::Spectrogram& features) {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (auto& p : params_) vars.push_back(tape.parameter(p));
  return run(config_, tape, features, vars);
}

Model::Prediction Model::predict(const dsp::Spectrogram& features) const {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.constant(p.value));
  ForwardResult r = run(config_, tape, features, vars);
  Prediction out{r.probability.scalar(), {}};
  for (Var v : r.per_slice) out.per_slice.push_back(v.scalar());
  return out;
}

}  // namespace stain::models

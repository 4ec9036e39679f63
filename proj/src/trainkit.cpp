#include "stain/trainkit.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "stain/error.hpp"

namespace stain::trainkit {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  // lr = 0 is allowed: it leaves the parameters untouched, which is useful as a control.
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train.lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train.momentum must be in [0, 1)");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("train.clip_norm must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
}

FeatureSet load_features(const dataset::Dataset& data, const std::string& split, const dsp::StftConfig& stft) {
  FeatureSet set;
  for (const auto& r : data.split(split)) {
    dsp::AudioClip clip = dsp::read_wav(data.resolve(r));
    if (clip.sample_rate != stft.sample_rate) clip = dsp::resample(clip, stft.sample_rate);
    set.spectra.push_back(dsp::spectrogram(clip, stft));
    set.labels.push_back(r.label);
    set.names.push_back(r.path.generic_string());
  }
  if (set.size() == 0) throw DataError("dataset has no '" + split + "' records");
  return set;
}

std::pair<double, double> feature_stats(const FeatureSet& set) {
  double sum = 0.0, n = 0.0;
  for (const auto& s : set.spectra) {
    for (double v : s.values.data()) sum += v;
    n += static_cast<double>(s.values.size());
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& s : set.spectra) {
    for (double v : s.values.data()) ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / n);
  return {mean, sd > 0.0 ? sd : 1.0};
}

TrainResult train(const FeatureSet& train_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("empty training set");
  models::ModelConfig mc;
  mc.kind = cfg.kind;
  mc.encoder = cfg.encoder;
  mc.stft = train_set.spectra.front().config;
  std::tie(mc.feature_mean, mc.feature_std) = feature_stats(train_set);
  Model model = Model::create(mc, derive_seed(cfg.seed, "init"));

  std::vector<dsp::Spectrogram> feats;
  feats.reserve(train_set.size());
  for (const auto& s : train_set.spectra) feats.push_back(model.features(s));

  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "shuffle");
  std::vector<std::size_t> order(train_set.size());
  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(derive_seed(shuffle_seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        numerics::Tape tape;
        numerics::Var loss = numerics::bce_loss(model.forward(tape, feats[idx]).probability, train_set.labels[idx]);
        const double l = loss.scalar();
        if (!std::isfinite(l)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", example " +
                             std::to_string(idx) + " (" + train_set.names[idx] + ")");
        }
        epoch_loss += l;
        tape.backward(numerics::scale(loss, inv));
      }
      try {
        numerics::clip_grad_norm(model.parameters(), cfg.clip_norm);
        numerics::sgd_step(model.parameters(), cfg.lr, cfg.momentum);
      } catch (const NumericError& e) {
        // NaN inputs can vanish through max-pooling and leave a finite loss;
        // name the batch so the bad example can be found.
        std::string names;
        for (std::size_t k = start; k < end; ++k) names += (names.empty() ? "" : ", ") + train_set.names[order[k]];
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) + ", batch of " + names);
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    result.epoch_losses.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }

  std::string losses;
  for (double l : result.epoch_losses) losses += (losses.empty() ? "" : ",") + fmt(l);
  result.checkpoint = models::make_checkpoint(model, {{"seed", std::to_string(cfg.seed)},
                                                      {"epochs", std::to_string(cfg.epochs)},
                                                      {"lr", fmt(cfg.lr)},
                                                      {"momentum", fmt(cfg.momentum)},
                                                      {"batch_size", std::to_string(cfg.batch_size)},
                                                      {"train_examples", std::to_string(train_set.size())},
                                                      {"final_loss", fmt(result.epoch_losses.back())},
                                                      {"epoch_losses", losses}});
  return result;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("metrics: empty confusion matrix");
  const double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
  const double tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);
  MetricsReport r;
  r.sensitivity = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.specificity = tn + fp > 0 ? tn / (tn + fp) : 0.0;
  r.accuracy = (tp + tn) / static_cast<double>(cm.total());
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  r.mcc = den > 0 ? (tp * tn - fp * fn) / std::sqrt(den) : 0.0;
  return r;
}

ConfusionMatrix confusion(const std::vector<int>& labels, const std::vector<int>& predictions) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("confusion: size mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) (predictions[i] ? cm.tp : cm.fn)++;
    else (predictions[i] ? cm.fp : cm.tn)++;
  }
  return cm;
}

Evaluation evaluate(const Model& model, const FeatureSet& set, double threshold) {
  Evaluation ev;
  for (const auto& s : set.spectra) {
    const double p = model.predict(model.features(s)).probability;
    ev.probabilities.push_back(p);
    ev.predictions.push_back(p > threshold ? 1 : 0);
  }
  ev.cm = confusion(set.labels, ev.predictions);
  return ev;
}

TrainConfig default_train_config(ModelKind kind, std::uint64_t seed) {
  // One recipe for every model so the benchmark compares architectures, not
  // tuning. Smaller accumulation batches with a norm cap trained faster and
  // more stably than 16 unclipped on the fixture data.
  TrainConfig c;
  c.kind = kind;
  c.seed = seed;
  c.batch_size = 4;
  c.clip_norm = 1.0;
  return c;
}

BenchmarkConfig BenchmarkConfig::defaults(std::uint64_t seed) {
  BenchmarkConfig b;
  for (ModelKind k : {ModelKind::cnn, ModelKind::rnn, ModelKind::crnn, ModelKind::stain}) {
    b.runs.push_back(default_train_config(k, seed));
  }
  return b;
}

std::vector<BenchmarkRow> benchmark(const FeatureSet& train_set, const FeatureSet& test_set, const BenchmarkConfig& cfg,
                                    const RowCallback& on_row) {
  std::vector<BenchmarkRow> rows;
  for (const TrainConfig& tc : cfg.runs) {
    BenchmarkRow row;
    row.kind = tc.kind;
    row.seed = tc.seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      TrainResult tr = train(train_set, tc);
      const Model model = tr.checkpoint.model();
      row.final_loss = tr.epoch_losses.back();
      row.train_accuracy = metrics(evaluate(model, train_set, cfg.threshold).cm).accuracy;
      row.cm = evaluate(model, test_set, cfg.threshold).cm;
      row.report = metrics(row.cm);
      row.checkpoint = std::move(tr.checkpoint);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_table(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %5s %5s %5s %5s %7s %7s %7s %7s %9s %10s\n", "model", "tp", "fp", "tn", "fn",
                "se", "sp", "acc", "mcc", "train_acc", "final_loss");
  out << line;
  for (const auto& r : rows) {
    if (!r.ok()) {
      std::snprintf(line, sizeof line, "%-6s FAILED: ", models::to_string(r.kind).c_str());
      out << line << r.error << '\n';
      continue;
    }
    std::snprintf(line, sizeof line, "%-6s %5zu %5zu %5zu %5zu %7.4f %7.4f %7.4f %7.4f %9.4f %10.6f\n",
                  models::to_string(r.kind).c_str(), r.cm.tp, r.cm.fp, r.cm.tn, r.cm.fn, r.report.sensitivity,
                  r.report.specificity, r.report.accuracy, r.report.mcc, r.train_accuracy, r.final_loss);
    out << line;
  }
  return out.str();
}

std::string render_records(const std::vector<BenchmarkRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["kind"] = models::to_string(r.kind);
    if (r.ok()) {
      j["tp"] = r.cm.tp;
      j["fp"] = r.cm.fp;
      j["tn"] = r.cm.tn;
      j["fn"] = r.cm.fn;
      j["se"] = r.report.sensitivity;
      j["sp"] = r.report.specificity;
      j["acc"] = r.report.accuracy;
      j["mcc"] = r.report.mcc;
    }
    j["seed"] = r.seed;
    if (r.ok()) {
      j["train_acc"] = r.train_accuracy;
      j["final_loss"] = r.final_loss;
    } else {
      j["error"] = r.error;
    }
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace stain::trainkit

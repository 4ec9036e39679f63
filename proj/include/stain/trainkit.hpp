#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stain/dataset.hpp"
#include "stain/models.hpp"

namespace stain::trainkit {

using models::Checkpoint;
using models::EncoderKind;
using models::Model;
using models::ModelKind;

struct TrainConfig {
  ModelKind kind = ModelKind::stain;
  EncoderKind encoder = EncoderKind::pool;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 16;  // examples per gradient accumulation
  std::size_t epochs = 10;
  double clip_norm = 0.0;  // global gradient-norm cap per step; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

// Spectrograms of one split, computed once and shared across models.
struct FeatureSet {
  std::vector<dsp::Spectrogram> spectra;
  std::vector<int> labels;
  std::vector<std::string> names;

  std::size_t size() const { return labels.size(); }
};

FeatureSet load_features(const dataset::Dataset& data, const std::string& split, const dsp::StftConfig& stft = {});

// Mean and standard deviation over every value of every spectrogram.
std::pair<double, double> feature_stats(const FeatureSet& set);

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;
};

// Seeded per-epoch shuffle; loss = mean BCE over each accumulation batch.
// Throws NumericError naming the epoch and example on a non-finite loss.
TrainResult train(const FeatureSet& train_set, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricsReport {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double mcc = 0.0;
};

// Zero denominators give 0 for the affected metric; an empty matrix throws.
MetricsReport metrics(const ConfusionMatrix& cm);

ConfusionMatrix confusion(const std::vector<int>& labels, const std::vector<int>& predictions);

struct Evaluation {
  ConfusionMatrix cm;
  std::vector<double> probabilities;
  std::vector<int> predictions;  // probability > threshold
};

Evaluation evaluate(const Model& model, const FeatureSet& set, double threshold = 0.5);

// --- benchmark -----------------------------------------------------------------

struct BenchmarkRow {
  ModelKind kind = ModelKind::stain;
  std::uint64_t seed = 0;
  ConfusionMatrix cm;
  MetricsReport report;
  double train_accuracy = 0.0;
  double final_loss = 0.0;
  double seconds = 0.0;
  std::optional<Checkpoint> checkpoint;
  std::string error;  // non-empty when this model failed

  bool ok() const { return error.empty(); }
};

// Training recipe used by the benchmark and the CLI (batch 4, clip 1).
TrainConfig default_train_config(ModelKind kind, std::uint64_t seed = 0);

struct BenchmarkConfig {
  std::vector<TrainConfig> runs;  // one row each, in order
  double threshold = 0.5;

  // cnn, rnn, crnn, stain with their default_train_config.
  static BenchmarkConfig defaults(std::uint64_t seed = 0);
};

using RowCallback = std::function<void(const BenchmarkRow&)>;

// Trains and tests each model kind on the same features. A failure in one
// model is recorded in its row and the others still run.
std::vector<BenchmarkRow> benchmark(const FeatureSet& train_set, const FeatureSet& test_set, const BenchmarkConfig& cfg,
                                    const RowCallback& on_row = {});

std::string render_table(const std::vector<BenchmarkRow>& rows);
// One JSON object per line: kind, tp, fp, tn, fn, se, sp, acc, mcc, seed, ...
std::string render_records(const std::vector<BenchmarkRow>& rows);

}  // namespace stain::trainkit

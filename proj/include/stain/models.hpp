#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stain/autograd.hpp"
#include "stain/dsp.hpp"

namespace stain::models {

using numerics::Parameter;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

enum class ModelKind { cnn, rnn, crnn, stain };
enum class EncoderKind { pool, vae };

std::string to_string(ModelKind kind);
std::string to_string(EncoderKind kind);
ModelKind parse_model_kind(std::string_view s);
EncoderKind parse_encoder_kind(std::string_view s);

struct ModelConfig {
  ModelKind kind = ModelKind::stain;
  EncoderKind encoder = EncoderKind::pool;
  dsp::StftConfig stft;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t dense_hidden = 64;
  std::size_t rnn_hidden = 64;
  // Spectrogram standardisation applied before slicing.
  double feature_mean = 0.0;
  double feature_std = 1.0;

  std::size_t frames_per_slice() const { return dsp::frames_per_slice(stft.frame_hop_s()); }
  std::size_t slice_cnn_input_channels() const { return kind == ModelKind::crnn ? 1 : 2; }
  // Length of the flattened feature map entering the first dense layer.
  std::size_t flattened_size() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// --- parameter views bound to a tape ------------------------------------------

struct SliceCnnVars {
  Var conv1_k, conv1_b, conv2_k, conv2_b, dense1_w, dense1_b, dense2_w, dense2_b;
};

struct EncoderVars {
  EncoderKind kind = EncoderKind::pool;
  // Only used by the vae kind.
  Var tconv1_k, tconv1_b, tconv2_k, tconv2_b, conv1_k, conv1_b, conv2_k, conv2_b;
};

struct RecurrentVars {
  Var wx, wh, bias, head_w, head_b;
};

// conv -> pool -> relu -> conv -> pool -> relu -> flatten -> dense -> relu.
Var slice_cnn_embed(Var input, const SliceCnnVars& p);
// slice_cnn_embed -> dense(1) -> sigmoid; input [C,bins,frames_per_slice].
Var slice_cnn_forward(Var input, const SliceCnnVars& p);

// Hidden state [1,height,width] from the concatenated step input.
Var encode_hidden(Var input, const EncoderVars& p, std::size_t height, std::size_t width);

struct StainOutput {
  Var probability;
  std::vector<Var> per_slice;
};

// Shared CNN and encoder across steps; final = max over per-slice outputs.
// A null encoder keeps the hidden channel at zero (the CNN baseline).
StainOutput stain_forward(Tape& tape, const dsp::SliceSequence& slices, const SliceCnnVars& cnn,
                          const EncoderVars* encoder);

// features: [bins, frames]; one recurrent step per frame column.
Var rnn_forward(Tape& tape, const Tensor& features, const RecurrentVars& p);

// Single-channel slice CNN embeddings fed through a recurrent cell.
Var crnn_forward(Tape& tape, const dsp::SliceSequence& slices, const SliceCnnVars& cnn, const RecurrentVars& p);

// --- model -------------------------------------------------------------------

struct ForwardResult {
  Var probability;
  // Per-slice probabilities for cnn/stain; empty for rnn/crnn.
  std::vector<Var> per_slice;
};

class Model {
 public:
  // Parameters drawn uniform(-k, k), k = sqrt(1/fan_in), in table order.
  static Model create(const ModelConfig& config, std::uint64_t seed);
  // Parameters supplied by a checkpoint; shapes are validated.
  static Model from_parameters(const ModelConfig& config, std::vector<Parameter> params);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  std::size_t parameter_count() const;

  // Standardised spectrogram, ready for forward().
  dsp::Spectrogram features(const dsp::Spectrogram& spec) const;
  dsp::Spectrogram features(const dsp::AudioClip& clip) const;

  ForwardResult forward(Tape& tape, const dsp::Spectrogram& features);

  struct Prediction {
    double probability = 0.0;
    std::vector<double> per_slice;
  };
  Prediction predict(const dsp::Spectrogram& features) const;

 private:
  Model(ModelConfig config, std::vector<Parameter> params);

  ModelConfig config_;
  std::vector<Parameter> params_;
};

// Expected (name, shape) table for a configuration, in checkpoint order.
std::vector<std::pair<std::string, numerics::Shape>> parameter_table(const ModelConfig& config);

// --- checkpoint ----------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  std::vector<Parameter> params;
  // Training metadata, kept verbatim and in order (seed, epochs, final_loss, ...).
  std::vector<std::pair<std::string, std::string>> metadata;

  std::optional<std::string> meta(std::string_view key) const;
  Model model() const;
};

Checkpoint make_checkpoint(const Model& model, std::vector<std::pair<std::string, std::string>> metadata);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stain::models

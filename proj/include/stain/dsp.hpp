#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stain/tensor.hpp"

namespace stain::dsp {

using numerics::Tensor;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct StftConfig {
  int sample_rate = 16000;
  std::size_t window_len = 512;
  std::size_t hop = 160;
  std::size_t fft_len = 512;
  std::size_t kept_bins = 128;

  double frame_hop_s() const { return static_cast<double>(hop) / sample_rate; }
  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

inline constexpr double kLogFloor = 1e-6;
inline constexpr double kSliceDurationS = 0.200;

struct Spectrogram {
  Tensor values;  // [kept_bins, frames], ln(|X| + 1e-6)
  double frame_hop_s = 0.0;
  StftConfig config;

  std::size_t bins() const { return values.dim(0); }
  std::size_t frames() const { return values.dim(1); }
};

struct SliceSequence {
  std::vector<Tensor> slices;  // each [kept_bins, frames_per_slice]
  std::size_t real_frames = 0;  // frames before zero padding
  double slice_duration_s = kSliceDurationS;
};

// --- WAV -------------------------------------------------------------------

// PCM 16-bit or IEEE float 32-bit, mono or stereo (averaged to mono).
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);
// 16-bit PCM mono; samples outside [-1, 1] are clipped.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Nearest 16-bit value as a double in [-1, 1).
double quantize16(double sample);

// --- signal processing -------------------------------------------------------

// Linear interpolation onto a new sample grid.
AudioClip resample(const AudioClip& clip, int target_rate);

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& data);

// Periodic Hann window of the given length.
std::vector<double> hann_window(std::size_t length);

std::size_t frame_count(std::size_t samples, const StftConfig& cfg);

// Full complex spectrum (fft_len bins) of one Hann-windowed frame.
std::vector<std::complex<double>> frame_spectrum(std::span<const double> samples, const StftConfig& cfg,
                                                 std::size_t frame);

Spectrogram spectrogram(const AudioClip& clip, const StftConfig& cfg);

std::size_t frames_per_slice(double frame_hop_s);

SliceSequence slice(const Spectrogram& spec);

// Inverse of slice(): concatenates slices and drops the padding.
Tensor unslice(const SliceSequence& seq);

// Debug dump: one text header line "bins=B frames=F hop_s=H" then B*F
// little-endian float64 values, row-major.
void write_spectrogram_dump(const std::filesystem::path& path, const Spectrogram& spec);
Spectrogram read_spectrogram_dump(const std::filesystem::path& path);

}  // namespace stain::dsp

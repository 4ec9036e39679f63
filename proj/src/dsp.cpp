#include "stain/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "stain/error.hpp"

namespace stain::dsp {

using numerics::Tensor;

void StftConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("stft: sample_rate must be positive");
  if (window_len == 0) throw std::invalid_argument("stft: window_len must be positive");
  if (hop == 0 || hop > window_len) throw std::invalid_argument("stft: hop must be in [1, window_len]");
  if (!std::has_single_bit(fft_len) || fft_len < window_len) {
    throw std::invalid_argument("stft: fft_len must be a power of two >= window_len");
  }
  if (kept_bins == 0 || kept_bins > fft_len / 2 + 1) {
    throw std::invalid_argument("stft: kept_bins must be in [1, fft_len/2 + 1]");
  }
}

// --- WAV ---------------------------------------------------------------------

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

bool tag_is(const std::uint8_t* p, const char* tag) { return std::equal(p, p + 4, tag); }

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE")) {
    throw DataError("wav: malformed header (missing RIFF/WAVE tag)");
  }
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t len = binio::get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (tag_is(chunk, "fmt ")) {
      if (len < 16 || body + len > bytes.size()) throw DataError("wav: fmt chunk truncated");
      const std::uint8_t* f = bytes.data() + body;
      format = binio::get_u16(f);
      channels = binio::get_u16(f + 2);
      rate = binio::get_u32(f + 4);
      block_align = binio::get_u16(f + 12);
      bits = binio::get_u16(f + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw DataError("wav: fmt extensible chunk truncated");
        format = binio::get_u16(f + 24);
      }
      have_fmt = true;
    } else if (tag_is(chunk, "data")) {
      if (body + len > bytes.size()) throw DataError("wav: data chunk shorter than declared");
      data = bytes.data() + body;
      data_len = len;
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw DataError("wav: missing fmt chunk");
  if (!data) throw DataError("wav: missing data chunk");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw DataError("wav: unsupported codec (fmt.audio_format=" + std::to_string(format) +
                    ", fmt.bits_per_sample=" + std::to_string(bits) + ")");
  }
  if (channels != 1 && channels != 2) {
    throw DataError("wav: unsupported fmt.num_channels=" + std::to_string(channels));
  }
  if (rate == 0) throw DataError("wav: fmt.sample_rate is zero");
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != channels * bytes_per_sample) throw DataError("wav: fmt.block_align inconsistent");
  const std::size_t frames = data_len / block_align;
  if (frames == 0) throw DataError("wav: data chunk holds no samples");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * block_align + c * bytes_per_sample;
      acc += pcm16 ? static_cast<std::int16_t>(binio::get_u16(p)) / 32768.0 : binio::get_f32(p);
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  try {
    return decode_wav(binio::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

std::int16_t to_pcm16(double x) {
  const double v = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

}  // namespace

double quantize16(double sample) { return to_pcm16(sample) / 32768.0; }

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  const auto data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  binio::put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  binio::put_u32(out, 16);
  binio::put_u16(out, kFormatPcm);
  binio::put_u16(out, 1);
  binio::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  binio::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
  binio::put_u16(out, 2);
  binio::put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  binio::put_u32(out, data_len);
  for (double s : clip.samples) binio::put_u16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  binio::write_file(path, encode_wav(clip));
}

// --- signal processing ----------------------------------------------------------

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target_rate must be positive");
  if (target_rate == clip.sample_rate || clip.samples.empty()) {
    return AudioClip{clip.samples, target_rate};
  }
  const std::size_t n_in = clip.samples.size();
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  const auto n_out = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(static_cast<double>(n_in) * target_rate / clip.sample_rate)));
  AudioClip out{std::vector<double>(n_out), target_rate};
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= n_in) {
      out.samples[i] = clip.samples[n_in - 1];
      continue;
    }
    const double a = clip.samples[i0], b = clip.samples[i0 + 1];
    out.samples[i] = a + (pos - static_cast<double>(i0)) * (b - a);
  }
  return out;
}

namespace {

class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), twiddle_(n / 2) {
    if (!std::has_single_bit(n)) throw std::invalid_argument("fft: size must be a power of two");
    for (std::size_t k = 0; k < n / 2; ++k) {
      twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    }
  }

  void forward(std::vector<std::complex<double>>& a) const {
    if (a.size() != n_) throw std::invalid_argument("fft: buffer size does not match plan");
    for (std::size_t i = 1, j = 0; i < n_; ++i) {
      std::size_t bit = n_ >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2, stride = n_ / len;
      for (std::size_t i = 0; i < n_; i += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const std::complex<double> t = twiddle_[k * stride] * a[i + k + half];
          a[i + k + half] = a[i + k] - t;
          a[i + k] += t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
};

}  // namespace

void fft(std::vector<std::complex<double>>& data) {
  if (data.size() <= 1) return;
  FftPlan(data.size()).forward(data);
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(length));
  }
  return w;
}

std::size_t frame_count(std::size_t samples, const StftConfig& cfg) {
  if (samples < cfg.window_len) return 0;
  return 1 + (samples - cfg.window_len) / cfg.hop;
}

std::vector<std::complex<double>> frame_spectrum(std::span<const double> samples, const StftConfig& cfg,
                                                 std::size_t frame) {
  cfg.validate();
  if (frame >= frame_count(samples.size(), cfg)) throw std::out_of_range("frame_spectrum: frame index out of range");
  const auto window = hann_window(cfg.window_len);
  std::vector<std::complex<double>> buf(cfg.fft_len);
  const std::size_t start = frame * cfg.hop;
  for (std::size_t n = 0; n < cfg.window_len; ++n) buf[n] = samples[start + n] * window[n];
  fft(buf);
  return buf;
}

Spectrogram spectrogram(const AudioClip& clip, const StftConfig& cfg) {
  cfg.validate();
  if (clip.samples.size() < cfg.window_len) {
    throw std::invalid_argument("spectrogram: clip has " + std::to_string(clip.samples.size()) +
                                " samples, shorter than one window (" + std::to_string(cfg.window_len) + ")");
  }
  const std::size_t frames = frame_count(clip.samples.size(), cfg);
  const auto window = hann_window(cfg.window_len);
  const FftPlan plan(cfg.fft_len);
  Spectrogram spec{Tensor({cfg.kept_bins, frames}), cfg.frame_hop_s(), cfg};
  std::vector<std::complex<double>> buf(cfg.fft_len);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const double* src = clip.samples.data() + f * cfg.hop;
    for (std::size_t n = 0; n < cfg.window_len; ++n) buf[n] = src[n] * window[n];
    plan.forward(buf);
    for (std::size_t k = 0; k < cfg.kept_bins; ++k) spec.values.at(k, f) = std::log(std::abs(buf[k]) + kLogFloor);
  }
  return spec;
}

std::size_t frames_per_slice(double frame_hop_s) {
  if (!(frame_hop_s > 0.0)) throw std::invalid_argument("slice: frame hop must be positive");
  const double exact = kSliceDurationS / frame_hop_s;
  const double n = std::round(exact);
  if (n < 1.0 || std::abs(n * frame_hop_s - kSliceDurationS) > 1e-9) {
    throw std::invalid_argument("slice: frame hop does not divide the 200 ms slice duration");
  }
  return static_cast<std::size_t>(n);
}

SliceSequence slice(const Spectrogram& spec) {
  const std::size_t per = frames_per_slice(spec.frame_hop_s);
  const std::size_t bins = spec.bins(), frames = spec.frames();
  const std::size_t count = (frames + per - 1) / per;
  SliceSequence seq;
  seq.real_frames = frames;
  seq.slices.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Tensor t({bins, per});
    const std::size_t f0 = s * per;
    const std::size_t n = std::min(per, frames - f0);
    for (std::size_t b = 0; b < bins; ++b) {
      const double* src = spec.values.data().data() + b * frames + f0;
      std::copy(src, src + n, t.data().data() + b * per);
    }
    seq.slices.push_back(std::move(t));
  }
  return seq;
}

Tensor unslice(const SliceSequence& seq) {
  if (seq.slices.empty()) throw std::invalid_argument("unslice: empty sequence");
  const std::size_t bins = seq.slices[0].dim(0), per = seq.slices[0].dim(1);
  Tensor out({bins, seq.real_frames});
  for (std::size_t f = 0; f < seq.real_frames; ++f) {
    const Tensor& s = seq.slices[f / per];
    for (std::size_t b = 0; b < bins; ++b) out.at(b, f) = s.at(b, f % per);
  }
  return out;
}

void write_spectrogram_dump(const std::filesystem::path& path, const Spectrogram& spec) {
  char header[128];
  std::snprintf(header, sizeof header, "bins=%zu frames=%zu hop_s=%.17g\n", spec.bins(), spec.frames(),
                spec.frame_hop_s);
  std::vector<std::uint8_t> out(header, header + std::char_traits<char>::length(header));
  for (double v : spec.values.data()) binio::put_f64(out, v);
  binio::write_file(path, out);
}

Spectrogram read_spectrogram_dump(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
  if (nl == bytes.end()) throw DataError(path.string() + ": spectrogram dump header missing");
  std::size_t bins = 0, frames = 0;
  double hop = 0.0;
  const std::string header(bytes.begin(), nl);
  if (std::sscanf(header.c_str(), "bins=%zu frames=%zu hop_s=%lf", &bins, &frames, &hop) != 3 || bins == 0 ||
      frames == 0) {
    throw DataError(path.string() + ": malformed spectrogram dump header");
  }
  const std::size_t offset = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  if (bytes.size() - offset != bins * frames * 8) throw DataError(path.string() + ": spectrogram dump truncated");
  Spectrogram spec;
  spec.values = Tensor({bins, frames});
  for (std::size_t i = 0; i < bins * frames; ++i) spec.values[i] = binio::get_f64(bytes.data() + offset + 8 * i);
  spec.frame_hop_s = hop;
  spec.config.kept_bins = bins;
  return spec;
}

}  // namespace stain::dsp

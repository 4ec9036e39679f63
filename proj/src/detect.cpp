#include "stain/detect.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace stain::detect {

void DetectionConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
  if (!(window_s > 0.0) || !(hop_s > 0.0)) throw std::invalid_argument("window and hop must be positive");
  if (hop_s > window_s) throw std::invalid_argument("hop must not exceed the window");
  if (!(refractory_s >= 0.0)) throw std::invalid_argument("refractory period must be non-negative");
}

Detector::Detector(const models::Model& model, DetectionConfig cfg, Sink sink)
    : model_(model), cfg_(cfg), sink_(std::move(sink)) {
  cfg_.validate();
  const double rate = model_.config().stft.sample_rate;
  window_len_ = static_cast<std::size_t>(std::llround(cfg_.window_s * rate));
  hop_len_ = static_cast<std::size_t>(std::llround(cfg_.hop_s * rate));
  if (hop_len_ == 0) throw std::invalid_argument("hop is shorter than one sample");
}

void Detector::push(std::span<const double> samples) {
  if (finished_) throw std::logic_error("Detector::push after finish");
  buffer_.insert(buffer_.end(), samples.begin(), samples.end());
  total_ += samples.size();
  while (next_start_ + window_len_ <= total_) {
    run_window(next_start_, window_len_);
    next_start_ += hop_len_;
    // Drop what no later window can reach.
    const std::size_t drop = next_start_ - buffer_start_;
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(drop));
    buffer_start_ = next_start_;
  }
}

void Detector::finish() {
  if (finished_) return;
  finished_ = true;
  // The tail past the last full window, or a stream shorter than one window.
  const bool uncovered = windows_ == 0 ? total_ > 0 : next_start_ - hop_len_ + window_len_ < total_;
  if (uncovered) run_window(next_start_, total_ - next_start_);
}

void Detector::run_window(std::size_t start, std::size_t len) {
  ++windows_;
  const auto& mc = model_.config();
  const double rate = mc.stft.sample_rate;
  dsp::AudioClip clip;
  clip.sample_rate = mc.stft.sample_rate;
  const auto first = buffer_.begin() + static_cast<std::ptrdiff_t>(start - buffer_start_);
  clip.samples.assign(first, first + static_cast<std::ptrdiff_t>(len));
  if (clip.samples.size() < mc.stft.window_len) clip.samples.resize(mc.stft.window_len, 0.0);

  const auto pred = model_.predict(model_.features(clip));
  if (!(pred.probability > cfg_.threshold)) return;

  const double t0 = static_cast<double>(start) / rate;
  // Positive stretches as (onset, offset, stamp, probability).
  struct Span {
    double onset, offset, stamp, p;
  };
  std::vector<Span> spans;
  if (pred.per_slice.empty()) {
    const double end = t0 + static_cast<double>(len) / rate;
    spans.push_back({t0, end, 0.5 * (t0 + end), pred.probability});
  } else {
    for (std::size_t i = 0; i < pred.per_slice.size(); ++i) {
      const double p = pred.per_slice[i];
      if (!(p > cfg_.threshold)) continue;
      const double on = t0 + static_cast<double>(i) * dsp::kSliceDurationS;
      spans.push_back({on, on + dsp::kSliceDurationS, on + 0.5 * dsp::kSliceDurationS, p});
    }
  }
  // Slack keeps gaps of exactly one refractory period from losing to rounding.
  auto fresh = [&](double onset) { return !active_ || onset - active_until_ >= cfg_.refractory_s - 1e-9; };
  std::optional<CoughEvent> pending;
  auto flush = [&] {
    if (!pending) return;
    events_.push_back(*pending);
    if (sink_) sink_(events_.back());
    pending.reset();
  };
  for (const Span& sp : spans) {
    if (fresh(sp.onset)) {
      flush();
      pending = CoughEvent{sp.stamp, sp.p};
    } else if (pending && sp.p > pending->probability) {
      // Still the same event: keep its strongest slice.
      pending = CoughEvent{sp.stamp, sp.p};
    }
    active_ = true;
    active_until_ = std::max(active_until_, sp.offset);
  }
  flush();
}

std::vector<CoughEvent> detect(const models::Model& model, const dsp::AudioClip& clip, const DetectionConfig& cfg) {
  const dsp::AudioClip a = dsp::resample(clip, model.config().stft.sample_rate);
  Detector d(model, cfg);
  d.push(a.samples);
  d.finish();
  return d.events();
}

}  // namespace stain::detect

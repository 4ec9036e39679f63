#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stain/dsp.hpp"
#include "stain/forecast.hpp"
#include "stain/models.hpp"

namespace stain::detect {

using forecast::CoughEvent;

struct DetectionConfig {
  double threshold = 0.5;
  double window_s = 4.0;
  double hop_s = 1.0;
  double refractory_s = 1.0;

  void validate() const;
};

// Sliding-window cough detector. Windows start every hop_s; the last window
// is cut short at the end of the stream when needed, so every sample is
// covered. cnn/stain events are stamped at the centre of the highest-scoring
// slice, rnn/crnn events at the centre of the window.
//
// The refractory period runs from the end of the last detected activity, not
// from the last event: every positive slice (or the whole window for
// rnn/crnn) extends it, and a positive slice starting at least refractory_s
// after it opens a new event. The event keeps the strongest slice of its
// stretch within the window that opened it. A multi-burst cough seen through
// overlapping windows is then reported once.
class Detector {
 public:
  using Sink = std::function<void(const CoughEvent&)>;

  // Audio must arrive at the model's sample rate.
  Detector(const models::Model& model, DetectionConfig cfg, Sink sink = {});

  void push(std::span<const double> samples);
  void finish();

  const std::vector<CoughEvent>& events() const { return events_; }
  std::size_t windows() const { return windows_; }

 private:
  void run_window(std::size_t start, std::size_t len);

  const models::Model& model_;
  DetectionConfig cfg_;
  Sink sink_;
  std::size_t window_len_ = 0, hop_len_ = 0;
  std::vector<double> buffer_;  // samples from buffer_start_ on
  std::size_t buffer_start_ = 0;
  std::size_t next_start_ = 0;  // stream offset of the next window
  std::size_t total_ = 0;
  bool finished_ = false;
  std::size_t windows_ = 0;
  std::vector<CoughEvent> events_;
  bool active_ = false;
  double active_until_ = 0.0;  // end of the latest positive slice, seconds
};

// Whole clip at once; resampled to the model rate first.
std::vector<CoughEvent> detect(const models::Model& model, const dsp::AudioClip& clip, const DetectionConfig& cfg = {});

}  // namespace stain::detect

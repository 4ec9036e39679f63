#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stain/envrisk.hpp"

namespace stain::forecast {

struct CoughEvent {
  double timestamp = 0.0;  // UTC seconds
  double probability = 0.0;
};

struct Bucket {
  double start = 0.0;
  std::size_t count = 0;
};

struct CoughTimeSeries {
  double bucket_duration_s = 3600.0;
  std::vector<Bucket> buckets;  // contiguous, ascending

  double frequency(std::size_t i) const;  // coughs per hour
  bool empty() const { return buckets.empty(); }
};

// Buckets run from the first event to the last; gaps give zero counts.
CoughTimeSeries aggregate(std::vector<CoughEvent> events, double bucket_duration_s = 3600.0);

struct TrendModel {
  double slope = 0.0;      // coughs/hour per day
  double intercept = 0.0;  // coughs/hour at the series start
  double rms_residual = 0.0;
  double start_time = 0.0;  // UTC seconds of the first bucket
  double end_day = 0.0;     // day offset of the last bucket
};

// Ordinary least squares of frequency against bucket start in days.
TrendModel fit_trend(const CoughTimeSeries& series);

struct ForecastConfig {
  double reference_frequency = 10.0;  // coughs/hour taken as severity 1
  double alert_threshold = 1.5;

  void validate() const;
};

struct ForecastDay {
  double day = 0.0;  // days from the series start
  double predicted_frequency = 0.0;
  double severity = 0.0;
  double combined_score = 0.0;
};

struct Forecast {
  TrendModel trend;
  ForecastConfig config;
  double env_risk_pct = 0.0;
  std::size_t horizon_days = 0;
  std::vector<ForecastDay> days;
  bool alert = false;
  std::size_t alert_day = 0;  // 1-based day of the first score over threshold
  double alert_score = 0.0;
};

// Day k of the horizon sits k days past the last observed bucket.
Forecast make_forecast(const TrendModel& trend, double env_risk_pct, std::size_t horizon_days,
                       const ForecastConfig& cfg = {});
inline Forecast make_forecast(const TrendModel& trend, const envrisk::RiskAssessment& env, std::size_t horizon_days,
                              const ForecastConfig& cfg = {}) {
  return make_forecast(trend, env.total, horizon_days, cfg);
}

double combined_score(double predicted_frequency, double env_risk_pct, double reference_frequency);

std::string render_record(const Forecast& f);  // one JSON object
std::string summary_line(const Forecast& f);   // "ALERT in N days: score S ≥ T" or "no alert within horizon"

// Event files: one `timestamp[,probability]` per line; '#' comments allowed.
std::vector<CoughEvent> read_events(const std::string& path);

}  // namespace stain::forecast

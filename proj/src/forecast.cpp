#include "stain/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "stain/error.hpp"

namespace stain::forecast {

namespace {
constexpr double kDay = 86400.0;
}

double CoughTimeSeries::frequency(std::size_t i) const {
  return static_cast<double>(buckets.at(i).count) * 3600.0 / bucket_duration_s;
}

CoughTimeSeries aggregate(std::vector<CoughEvent> events, double bucket_duration_s) {
  if (!(bucket_duration_s > 0.0)) throw std::invalid_argument("bucket duration must be positive");
  CoughTimeSeries series;
  series.bucket_duration_s = bucket_duration_s;
  if (events.empty()) return series;
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  const double t0 = events.front().timestamp;
  const auto last = static_cast<std::size_t>(std::floor((events.back().timestamp - t0) / bucket_duration_s));
  series.buckets.resize(last + 1);
  for (std::size_t i = 0; i <= last; ++i) series.buckets[i].start = t0 + static_cast<double>(i) * bucket_duration_s;
  for (const auto& e : events) {
    const auto i = std::min(last, static_cast<std::size_t>(std::floor((e.timestamp - t0) / bucket_duration_s)));
    ++series.buckets[i].count;
  }
  return series;
}

TrendModel fit_trend(const CoughTimeSeries& series) {
  const std::size_t n = series.buckets.size();
  if (n < 2) throw std::invalid_argument("fit_trend needs at least 2 buckets, got " + std::to_string(n));
  const double t0 = series.buckets.front().start;
  std::vector<double> x(n), y(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = (series.buckets[i].start - t0) / kDay;
    y[i] = series.frequency(i);
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  TrendModel t;
  t.slope = sxy / sxx;
  t.intercept = my - t.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (t.intercept + t.slope * x[i]);
    ss += r * r;
  }
  t.rms_residual = std::sqrt(ss / static_cast<double>(n));
  t.start_time = t0;
  t.end_day = x.back();
  return t;
}

void ForecastConfig::validate() const {
  if (!(reference_frequency > 0.0) || !std::isfinite(reference_frequency)) {
    throw std::invalid_argument("reference_frequency must be positive");
  }
  if (!std::isfinite(alert_threshold)) throw std::invalid_argument("alert_threshold must be finite");
}

double combined_score(double predicted_frequency, double env_risk_pct, double reference_frequency) {
  return predicted_frequency / reference_frequency * (1.0 + env_risk_pct / 100.0);
}

Forecast make_forecast(const TrendModel& trend, double env_risk_pct, std::size_t horizon_days,
                       const ForecastConfig& cfg) {
  cfg.validate();
  if (horizon_days < 1) throw std::invalid_argument("forecast horizon must be at least 1 day");
  if (!std::isfinite(trend.slope) || !std::isfinite(trend.intercept)) throw NumericError("trend is not finite");
  Forecast f;
  f.trend = trend;
  f.config = cfg;
  f.env_risk_pct = env_risk_pct;
  f.horizon_days = horizon_days;
  for (std::size_t k = 1; k <= horizon_days; ++k) {
    ForecastDay d;
    d.day = trend.end_day + static_cast<double>(k);
    d.predicted_frequency = std::max(0.0, trend.intercept + trend.slope * d.day);
    d.severity = d.predicted_frequency / cfg.reference_frequency;
    d.combined_score = d.severity * (1.0 + env_risk_pct / 100.0);
    if (!f.alert && d.combined_score >= cfg.alert_threshold) {
      f.alert = true;
      f.alert_day = k;
      f.alert_score = d.combined_score;
    }
    f.days.push_back(d);
  }
  return f;
}

std::string render_record(const Forecast& f) {
  nlohmann::ordered_json j;
  j["slope"] = f.trend.slope;
  j["intercept"] = f.trend.intercept;
  j["rms_residual"] = f.trend.rms_residual;
  j["start_time"] = f.trend.start_time;
  j["env_risk_pct"] = f.env_risk_pct;
  j["reference_frequency"] = f.config.reference_frequency;
  j["alert_threshold"] = f.config.alert_threshold;
  j["horizon_days"] = f.horizon_days;
  auto& days = j["days"] = nlohmann::ordered_json::array();
  for (const auto& d : f.days) {
    days.push_back({{"day", d.day},
                    {"predicted_frequency", d.predicted_frequency},
                    {"severity", d.severity},
                    {"combined_score", d.combined_score}});
  }
  j["alert"] = f.alert;
  if (f.alert) {
    j["alert_day"] = f.alert_day;
    j["alert_score"] = f.alert_score;
  }
  return j.dump();
}

std::string summary_line(const Forecast& f) {
  if (!f.alert) return "no alert within horizon";
  char buf[128];
  std::snprintf(buf, sizeof buf, "ALERT in %zu days: score %.4g ≥ %.4g", f.alert_day, f.alert_score,
                f.config.alert_threshold);
  return buf;
}

std::vector<CoughEvent> read_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<CoughEvent> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    CoughEvent e;
    char* end = nullptr;
    e.timestamp = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || !std::isfinite(e.timestamp)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad timestamp");
    }
    e.probability = 1.0;
    const char* rest = end;
    while (*rest == ' ' || *rest == '\t' || *rest == ',') ++rest;
    if (*rest != '\0' && *rest != '\r') {
      char* pend = nullptr;
      e.probability = std::strtod(rest, &pend);
      if (pend == rest) throw DataError(path + ":" + std::to_string(lineno) + ": bad probability");
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace stain::forecast

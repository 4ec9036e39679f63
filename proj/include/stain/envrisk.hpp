#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stain::envrisk {

enum class EnvFactor { pm2_5, pm10, no2, temperature };

inline constexpr std::array<EnvFactor, 4> kAllFactors{EnvFactor::pm2_5, EnvFactor::pm10, EnvFactor::no2,
                                                      EnvFactor::temperature};

// "PM2_5", "PM10", "NO2", "TEMPERATURE".
std::string to_string(EnvFactor f);
// Case-insensitive; also accepts "pm2.5", "pm25", "temp".
EnvFactor parse_factor(std::string_view s);

struct SensorSample {
  std::string sensor_id;
  double latitude = 0.0;
  double longitude = 0.0;
  EnvFactor factor = EnvFactor::pm2_5;
  double value = 0.0;  // µg/m³, or °F for temperature
  std::int64_t timestamp = 0;  // UTC seconds

  bool valid() const;
};

// --- ingestion -----------------------------------------------------------------

enum class SourceKind { purpleair, waqi, generic };
SourceKind parse_source_kind(std::string_view s);

struct IngestResult {
  std::vector<SensorSample> samples;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;  // one per dropped record or sample
};

// purpleair: {"fields": [...], "data": [[...], ...]} using sensor_index,
//   latitude, longitude, pm2.5 (or pm2.5_atm), pm10.0 (or pm10.0_atm),
//   temperature (°F), last_seen (epoch s).
// waqi: a feed "data" object, a {"status","data"} envelope, or an array of
//   either; reads idx, city.geo, iaqi.{pm25,pm10,no2,t}.v (t in °C) and time.v.
// generic: CSV lines `id,lat,lon,FACTOR,value,ts`, optional header.
IngestResult ingest_text(std::string_view text, SourceKind kind, const std::string& origin = "<input>");
IngestResult ingest_snapshot(const std::filesystem::path& path, SourceKind kind);

// --- interpolation -------------------------------------------------------------

inline constexpr double kEarthRadiusKm = 6371.0088;

double haversine_km(double lat1, double lon1, double lat2, double lon2);

struct InterpolationOptions {
  double power = 2.0;
  double max_radius_km = 50.0;
};

// Inverse-distance weighting over samples of `factor`; a sample within 1 m of
// the query is returned as is. Missing when nothing lies within the radius.
std::optional<double> interpolate(std::span<const SensorSample> samples, EnvFactor factor, double latitude,
                                  double longitude, const InterpolationOptions& opts = {});

// Samples no older than window_s before `now` (later ones are kept too).
std::vector<SensorSample> fresh_samples(std::span<const SensorSample> samples, std::int64_t now,
                                        std::int64_t window_s = 86400);

// --- risk model ----------------------------------------------------------------

struct RiskFactorSpec {
  double safety_standard = 0.0;
  double rate = 1.0;
  double coefficient = 0.0;  // % per rate step
  // Temperature only.
  double comfort_center = 70.0;
  double comfort_halfwidth = 10.0;
};

struct RiskConfig {
  std::map<EnvFactor, RiskFactorSpec> specs;
  bool stepwise = false;  // floor(excess / rate) instead of excess / rate
  InterpolationOptions interpolation;
  std::int64_t freshness_s = 86400;

  static RiskConfig defaults();
  void validate() const;
};

// INI-style file. Sections [PM2_5] [PM10] [NO2] [TEMPERATURE] take
// safety_standard, rate, coefficient (temperature: comfort_center,
// comfort_halfwidth, rate, coefficient). [model] takes stepwise, power,
// max_radius_km, freshness_hours. Unset keys keep their defaults.
RiskConfig load_risk_config(const std::filesystem::path& path);
RiskConfig parse_risk_config(const std::string& text);

struct RiskAssessment {
  std::map<EnvFactor, double> inputs;
  std::map<EnvFactor, double> contributions;  // % per factor present in inputs
  double total = 0.0;

  double contribution(EnvFactor f) const;
};

// Negative PM/NO₂ concentrations throw std::invalid_argument.
double factor_contribution(EnvFactor f, double value, const RiskFactorSpec& spec, bool stepwise = false);
RiskAssessment risk_increase(const std::map<EnvFactor, double>& values, const RiskConfig& cfg);

// Interpolated risk at one point from samples fresh at `now` (default: the
// newest sample). Missing when no factor could be interpolated.
std::optional<RiskAssessment> assess_location(std::span<const SensorSample> samples, const RiskConfig& cfg,
                                              double latitude, double longitude,
                                              std::optional<std::int64_t> now = std::nullopt);

struct BBox {
  double lat_min = 0.0, lat_max = 0.0, lon_min = 0.0, lon_max = 0.0;
};

struct RiskCell {
  double latitude = 0.0;
  double longitude = 0.0;
  std::optional<RiskAssessment> risk;  // missing when no factor could be interpolated
};

struct RiskMap {
  BBox bbox;
  std::size_t resolution = 0;
  std::int64_t timestamp = 0;
  std::vector<RiskCell> cells;  // row-major, north row first, west to east
};

// `now` defaults to the newest sample timestamp.
RiskMap risk_map(std::span<const SensorSample> samples, const RiskConfig& cfg, const BBox& bbox,
                 std::size_t resolution, std::optional<std::int64_t> now = std::nullopt);

// Header lines then `lat,lon,total_pct,pm25_pct,pm10_pct,no2_pct,temp_pct`
// records with NA for missing values.
std::string render_risk_map(const RiskMap& map);

}  // namespace stain::envrisk

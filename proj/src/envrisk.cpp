#include "stain/envrisk.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"
#include "stain/error.hpp"

namespace stain::envrisk {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_concentration(EnvFactor f) { return f != EnvFactor::temperature; }

// Adds one sample, or counts it as dropped with a warning.
void accept(IngestResult& out, SensorSample s, const std::string& where) {
  if (!s.valid()) {
    ++out.dropped;
    out.warnings.push_back(where + ": dropped " + to_string(s.factor) + " sample of sensor '" + s.sensor_id +
                           "' (invalid coordinates or value)");
    return;
  }
  out.samples.push_back(std::move(s));
}

void drop_record(IngestResult& out, const std::string& where, const std::string& why) {
  ++out.dropped;
  out.warnings.push_back(where + ": dropped record (" + why + ")");
}

bool coords_ok(double lat, double lon) {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90 && lat <= 90 && lon >= -180 && lon <= 180;
}

json parse_json(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw DataError(origin + ": JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

// Numeric JSON value, NaN for null/absent/non-numeric.
double num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    try {
      std::size_t used = 0;
      const std::string s = j.get<std::string>();
      const double v = std::stod(s, &used);
      return used == s.size() ? v : NAN;
    } catch (const std::exception&) {
      return NAN;
    }
  }
  return NAN;
}

std::string id_string(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<std::int64_t>());
  if (j.is_number()) return j.dump();
  return {};
}

void ingest_purpleair(const json& root, const std::string& origin, IngestResult& out) {
  if (!root.is_object() || !root.contains("fields") || !root.contains("data") || !root["fields"].is_array() ||
      !root["data"].is_array()) {
    throw DataError(origin + ": purpleair snapshot needs 'fields' and 'data' arrays");
  }
  const auto& fields = root["fields"];
  auto col = [&](std::initializer_list<const char*> names) -> long {
    for (const char* n : names) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].is_string() && fields[i].get<std::string>() == n) return static_cast<long>(i);
      }
    }
    return -1;
  };
  const long c_id = col({"sensor_index", "sensor_id"}), c_lat = col({"latitude"}), c_lon = col({"longitude"});
  const long c_ts = col({"last_seen", "time_stamp"});
  const std::pair<EnvFactor, long> factors[] = {{EnvFactor::pm2_5, col({"pm2.5", "pm2.5_atm", "pm2.5_cf_1"})},
                                                {EnvFactor::pm10, col({"pm10.0", "pm10.0_atm", "pm10.0_cf_1"})},
                                                {EnvFactor::temperature, col({"temperature"})}};
  if (c_id < 0 || c_lat < 0 || c_lon < 0) {
    throw DataError(origin + ": purpleair 'fields' must include sensor_index, latitude and longitude");
  }
  std::int64_t default_ts = 0;
  for (const char* k : {"data_time_stamp", "time_stamp"}) {
    if (root.contains(k) && root[k].is_number()) default_ts = root[k].get<std::int64_t>();
  }
  const auto& data = root["data"];
  for (std::size_t r = 0; r < data.size(); ++r) {
    const std::string where = origin + ": record " + std::to_string(r + 1);
    const auto& row = data[r];
    if (!row.is_array() || row.size() != fields.size()) {
      throw DataError(where + ": expected an array of " + std::to_string(fields.size()) + " values");
    }
    const double lat = num(row[c_lat]), lon = num(row[c_lon]);
    if (!coords_ok(lat, lon)) {
      drop_record(out, where, "missing or out-of-range coordinates");
      continue;
    }
    std::int64_t ts = default_ts;
    if (c_ts >= 0 && std::isfinite(num(row[c_ts]))) ts = static_cast<std::int64_t>(num(row[c_ts]));
    for (const auto& [factor, c] : factors) {
      if (c < 0 || row[c].is_null()) continue;
      accept(out, {id_string(row[c_id]), lat, lon, factor, num(row[c]), ts}, where);
    }
  }
}

void ingest_waqi_feed(const json& d, const std::string& where, IngestResult& out) {
  if (!d.is_object()) throw DataError(where + ": expected a feed object");
  const json& geo = d.contains("city") && d["city"].is_object() && d["city"].contains("geo") ? d["city"]["geo"] : json();
  if (!geo.is_array() || geo.size() != 2 || !coords_ok(num(geo[0]), num(geo[1]))) {
    drop_record(out, where, "missing or out-of-range coordinates");
    return;
  }
  const double lat = num(geo[0]), lon = num(geo[1]);
  const std::string id = d.contains("idx") ? id_string(d["idx"]) : std::string();
  std::int64_t ts = 0;
  if (d.contains("time") && d["time"].is_object() && d["time"].contains("v")) {
    const double v = num(d["time"]["v"]);
    if (std::isfinite(v)) ts = static_cast<std::int64_t>(v);
  }
  if (!d.contains("iaqi") || !d["iaqi"].is_object()) return;
  const auto& iaqi = d["iaqi"];
  const std::pair<const char*, EnvFactor> keys[] = {
      {"pm25", EnvFactor::pm2_5}, {"pm10", EnvFactor::pm10}, {"no2", EnvFactor::no2}, {"t", EnvFactor::temperature}};
  for (const auto& [key, factor] : keys) {
    if (!iaqi.contains(key)) continue;
    const json& e = iaqi[key];
    double v = e.is_object() && e.contains("v") ? num(e["v"]) : NAN;
    if (factor == EnvFactor::temperature) v = v * 9.0 / 5.0 + 32.0;
    accept(out, {id, lat, lon, factor, v, ts}, where);
  }
}

void ingest_waqi(const json& root, const std::string& origin, IngestResult& out) {
  auto one = [&](const json& item, const std::string& where) {
    if (item.is_object() && item.contains("status") && item.contains("data")) {
      if (item["status"] != "ok") {
        drop_record(out, where, "status is not ok");
        return;
      }
      ingest_waqi_feed(item["data"], where, out);
    } else {
      ingest_waqi_feed(item, where, out);
    }
  };
  if (root.is_array()) {
    for (std::size_t i = 0; i < root.size(); ++i) one(root[i], origin + ": record " + std::to_string(i + 1));
  } else {
    one(root, origin + ": record 1");
  }
}

void ingest_generic(std::string_view text, const std::string& origin, IngestResult& out) {
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const std::string where = origin + ":" + std::to_string(no);
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (no == 1 && !f.empty() && (lower(f[0]) == "id" || lower(f[0]) == "sensor_id")) continue;
    if (f.size() != 6) throw DataError(where + ": expected 6 fields 'id,lat,lon,FACTOR,value,ts', got " + std::to_string(f.size()));
    EnvFactor factor;
    try {
      factor = parse_factor(f[3]);
    } catch (const std::invalid_argument& e) {
      throw DataError(where + ": " + e.what());
    }
    auto parse = [&](const std::string& s, const char* what) -> double {
      if (s.empty()) return NAN;
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        throw DataError(where + ": cannot parse " + what + " '" + s + "'");
      }
      if (used != s.size()) throw DataError(where + ": cannot parse " + what + " '" + s + "'");
      return v;
    };
    const double lat = parse(f[1], "latitude"), lon = parse(f[2], "longitude"), value = parse(f[4], "value");
    const double ts = parse(f[5], "timestamp");
    if (!std::isfinite(ts)) throw DataError(where + ": timestamp must be a number");
    if (!coords_ok(lat, lon)) {
      drop_record(out, where, "missing or out-of-range coordinates");
      continue;
    }
    accept(out, {f[0], lat, lon, factor, value, static_cast<std::int64_t>(ts)}, where);
  }
}

double read_double(const boost::property_tree::ptree& pt, const std::string& key, double fallback) {
  const auto v = pt.get_optional<std::string>(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const std::string s = trim(*v);
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return d;
  } catch (const std::exception&) {
    throw DataError("risk config: '" + key + "' is not a number: '" + *v + "'");
  }
}

}  // namespace

std::string to_string(EnvFactor f) {
  switch (f) {
    case EnvFactor::pm2_5: return "PM2_5";
    case EnvFactor::pm10: return "PM10";
    case EnvFactor::no2: return "NO2";
    case EnvFactor::temperature: return "TEMPERATURE";
  }
  return "?";
}

EnvFactor parse_factor(std::string_view s) {
  const std::string l = lower(trim(s));
  if (l == "pm2_5" || l == "pm2.5" || l == "pm25") return EnvFactor::pm2_5;
  if (l == "pm10" || l == "pm10.0") return EnvFactor::pm10;
  if (l == "no2") return EnvFactor::no2;
  if (l == "temperature" || l == "temp" || l == "t") return EnvFactor::temperature;
  throw std::invalid_argument("unknown environmental factor '" + std::string(s) +
                              "' (expected PM2_5|PM10|NO2|TEMPERATURE)");
}

bool SensorSample::valid() const {
  return coords_ok(latitude, longitude) && std::isfinite(value) && (!is_concentration(factor) || value >= 0.0);
}

SourceKind parse_source_kind(std::string_view s) {
  const std::string l = lower(s);
  if (l == "purpleair") return SourceKind::purpleair;
  if (l == "waqi") return SourceKind::waqi;
  if (l == "generic" || l == "csv") return SourceKind::generic;
  throw std::invalid_argument("unknown source kind '" + std::string(s) + "' (expected purpleair|waqi|generic)");
}

IngestResult ingest_text(std::string_view text, SourceKind kind, const std::string& origin) {
  IngestResult out;
  switch (kind) {
    case SourceKind::purpleair: ingest_purpleair(parse_json(text, origin), origin, out); break;
    case SourceKind::waqi: ingest_waqi(parse_json(text, origin), origin, out); break;
    case SourceKind::generic: ingest_generic(text, origin, out); break;
  }
  return out;
}

IngestResult ingest_snapshot(const std::filesystem::path& path, SourceKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open snapshot " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ingest_text(ss.str(), kind, path.string());
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad, dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

std::optional<double> interpolate(std::span<const SensorSample> samples, EnvFactor factor, double latitude,
                                  double longitude, const InterpolationOptions& opts) {
  double num_sum = 0.0, den = 0.0;
  bool any = false;
  for (const auto& s : samples) {
    if (s.factor != factor) continue;
    const double d = haversine_km(latitude, longitude, s.latitude, s.longitude);
    if (d <= 0.001) return s.value;
    if (d > opts.max_radius_km) continue;
    const double w = 1.0 / std::pow(d, opts.power);
    num_sum += w * s.value;
    den += w;
    any = true;
  }
  if (!any) return std::nullopt;
  return num_sum / den;
}

std::vector<SensorSample> fresh_samples(std::span<const SensorSample> samples, std::int64_t now, std::int64_t window_s) {
  std::vector<SensorSample> out;
  for (const auto& s : samples) {
    if (now - s.timestamp <= window_s) out.push_back(s);
  }
  return out;
}

RiskConfig RiskConfig::defaults() {
  RiskConfig c;
  c.specs[EnvFactor::no2] = {40.0, 10.0, 2.0};
  c.specs[EnvFactor::pm2_5] = {12.0, 10.0, 1.5};
  c.specs[EnvFactor::pm10] = {50.0, 10.0, 1.0};
  c.specs[EnvFactor::temperature] = {0.0, 10.0, 1.0, 70.0, 10.0};
  return c;
}

void RiskConfig::validate() const {
  for (const auto& [f, s] : specs) {
    if (!(s.rate > 0.0)) throw std::invalid_argument("risk config: " + to_string(f) + ".rate must be > 0");
    if (!(s.coefficient >= 0.0)) throw std::invalid_argument("risk config: " + to_string(f) + ".coefficient must be >= 0");
    if (!(s.comfort_halfwidth >= 0.0)) {
      throw std::invalid_argument("risk config: " + to_string(f) + ".comfort_halfwidth must be >= 0");
    }
  }
  if (!(interpolation.power > 0.0)) throw std::invalid_argument("risk config: power must be > 0");
  if (!(interpolation.max_radius_km > 0.0)) throw std::invalid_argument("risk config: max_radius_km must be > 0");
  if (freshness_s < 0) throw std::invalid_argument("risk config: freshness must be >= 0");
}

RiskConfig parse_risk_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError("risk config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  RiskConfig c = RiskConfig::defaults();
  for (const auto& [section, body] : tree) {
    if (lower(section) == "model") {
      for (const auto& [key, _] : body) {
        if (key != "stepwise" && key != "power" && key != "max_radius_km" && key != "freshness_hours") {
          throw DataError("risk config: unknown key [model] " + key);
        }
      }
      if (auto v = body.get_optional<std::string>("stepwise")) {
        const std::string l = lower(trim(*v));
        if (l != "true" && l != "false" && l != "1" && l != "0") throw DataError("risk config: stepwise must be true|false");
        c.stepwise = l == "true" || l == "1";
      }
      c.interpolation.power = read_double(body, "power", c.interpolation.power);
      c.interpolation.max_radius_km = read_double(body, "max_radius_km", c.interpolation.max_radius_km);
      c.freshness_s = static_cast<std::int64_t>(std::llround(read_double(body, "freshness_hours", c.freshness_s / 3600.0) * 3600.0));
      continue;
    }
    EnvFactor f;
    try {
      f = parse_factor(section);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("risk config: section [") + section + "]: " + e.what());
    }
    RiskFactorSpec& s = c.specs[f];
    for (const auto& [key, _] : body) {
      if (key != "safety_standard" && key != "rate" && key != "coefficient" && key != "comfort_center" &&
          key != "comfort_halfwidth") {
        throw DataError("risk config: unknown key [" + section + "] " + key);
      }
    }
    s.safety_standard = read_double(body, "safety_standard", s.safety_standard);
    s.rate = read_double(body, "rate", s.rate);
    s.coefficient = read_double(body, "coefficient", s.coefficient);
    s.comfort_center = read_double(body, "comfort_center", s.comfort_center);
    s.comfort_halfwidth = read_double(body, "comfort_halfwidth", s.comfort_halfwidth);
  }
  c.validate();
  return c;
}

RiskConfig load_risk_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open risk config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_risk_config(ss.str());
}

double RiskAssessment::contribution(EnvFactor f) const {
  const auto it = contributions.find(f);
  return it == contributions.end() ? 0.0 : it->second;
}

double factor_contribution(EnvFactor f, double value, const RiskFactorSpec& spec, bool stepwise) {
  if (!std::isfinite(value)) throw std::invalid_argument(to_string(f) + " value is not finite");
  double excess;
  if (f == EnvFactor::temperature) {
    excess = std::max(0.0, std::abs(value - spec.comfort_center) - spec.comfort_halfwidth);
  } else {
    if (value < 0.0) throw std::invalid_argument("negative " + to_string(f) + " concentration");
    excess = std::max(0.0, value - spec.safety_standard);
  }
  double steps = excess / spec.rate;
  if (stepwise) steps = std::floor(steps);
  return spec.coefficient * steps;
}

RiskAssessment risk_increase(const std::map<EnvFactor, double>& values, const RiskConfig& cfg) {
  RiskAssessment r;
  r.inputs = values;
  for (const auto& [f, v] : values) {
    const auto it = cfg.specs.find(f);
    if (it == cfg.specs.end()) throw std::invalid_argument("no risk spec for factor " + to_string(f));
    const double c = factor_contribution(f, v, it->second, cfg.stepwise);
    r.contributions[f] = c;
    r.total += c;
  }
  return r;
}

namespace {

std::optional<RiskAssessment> assess_fresh(std::span<const SensorSample> fresh, const RiskConfig& cfg, double latitude,
                                           double longitude) {
  std::map<EnvFactor, double> values;
  for (EnvFactor f : kAllFactors) {
    if (auto v = interpolate(fresh, f, latitude, longitude, cfg.interpolation)) values[f] = *v;
  }
  if (values.empty()) return std::nullopt;
  return risk_increase(values, cfg);
}

std::int64_t newest(std::span<const SensorSample> samples) {
  std::int64_t t = 0;
  for (const auto& s : samples) t = std::max(t, s.timestamp);
  return t;
}

}  // namespace

std::optional<RiskAssessment> assess_location(std::span<const SensorSample> samples, const RiskConfig& cfg,
                                              double latitude, double longitude, std::optional<std::int64_t> now) {
  const auto fresh = fresh_samples(samples, now ? *now : newest(samples), cfg.freshness_s);
  return assess_fresh(fresh, cfg, latitude, longitude);
}

RiskMap risk_map(std::span<const SensorSample> samples, const RiskConfig& cfg, const BBox& bbox,
                 std::size_t resolution, std::optional<std::int64_t> now) {
  if (!(bbox.lat_min < bbox.lat_max) || !(bbox.lon_min < bbox.lon_max)) {
    throw std::invalid_argument("risk map bbox is empty (need lat_min < lat_max and lon_min < lon_max)");
  }
  if (resolution < 1) throw std::invalid_argument("risk map resolution must be >= 1");
  RiskMap map{bbox, resolution, 0, {}};
  map.timestamp = now ? *now : newest(samples);
  const auto fresh = fresh_samples(samples, map.timestamp, cfg.freshness_s);
  const double dlat = (bbox.lat_max - bbox.lat_min) / static_cast<double>(resolution);
  const double dlon = (bbox.lon_max - bbox.lon_min) / static_cast<double>(resolution);
  for (std::size_t row = 0; row < resolution; ++row) {
    for (std::size_t col = 0; col < resolution; ++col) {
      RiskCell cell;
      cell.latitude = bbox.lat_max - (static_cast<double>(row) + 0.5) * dlat;
      cell.longitude = bbox.lon_min + (static_cast<double>(col) + 0.5) * dlon;
      cell.risk = assess_fresh(fresh, cfg, cell.latitude, cell.longitude);
      map.cells.push_back(std::move(cell));
    }
  }
  return map;
}

std::string render_risk_map(const RiskMap& map) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "# bbox lat_min=%.6f lat_max=%.6f lon_min=%.6f lon_max=%.6f\n", map.bbox.lat_min,
                map.bbox.lat_max, map.bbox.lon_min, map.bbox.lon_max);
  out << buf;
  out << "# resolution=" << map.resolution << " rows=north_to_south\n";
  out << "# timestamp=" << map.timestamp << '\n';
  out << "lat,lon,total_pct,pm25_pct,pm10_pct,no2_pct,temp_pct\n";
  auto field = [](const std::optional<RiskAssessment>& r, std::optional<EnvFactor> f) -> std::string {
    if (!r) return "NA";
    if (f && !r->contributions.count(*f)) return "NA";
    char b[32];
    std::snprintf(b, sizeof b, "%.6f", f ? r->contribution(*f) : r->total);
    return b;
  };
  for (const auto& c : map.cells) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", c.latitude, c.longitude);
    out << buf << ',' << field(c.risk, std::nullopt);
    for (EnvFactor f : kAllFactors) out << ',' << field(c.risk, f);
    out << '\n';
  }
  return out.str();
}

}  // namespace stain::envrisk

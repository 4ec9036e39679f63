#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "stain/error.hpp"
#include "stain/forecast.hpp"
#include "stain/rng.hpp"

using namespace stain::forecast;

namespace {

// Series whose hourly frequencies are given, one bucket per day.
CoughTimeSeries daily(const std::vector<double>& per_hour) {
  CoughTimeSeries s;
  s.bucket_duration_s = 86400.0;
  for (std::size_t i = 0; i < per_hour.size(); ++i) {
    s.buckets.push_back({1.6e9 + 86400.0 * static_cast<double>(i), static_cast<std::size_t>(per_hour[i] * 24.0)});
  }
  return s;
}

}  // namespace

TEST_CASE("aggregate") {
  auto s = aggregate({{10, 0.9}, {600, 0.8}, {3000, 0.7}}, 3600);
  REQUIRE(s.buckets.size() == 1);
  CHECK(s.buckets[0].count == 3);
  CHECK(s.frequency(0) == 3.0);

  s = aggregate({{7200, 0.9}, {0, 0.9}}, 3600);
  REQUIRE(s.buckets.size() == 3);
  CHECK(s.buckets[0].count == 1);
  CHECK(s.buckets[1].count == 0);
  CHECK(s.buckets[2].count == 1);
  CHECK(s.buckets[1].start == 3600.0);

  CHECK(aggregate({}, 3600).empty());
  CHECK_THROWS_AS(aggregate({{0, 1}}, 0.0), std::invalid_argument);

  SUBCASE("uniform spread") {
    stain::SplitMix64 rng(4);
    std::vector<CoughEvent> ev;
    ev.push_back({0.0, 1.0});
    for (int i = 0; i < 998; ++i) ev.push_back({rng.uniform(0.0, 36000.0), 1.0});
    ev.push_back({35999.0, 1.0});
    s = aggregate(ev, 3600);
    REQUIRE(s.buckets.size() == 10);
    std::size_t total = 0;
    for (const auto& b : s.buckets) {
      total += b.count;
      // Binomial(1000, 0.1): sd = 9.5; 4 sd bound.
      CHECK(std::abs(static_cast<double>(b.count) - 100.0) < 38.0);
    }
    CHECK(total == 1000);
  }
}

TEST_CASE("fit_trend") {
  TrendModel t = fit_trend(daily({5, 5, 5, 5}));
  CHECK(t.slope == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.intercept == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(t.rms_residual == doctest::Approx(0.0));

  t = fit_trend(daily({1, 2, 3, 4}));
  CHECK(std::abs(t.slope - 1.0) <= 1e-12);
  CHECK(std::abs(t.intercept - 1.0) <= 1e-12);
  CHECK(t.rms_residual <= 1e-12);
  CHECK(t.end_day == 3.0);

  SUBCASE("collinear data exact") {
    stain::SplitMix64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      // Hourly buckets with counts c + d*i; the line in coughs/hour per day
      // has intercept c and slope 24 d.
      const auto c = static_cast<std::size_t>(rng.uniform_int(0, 40));
      const auto d = static_cast<std::size_t>(rng.uniform_int(0, 5));
      const auto n = static_cast<std::size_t>(rng.uniform_int(2, 30));
      CoughTimeSeries s;
      s.bucket_duration_s = 3600.0;
      for (std::size_t i = 0; i < n; ++i) s.buckets.push_back({1.7e9 + 3600.0 * static_cast<double>(i), c + d * i});
      t = fit_trend(s);
      CHECK(std::abs(t.slope - 24.0 * static_cast<double>(d)) <= 1e-12 * std::max(1.0, 24.0 * static_cast<double>(d)));
      CHECK(std::abs(t.intercept - static_cast<double>(c)) <= 1e-12 * std::max(1.0, static_cast<double>(c)));
    }
  }

  SUBCASE("constant shift moves only the intercept") {
    const TrendModel a = fit_trend(daily({3, 1, 4, 1, 5}));
    const TrendModel b = fit_trend(daily({5, 3, 6, 3, 7}));
    CHECK(b.slope == doctest::Approx(a.slope).epsilon(1e-12));
    CHECK(b.intercept == doctest::Approx(a.intercept + 2.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(fit_trend(daily({3})), std::invalid_argument);
}

TEST_CASE("make_forecast") {
  TrendModel flat;
  flat.intercept = 7.0;
  flat.end_day = 3.0;
  Forecast f = make_forecast(flat, 0.0, 5);
  REQUIRE(f.days.size() == 5);
  for (const auto& d : f.days) CHECK(d.combined_score == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(f.days[0].day == 4.0);
  CHECK_FALSE(f.alert);
  CHECK(summary_line(f) == "no alert within horizon");

  SUBCASE("multiplier arithmetic") {
    TrendModel t;
    t.intercept = 10.0;
    f = make_forecast(t, 5.75, 1);
    CHECK(f.days[0].severity == 1.0);
    CHECK(f.days[0].combined_score == doctest::Approx(1.0575).epsilon(1e-15));
    CHECK(combined_score(10.0, 5.75, 10.0) == doctest::Approx(1.0575).epsilon(1e-15));
  }

  SUBCASE("negative trend clamps at zero") {
    TrendModel t;
    t.intercept = 8.0;
    t.slope = -3.0;
    f = make_forecast(t, 50.0, 7);
    CHECK(f.days.back().predicted_frequency == 0.0);
    CHECK(f.days.back().combined_score == 0.0);
    CHECK_FALSE(f.alert);
  }

  SUBCASE("alert day and summary") {
    TrendModel t;
    t.intercept = 10.0;
    t.slope = 2.0;
    f = make_forecast(t, 0.0, 5);  // scores 1.2 1.4 1.6 ...
    CHECK(f.alert);
    CHECK(f.alert_day == 3);
    CHECK(f.alert_score == doctest::Approx(1.6));
    CHECK(summary_line(f) == "ALERT in 3 days: score 1.6 ≥ 1.5");
    const std::string rec = render_record(f);
    CHECK(rec.find("\"alert\":true") != std::string::npos);
    CHECK(rec.find("\"env_risk_pct\":0.0") != std::string::npos);
    CHECK(rec.find("\"alert_threshold\":1.5") != std::string::npos);
  }

  CHECK_THROWS_AS(make_forecast(flat, 0.0, 0), std::invalid_argument);
  ForecastConfig bad;
  bad.reference_frequency = 0.0;
  CHECK_THROWS_AS(make_forecast(flat, 0.0, 3, bad), std::invalid_argument);
}

TEST_CASE("alert monotonicity and scale invariance") {
  stain::SplitMix64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    TrendModel t;
    t.intercept = rng.uniform(0.0, 20.0);
    t.slope = rng.uniform(-2.0, 2.0);
    t.end_day = rng.uniform(0.0, 10.0);
    bool prev_alert = false;
    double prev_max = -1.0;
    for (double env = 0.0; env <= 200.0; env += 5.0) {
      const Forecast f = make_forecast(t, env, 7);
      double mx = 0.0;
      for (const auto& d : f.days) mx = std::max(mx, d.combined_score);
      CHECK(mx >= prev_max);
      CHECK((f.alert || !prev_alert));
      CHECK(f.alert == (mx >= f.config.alert_threshold));
      prev_alert = f.alert;
      prev_max = mx;

      const double k = rng.uniform(0.1, 10.0);
      TrendModel scaled = t;
      scaled.intercept *= k;
      scaled.slope *= k;
      ForecastConfig cfg;
      cfg.reference_frequency *= k;
      // Exact ties at the threshold could flip under rounding; skip them.
      if (std::abs(mx - 1.5) > 1e-9) CHECK(make_forecast(scaled, env, 7, cfg).alert == f.alert);
    }
  }
}

TEST_CASE("read_events") {
  const auto path = std::filesystem::temp_directory_path() / "stain_events_test.txt";
  {
    std::ofstream out(path);
    out << "# detections\n12.5,0.91\n\n30 0.7\n45\n";
  }
  auto ev = read_events(path.string());
  REQUIRE(ev.size() == 3);
  CHECK(ev[0].timestamp == 12.5);
  CHECK(ev[0].probability == 0.91);
  CHECK(ev[1].probability == 0.7);
  CHECK(ev[2].probability == 1.0);
  {
    std::ofstream out(path);
    out << "1.0\nabc\n";
  }
  CHECK_THROWS_WITH_AS(read_events(path.string()), doctest::Contains(":2:"), stain::DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_events(path.string()), stain::DataError);
}

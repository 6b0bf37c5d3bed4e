#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "aqnet/pipeline.hpp"
#include "doctest.h"

using namespace aqnet;
using namespace aqnet::pipeline;

namespace {

constexpr Timestamp kT0 = 1636059600;

TimeSeries make_series(const std::vector<double>& v, Timestamp start = kT0, Timestamp step = 30) {
    TimeSeries s;
    s.device_id = 1;
    for (std::size_t i = 0; i < v.size(); ++i) s.points.push_back({start + static_cast<Timestamp>(i) * step, v[i]});
    return s;
}

// Type-7 quantile straight from the definition.
double type7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("iqr of one to eight") {
    const std::vector<double> v{8, 3, 1, 7, 2, 6, 4, 5};
    const IqrBounds b = iqr_bounds(v);
    CHECK(b.q1 == 2.75);
    CHECK(b.q3 == 6.25);
    CHECK(b.iqr == 3.5);
    CHECK(b.lower == -2.5);
    CHECK(b.upper == 11.5);
}

TEST_CASE("iqr matches the type 7 definition") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 4 + rng() % 47;
        std::vector<double> v(n);
        std::normal_distribution<double> g(100.0, 40.0);
        for (auto& x : v) x = (rng() % 4 == 0) ? std::round(g(rng)) : g(rng);
        const IqrBounds b = iqr_bounds(v);
        const double q1 = type7(v, 0.25), q3 = type7(v, 0.75);
        CHECK(std::abs(b.q1 - q1) <= 1e-12 * std::max(1.0, std::abs(q1)));
        CHECK(std::abs(b.q3 - q3) <= 1e-12 * std::max(1.0, std::abs(q3)));
        CHECK(b.lower <= b.q1);
        CHECK(b.upper >= b.q3);
    }
    CHECK_THROWS_AS(iqr_bounds(std::vector<double>{1, 2, 3}), InsufficientData);
}

TEST_CASE("quantile edge cases") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    CHECK(quantile_sorted(v, 0.0) == 1.0);
    CHECK(quantile_sorted(v, 1.0) == 5.0);
    CHECK(quantile_sorted(v, 0.5) == 3.0);
}

TEST_CASE("outlier removal is invariant to shift and scale") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(50.0, 10.0);
    std::vector<double> v(200);
    for (auto& x : v) x = g(rng);
    v[17] = 400.0;
    v[90] = -200.0;
    const TimeSeries s = make_series(v);
    const Masked a = remove_outliers(s, iqr_bounds(v));
    std::vector<double> w(v);
    for (auto& x : w) x = 3.0 * x + 11.0;
    const Masked b = remove_outliers(make_series(w), iqr_bounds(w));
    CHECK(a.removed == b.removed);
    CHECK(a.removed[17]);
    CHECK(a.removed[90]);
}

TEST_CASE("prior mask is kept") {
    const TimeSeries s = make_series({1, 2, 3, 4, 5, 6, 7, 8});
    Mask prior(8, false);
    prior[3] = true;
    const Masked m = remove_outliers(s, iqr_bounds(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}), prior);
    CHECK(m.removed[3]);
    CHECK(m.removed_count() == 1);
}

TEST_CASE("monthly bounds are computed per month") {
    // October around 10, November around 100. 60 is normal for neither.
    std::vector<TimePoint> pts;
    const Timestamp oct = parse_timestamp("2021-10-20");
    const Timestamp nov = parse_timestamp("2021-11-02");
    for (int i = 0; i < 50; ++i) pts.push_back({oct + i * 3600, 10.0 + (i % 5)});
    pts.push_back({oct + 50 * 3600, 60.0});
    for (int i = 0; i < 50; ++i) pts.push_back({nov + i * 3600, 100.0 + (i % 5)});
    pts.push_back({nov + 50 * 3600, 60.0});
    TimeSeries s;
    s.points = pts;
    const Masked m = remove_outliers_monthly(s);
    CHECK(m.removed[50]);
    CHECK(m.removed[101]);
    CHECK(m.removed_count() == 2);
    // A single global bound would keep both.
    std::vector<double> all;
    for (const auto& p : pts) all.push_back(p.v);
    const IqrBounds g = iqr_bounds(all);
    CHECK(60.0 >= g.lower);
    CHECK(60.0 <= g.upper);
}

TEST_CASE("unreliable points") {
    const TimeSeries v = make_series({10, -1, 20, 1000, 30});
    const TimeSeries rh = make_series({50, 50, 81, 50, 80});
    const Masked m = filter_unreliable(v, rh);
    CHECK(m.removed == Mask{false, true, true, true, false});
    const TimeSeries other = make_series({50, 50, 50, 50, 50}, kT0 + 1);
    CHECK_THROWS_AS(filter_unreliable(v, other), DomainError);
}

TEST_CASE("gap interpolation") {
    const TimeSeries s = make_series({0, 99, 99, 30, 40, 99});
    const Mask removed{true, false, true, false, false, true};
    // Interior gap between 99 at index 1 and 30 at index 3; leading/trailing take the nearest value.
    const TimeSeries out = interpolate_gaps(s, removed);
    CHECK(out.points[0].v == 99.0);
    CHECK(out.points[2].v == doctest::Approx((99.0 + 30.0) / 2));
    CHECK(out.points[5].v == 40.0);
    CHECK(out.points[1].v == 99.0);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(out.points[i].t == s.points[i].t);
    CHECK_THROWS_AS(interpolate_gaps(s, Mask(6, true)), InsufficientData);
}

TEST_CASE("interpolation uses time, not index") {
    TimeSeries s;
    s.points = {{0, 0.0}, {30, 5.0}, {90, 0.0}, {120, 60.0}};
    const TimeSeries out = interpolate_gaps(s, Mask{false, false, true, false});
    CHECK(out.points[2].v == doctest::Approx(5.0 + 55.0 * 60.0 / 90.0));
}

TEST_CASE("clean keeps the grid and removes a spike") {
    std::vector<double> v(400, 80.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += static_cast<double>(i % 7);
    v[200] = 900.0;
    const TimeSeries s = make_series(v);
    const TimeSeries rh = make_series(std::vector<double>(400, 40.0));
    CleanReport rep;
    const TimeSeries out = clean(s, rh, &rep);
    CHECK(out.size() == s.size());
    CHECK(rep.outliers == 1);
    CHECK(rep.unreliable == 0);
    CHECK(out.points[200].v == doctest::Approx((v[199] + v[201]) / 2));
}

TEST_CASE("calibration recovers an exact line") {
    std::vector<double> truth, raw;
    for (int i = 0; i < 1000; ++i) {
        truth.push_back(50.0 + 0.4 * i);
        raw.push_back(0.8 * truth.back() + 12.0);
    }
    const CalibrationModel m = fit_calibration(make_series(raw), make_series(truth), Pollutant::PM10);
    CHECK(std::abs(m.m - 1.25) <= 1e-9 * 1.25);
    CHECK(std::abs(m.c + 15.0) <= 1e-9 * 15.0);
    CHECK(m.n_points == 1000);
    CHECK(m.season == Season::Winter);
    CHECK(m.fit_rmse < 1e-9);
}

TEST_CASE("calibration standard errors cover the truth") {
    std::mt19937_64 rng(43);
    std::normal_distribution<double> noise(0.0, 3.0);
    std::uniform_real_distribution<double> level(20.0, 400.0);
    int inside_m = 0, inside_c = 0;
    const int trials = 200;
    for (int k = 0; k < trials; ++k) {
        std::vector<double> ref, raw;
        for (int i = 0; i < 300; ++i) {
            raw.push_back(level(rng));
            ref.push_back(1.25 * raw.back() - 15.0 + noise(rng));
        }
        const CalibrationModel m = fit_calibration(make_series(raw), make_series(ref), Pollutant::PM10);
        inside_m += std::abs(m.m - 1.25) <= 2.0 * m.se_m;
        inside_c += std::abs(m.c + 15.0) <= 2.0 * m.se_c;
    }
    // About 95 % expected.
    CHECK(inside_m >= 180);
    CHECK(inside_c >= 180);
}

TEST_CASE("calibration uses shared timestamps only") {
    const TimeSeries raw = make_series({10, 20, 30, 40}, kT0);
    const TimeSeries ref = make_series({25, 35, 45, 1000}, kT0 + 30);  // overlaps raw at 20, 30, 40
    const CalibrationModel m = fit_calibration(raw, ref, Pollutant::PM25);
    CHECK(m.n_points == 3);
    CHECK(m.m == doctest::Approx(1.0));
    CHECK(m.c == doctest::Approx(5.0));
    CHECK_THROWS_AS(fit_calibration(make_series({1}), make_series({1}), Pollutant::PM10), InsufficientData);
    CHECK_THROWS_AS(fit_calibration(make_series({5, 5, 5}), make_series({1, 2, 3}), Pollutant::PM10), DegenerateFit);
}

TEST_CASE("applying calibration") {
    CalibrationModel m;
    m.season = Season::Winter;
    m.m = 2.0;
    m.c = -50.0;
    const TimeSeries out = apply_calibration(make_series({10, 30, 100}), m);
    CHECK(out.points[0].v == 0.0);  // clamped
    CHECK(out.points[1].v == 10.0);
    CHECK(out.points[2].v == 150.0);

    const TimeSeries summer = make_series({10}, parse_timestamp("2022-04-01"));
    CHECK_THROWS_AS(apply_calibration(summer, m), ConfigError);
    const std::vector<CalibrationModel> models{m};
    CHECK_THROWS_AS(apply_calibration(summer, models, Pollutant::PM10), ConfigError);
    CHECK_THROWS_AS(apply_calibration(make_series({10}), models, Pollutant::PM25), ConfigError);
}

TEST_CASE("models csv round trip") {
    std::vector<CalibrationModel> ms(2);
    ms[0] = {3, Season::Winter, Pollutant::PM10, 1.2345678901234, -14.2, 3.1, 20160, 0.001, 0.2};
    ms[1] = {3, Season::Summer, Pollutant::PM25, 0.9, 2.0, 1.0, 100, 0.01, 0.3};
    std::stringstream ss;
    write_models_csv(ms, ss);
    const auto back = read_models_csv(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].m == ms[0].m);
    CHECK(back[0].season == Season::Winter);
    CHECK(back[1].pollutant == Pollutant::PM25);
    CHECK(back[1].n_points == 100);
}

TEST_CASE("hourly means") {
    std::vector<double> v;
    for (int i = 0; i < 240; ++i) v.push_back(i < 120 ? 10.0 : 20.0);
    TimeSeries s = make_series(v);
    s.points.erase(s.points.begin() + 130, s.points.begin() + 140);
    const TimeSeries h = hourly_means(s);
    REQUIRE(h.size() == 2);
    CHECK(h.points[0].t == kT0);
    CHECK(h.points[0].v == 10.0);
    CHECK(h.points[1].v == 20.0);
}

TEST_CASE("seasonal statistics use hourly means") {
    TimeSeries s;
    const Timestamp w = parse_timestamp("2022-01-10");
    const Timestamp m = parse_timestamp("2022-08-10");
    for (int h = 0; h < 4; ++h)
        for (int k = 0; k < 120; ++k) s.points.push_back({w + h * 3600 + k * 30, 100.0 + 10.0 * h});
    for (int h = 0; h < 2; ++h)
        for (int k = 0; k < 120; ++k) s.points.push_back({m + h * 3600 + k * 30, 40.0 + 2.0 * h});
    const auto st = seasonal_stats(s);
    REQUIRE(st.size() == 2);
    CHECK(st.at(Season::Winter).mean == doctest::Approx(115.0));
    CHECK(st.at(Season::Winter).variance == doctest::Approx(125.0));  // population
    CHECK(st.at(Season::Winter).n_hours == 4);
    CHECK(st.at(Season::Monsoon).mean == doctest::Approx(41.0));
    CHECK(st.count(Season::Summer) == 0);
}

TEST_CASE("staged csv") {
    std::vector<StagedRow> rows{{kT0, 10.5, 5.25, 20, 40}, {kT0 + 30, 11, 6, 21, 41}};
    std::stringstream ss;
    write_staged_csv(rows, "clean", ss);
    const std::string text = ss.str();
    CHECK(text.rfind("created_at,pm10,pm25,temp,rh,stage\n", 0) == 0);
    CHECK(text.find(",clean\n") != std::string::npos);
    const auto back = read_staged_csv(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].pm10 == 10.5);
    CHECK(back[1].created_at == kT0 + 30);

    std::istringstream bad("created_at,pm10,pm25,temp,humidity\n");
    CHECK_THROWS_AS(read_staged_csv(bad), SchemaError);
}

TEST_CASE("clean rows shares the humidity mask") {
    std::vector<StagedRow> rows;
    for (int i = 0; i < 100; ++i) rows.push_back({kT0 + 30 * i, 50.0 + i % 3, 25.0 + i % 3, 20.0, 40.0});
    rows[40].rh = 95.0;
    rows[40].pm10 = 500.0;
    rows[40].pm25 = 300.0;
    CleanReport rep;
    const auto out = clean_rows(rows, &rep);
    REQUIRE(out.size() == rows.size());
    CHECK(out[40].pm10 < 60.0);
    CHECK(out[40].pm25 < 30.0);
    CHECK(out[40].rh == 95.0);  // passes through
    CHECK(rep.unreliable == 2);
}

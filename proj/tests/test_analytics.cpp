#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "aqnet/analytics.hpp"
#include "aqnet/kernels.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace aqnet;
using namespace aqnet::analytics;

namespace {

const GeoPoint kCenter{28.6139, 77.2090};

// Pair-counting tau-b.
double tau_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double s = 0, tx = 0, ty = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            s += static_cast<double>((dx > 0) - (dx < 0)) * static_cast<double>((dy > 0) - (dy < 0));
            tx += dx == 0;
            ty += dy == 0;
        }
    }
    const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    return s / std::sqrt((n0 - tx) * (n0 - ty));
}

// Per-cell IDW straight from the definition.
double idw_oracle(const std::vector<Sample>& samples, GeoPoint t, double p) {
    double num = 0, den = 0;
    for (const auto& s : samples) {
        const double d = haversine(s.location, t);
        if (d < 0.5) return s.value;
        num += s.value / std::pow(d, p);
        den += 1.0 / std::pow(d, p);
    }
    return num / den;
}

// Knee by a fine scan of the exact slope, no rounding.
double knee_oracle(double a, double b, double c, double d, double thr) {
    auto slope = [&](double x) { return std::abs(a * b * std::exp(b * x) + c * d * std::exp(d * x)); };
    const double target = thr * slope(0.0);
    for (double x = 0.0; x < 1e6; x += 0.01)
        if (slope(x) <= target) return x;
    return -1;
}

std::vector<Sample> random_samples(std::mt19937_64& rng, const BBox& box, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0), v(20.0, 400.0);
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        out.push_back({{box.south_west.lat + u(rng) * (box.north_east.lat - box.south_west.lat),
                        box.south_west.lon + u(rng) * (box.north_east.lon - box.south_west.lon)},
                       v(rng)});
    }
    return out;
}

}  // namespace

TEST_CASE("idw hand example") {
    // Distances 1:2:4 from the target give weights 16:4:1 for p = 2.
    const GeoPoint t = kCenter;
    const std::vector<Sample> s{{from_local(t, {100, 0}), 10.0}, {from_local(t, {0, 200}), 20.0},
                                {from_local(t, {-400, 0}), 40.0}};
    CHECK(idw(s, t, 2.0) == doctest::Approx((16 * 10.0 + 4 * 20.0 + 1 * 40.0) / 21.0).epsilon(1e-5));
    CHECK(idw(s, s[1].location) == 20.0);
    CHECK(idw(s, from_local(s[2].location, {0.3, 0})) == 40.0);
    CHECK_THROWS_AS(idw({}, t), DomainError);
    CHECK_THROWS_AS(idw(s, t, 0.0), DomainError);
}

TEST_CASE("idw grid equals per-cell evaluation and stays in range") {
    std::mt19937_64 rng(51);
    const BBox box = BBox::around(kCenter, 2800, 2800);
    for (int trial = 0; trial < 10; ++trial) {
        const auto samples = random_samples(rng, box, 3 + static_cast<int>(rng() % 30));
        const GridSpec spec{box, 25, 17};
        const double p = 1.0 + static_cast<double>(trial % 3);
        const Grid g = idw_grid(samples, spec, p);
        double lo = 1e300, hi = -1e300;
        for (const auto& s : samples) lo = std::min(lo, s.value), hi = std::max(hi, s.value);
        for (int iy = 0; iy < spec.ny; ++iy) {
            for (int ix = 0; ix < spec.nx; ++ix) {
                CHECK(g.at(ix, iy) == idw(samples, spec.cell_center(ix, iy), p));
                CHECK(g.at(ix, iy) == doctest::Approx(idw_oracle(samples, spec.cell_center(ix, iy), p)).epsilon(1e-12));
                CHECK(g.at(ix, iy) >= lo);
                CHECK(g.at(ix, iy) <= hi);
            }
        }
    }
}

TEST_CASE("grid cell with a device takes its value") {
    const BBox box = BBox::around(kCenter, 2000, 2000);
    const GridSpec spec{box, 10, 10};
    const std::vector<Sample> s{{spec.cell_center(3, 4), 123.0}, {spec.cell_center(8, 1), 7.0}};
    const Grid g = idw_grid(s, spec);
    CHECK(g.at(3, 4) == 123.0);
    CHECK(g.at(8, 1) == 7.0);
}

TEST_CASE("grid geometry") {
    const BBox box = BBox::around(kCenter, 2000, 2000);
    const GridSpec spec{box, 4, 2};
    CHECK(spec.cell_center(0, 0).lat > spec.cell_center(0, 1).lat);
    CHECK(spec.cell_center(1, 0).lon > spec.cell_center(0, 0).lon);
    CHECK(box.contains(spec.cell_center(3, 1)));
    CHECK_THROWS_AS((GridSpec{box, 1, 5}.validate()), DomainError);
}

TEST_CASE("serial and parallel kernels agree bit for bit") {
    std::mt19937_64 rng(52);
    const BBox box = BBox::around(kCenter, 2800, 2800);
    const auto samples = random_samples(rng, box, 49);
    const GridSpec spec{box, 40, 40};
    std::vector<double> a(1600), b(1600);
    kernels::serial::idw_grid(samples, spec, 2.0, a);
    kernels::omp::idw_grid(samples, spec, 2.0, b);
    CHECK(a == b);

    std::vector<std::vector<pipeline::TimePoint>> series(12);
    for (auto& s : series) {
        for (Timestamp t = 0; t < 300 * 3600; t += 3600) {
            if (rng() % 6 == 0) continue;
            s.push_back({t, static_cast<double>(rng() % 50)});
        }
    }
    std::vector<kernels::SeriesView> views;
    for (const auto& s : series) views.push_back({s});
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < views.size(); ++i)
        for (std::size_t j = i + 1; j < views.size(); ++j) pairs.emplace_back(i, j);
    std::vector<kernels::PairOutcome> x(pairs.size()), y(pairs.size());
    kernels::serial::pairwise_tau(views, pairs, 24, x);
    kernels::omp::pairwise_tau(views, pairs, 24, y);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        CHECK(x[k].status == y[k].status);
        CHECK(x[k].tau == y[k].tau);
        CHECK(x[k].n == y[k].n);
    }
}

TEST_CASE("kendall tau matches pair counting") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 199;
        const int levels = 1 + static_cast<int>(rng() % 20);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = static_cast<double>(rng() % static_cast<unsigned>(levels));
            y[i] = trial % 2 ? x[i] + static_cast<double>(rng() % 5) : static_cast<double>(rng() % 7);
        }
        const bool x_flat = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
        const bool y_flat = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
        if (x_flat || y_flat) {
            CHECK_THROWS_AS(kendall_tau(x, y), DomainError);
            continue;
        }
        CHECK(std::abs(kendall_tau(x, y) - tau_oracle(x, y)) <= 1e-12);
    }
}

TEST_CASE("kendall tau properties") {
    std::mt19937_64 rng(54);
    std::normal_distribution<double> g;
    std::vector<double> x(150), y(150);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = g(rng);
        y[i] = x[i] + g(rng);
    }
    const double t = kendall_tau(x, y);
    CHECK(kendall_tau(x, x) == 1.0);
    CHECK(kendall_tau(y, x) == doctest::Approx(t).epsilon(1e-15));
    std::vector<double> neg(x);
    for (auto& v : neg) v = -v;
    CHECK(kendall_tau(neg, y) == doctest::Approx(-t).epsilon(1e-15));
    // Strictly monotone transforms do not change ranks.
    std::vector<double> ex(x);
    for (auto& v : ex) v = std::exp(3.0 * v) + 5.0;
    CHECK(kendall_tau(ex, y) == t);
    CHECK_THROWS_AS(kendall_tau(std::vector<double>{1, 2}, std::vector<double>{1}), DomainError);
}

TEST_CASE("correlation versus distance") {
    fieldsim::DeploymentMap dep;
    dep.entries = {{1, kCenter, LocationType::L1},
                   {2, from_local(kCenter, {300, 0}), LocationType::L2},
                   {3, from_local(kCenter, {0, 1000}), LocationType::L3}};
    std::map<DeviceId, pipeline::TimeSeries> hourly;
    std::mt19937_64 rng(55);
    for (DeviceId id : {1, 2, 3}) {
        auto& s = hourly[id];
        s.device_id = id;
        const int n = id == 3 ? 10 : 48;
        for (int h = 0; h < n; ++h) s.points.push_back({h * 3600, static_cast<double>(h % 12) + 0.1 * (rng() % 10)});
    }
    const auto r = correlation_vs_distance(dep, hourly, 24);
    REQUIRE(r.points.size() == 1);
    CHECK(r.points[0].device_a == 1);
    CHECK(r.points[0].device_b == 2);
    CHECK(r.points[0].distance_m == doctest::Approx(300.0).epsilon(1e-4));
    CHECK(r.points[0].n_samples == 48);
    std::vector<double> a, b;
    for (int h = 0; h < 48; ++h) a.push_back(hourly[1].points[h].v), b.push_back(hourly[2].points[h].v);
    CHECK(r.points[0].tau == kendall_tau(a, b));
    CHECK(r.notices.size() == 2);

    std::stringstream ss;
    write_correlation_csv(r.points, ss);
    const auto back = read_correlation_csv(ss);
    REQUIRE(back.size() == 1);
    CHECK(back[0].tau == r.points[0].tau);
    CHECK(back[0].distance_m == r.points[0].distance_m);
}

TEST_CASE("exponential fit recovers noiseless coefficients") {
    const double a = 0.4801, b = -0.0124, c = 0.7380, d = -0.0001;
    std::vector<std::pair<double, double>> pts;
    for (double x = 0.0; x <= 1700.0; x += 10.0) pts.emplace_back(x, a * std::exp(b * x) + c * std::exp(d * x));
    const ExpFitModel m = fit_two_term_exp(pts);
    CHECK(std::abs(m.a - a) / a < 1e-3);
    CHECK(std::abs(m.b - b) / std::abs(b) < 1e-3);
    CHECK(std::abs(m.c - c) / c < 1e-3);
    CHECK(std::abs(m.d - d) / std::abs(d) < 1e-3);
    CHECK(m.residual_rmse < 1e-6);
    CHECK(m.residual_rmse <= m.initial_rmse);
}

TEST_CASE("exponential fit on scattered data") {
    std::mt19937_64 rng(56);
    std::uniform_real_distribution<double> u(0.0, 2500.0);
    std::normal_distribution<double> noise(0.0, 0.03);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 1176; ++i) {
        const double x = u(rng);
        pts.emplace_back(x, 0.5 * std::exp(-0.006 * x) + 0.3 * std::exp(-0.0002 * x) + noise(rng));
    }
    const ExpFitModel m = fit_two_term_exp(pts);
    CHECK(std::abs(m.b) >= std::abs(m.d));
    CHECK(m.residual_rmse == doctest::Approx(0.03).epsilon(0.1));
    const ExpFitModel binned = fit_two_term_exp(pts, {100.0, 2000});
    CHECK(binned.n_points == 25);
    CHECK(binned.b == doctest::Approx(-0.006).epsilon(0.3));
}

TEST_CASE("exponential fit input checks") {
    std::vector<std::pair<double, double>> few{{0, 1}, {100, 0.5}, {600, 0.2}};
    CHECK_THROWS_AS(fit_two_term_exp(few), InsufficientData);
    std::vector<std::pair<double, double>> narrow;
    for (int i = 0; i < 20; ++i) narrow.emplace_back(i * 10.0, std::exp(-0.01 * i * 10.0));
    CHECK_THROWS_AS(fit_two_term_exp(narrow), InsufficientData);
}

TEST_CASE("knee distance") {
    const ExpFitModel paper{0.4801, -0.0124, 0.7380, -0.0001};
    const double k025 = knee_distance(paper, 0.025);
    CHECK(k025 == 350.0);
    CHECK(std::abs(k025 - knee_oracle(0.4801, -0.0124, 0.7380, -0.0001, 0.025)) <= 5.0);
    CHECK(knee_distance(paper, 0.1) == 200.0);
    CHECK(std::abs(knee_distance(paper, 0.1) - knee_oracle(0.4801, -0.0124, 0.7380, -0.0001, 0.1)) <= 5.0);

    // One term: |f'(x)| / |f'(0)| = e^{bx}.
    const ExpFitModel single{1.0, -0.01, 0.0, 0.0};
    CHECK(knee_distance(single, 0.1) == std::round(std::log(0.1) / -0.01 / 10.0) * 10.0);

    // Faster decay, earlier knee.
    double prev = 1e9;
    for (double b : {-0.005, -0.01, -0.02, -0.04}) {
        const double k = knee_distance({0.48, b, 0.738, -0.0001}, 0.025);
        CHECK(k < prev);
        prev = k;
    }
    CHECK_THROWS_AS(knee_distance({0.5, 0.001, 0.5, 0.0}), DomainError);
    CHECK_THROWS_AS(knee_distance(paper, 1.5), DomainError);
}

TEST_CASE("fit report json") {
    const ExpFitModel m{0.5, -0.01, 0.3, -0.0002, 0.04, 0.05, 1176, 12};
    auto doc = nlohmann::json::parse(fit_report_json(m, 0.025, 360.0));
    CHECK(doc["a"] == 0.5);
    CHECK(doc["knee_distance_m"] == 360.0);
    CHECK(doc["n_points"] == 1176);
    doc = nlohmann::json::parse(fit_report_json(m, 0.025, std::nullopt));
    CHECK(doc["knee_distance_m"].is_null());
}

TEST_CASE("spread subsets") {
    const BBox box = BBox::around(kCenter, 2800, 2800);
    const auto dep = fieldsim::generate_deployment(box, 49, {fieldsim::LayoutKind::Paper49, 3, std::nullopt});
    std::vector<DeviceId> ids;
    for (const auto& e : dep.entries) ids.push_back(e.device_id);
    const auto s4 = choose_spread_subset(dep, 4, ids, 77);
    CHECK(s4.size() == 4);
    CHECK(std::is_sorted(s4.begin(), s4.end()));
    CHECK(std::set<DeviceId>(s4.begin(), s4.end()).size() == 4);
    CHECK(choose_spread_subset(dep, 4, ids, 77) == s4);
    // Best of many draws beats a single draw on minimum spacing.
    auto min_gap = [&](const std::vector<DeviceId>& s) {
        double m = 1e9;
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = i + 1; j < s.size(); ++j)
                m = std::min(m, haversine(dep.find(s[i])->location, dep.find(s[j])->location));
        return m;
    };
    CHECK(min_gap(s4) >= min_gap(choose_spread_subset(dep, 4, ids, 77, 1)));
    CHECK_THROWS_AS(choose_spread_subset(dep, 50, ids, 1), DomainError);
}

TEST_CASE("sparse subset rmse") {
    const BBox box = BBox::around(kCenter, 2800, 2800);
    const auto dep = fieldsim::generate_deployment(box, 16, {fieldsim::LayoutKind::Grid, 0, std::nullopt});
    std::map<DeviceId, double> values;
    for (const auto& e : dep.entries) values[e.device_id] = 50.0 + 10.0 * e.device_id;
    const Grid full = idw_grid(samples_for(dep, values), {box, 20, 20});
    std::vector<DeviceId> all;
    for (const auto& e : dep.entries) all.push_back(e.device_id);
    CHECK(sparse_subset_rmse(full, dep, all, values) == 0.0);
    const std::vector<DeviceId> two{1, 16};
    CHECK(sparse_subset_rmse(full, dep, two, values) > 0.0);
    CHECK_THROWS_AS(sparse_subset_rmse(full, dep, std::vector<DeviceId>{}, values), DomainError);
    CHECK_THROWS_AS(sparse_subset_rmse(full, dep, std::vector<DeviceId>{99}, values), DomainError);
}

TEST_CASE("grid exports") {
    const BBox box = BBox::around(kCenter, 2000, 2000);
    Grid g;
    g.bbox = box;
    g.nx = 3;
    g.ny = 2;
    g.cells = {10, 20, 30, 40, 50, 60};
    g.timestamp = 1636059600;
    std::ostringstream csv;
    write_grid_csv(g, csv);
    std::istringstream lines(csv.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 7);
    CHECK(csv.str().rfind("lat,lon,value\n", 0) == 0);

    std::ostringstream pgm;
    write_grid_pgm(g, pgm);
    const std::string s = pgm.str();
    CHECK(s.rfind("P5\n# aqnet pm10 2021-11-04T21:00:00Z min=10 max=60\n3 2\n255\n", 0) == 0);
    const std::string px = s.substr(s.size() - 6);
    CHECK(static_cast<unsigned char>(px[0]) == 0);
    CHECK(static_cast<unsigned char>(px[5]) == 255);
    CHECK(static_cast<unsigned char>(px[2]) == 102);  // round(255 * 0.4)

    g.cells.assign(6, 42.0);
    std::ostringstream flat;
    write_grid_pgm(g, flat);
    const std::string f = flat.str();
    CHECK(std::all_of(f.end() - 6, f.end(), [](char c) { return c == 0; }));
}

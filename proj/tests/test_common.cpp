#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "aqnet/common.hpp"
#include "aqnet/csv.hpp"
#include "aqnet/geo.hpp"
#include "aqnet/random.hpp"
#include "doctest.h"

using namespace aqnet;

TEST_CASE("civil time round trip") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<Timestamp> dist(0, 4'102'444'800);  // up to 2100
    for (int i = 0; i < 2000; ++i) {
        const Timestamp t = dist(rng);
        CHECK(from_civil(to_civil(t)) == t);
    }
    const CivilTime c = to_civil(1636059600);
    CHECK(c.year == 2021);
    CHECK(c.month == 11);
    CHECK(c.day == 4);
    CHECK(c.hour == 21);
    CHECK(from_civil({2024, 2, 29, 0, 0, 0}) + kSecondsPerDay == from_civil({2024, 3, 1, 0, 0, 0}));
}

TEST_CASE("timestamp formats") {
    CHECK(format_iso8601(1636059600) == "2021-11-04T21:00:00Z");
    CHECK(format_hour_tag(1636059600 + 1799) == "20211104T21");
    CHECK(parse_timestamp("2021-11-04T21:00:00Z") == 1636059600);
    CHECK(parse_timestamp("2021-11-04 21:00:00") == 1636059600);
    CHECK(parse_timestamp("2021-11-04T21:00") == 1636059600);
    CHECK(parse_timestamp("2021-11-04") == 1636059600 - 21 * 3600);
    CHECK(parse_timestamp("1636059600") == 1636059600);
    CHECK_THROWS_AS(parse_timestamp("yesterday"), Error);
    CHECK_THROWS_AS(parse_timestamp("2021-13-01"), Error);
}

TEST_CASE("month helpers and floor") {
    const Timestamp t = parse_timestamp("2021-12-31T23:59:59Z");
    CHECK(month_of(t) == 12);
    CHECK(month_start(t) == parse_timestamp("2021-12-01"));
    CHECK(next_month_start(t) == parse_timestamp("2022-01-01"));
    CHECK(floor_to(3599, 3600) == 0);
    CHECK(floor_to(3600, 3600) == 3600);
    CHECK(floor_to(-1, 30) == -30);
}

TEST_CASE("default season calendar") {
    const SeasonCalendar cal;
    for (int m : {6, 7, 8, 9, 10}) CHECK(cal.of_month(m) == Season::Monsoon);
    for (int m : {11, 12, 1, 2}) CHECK(cal.of_month(m) == Season::Winter);
    for (int m : {3, 4, 5}) CHECK(cal.of_month(m) == Season::Summer);
    CHECK(cal.at(parse_timestamp("2021-11-04")) == Season::Winter);
    CHECK_THROWS(cal.of_month(0));
    CHECK_THROWS(cal.of_month(13));

    SeasonCalendar custom;
    custom.set(10, Season::Winter);
    CHECK(custom.of_month(10) == Season::Winter);
    CHECK_FALSE(custom == cal);
}

TEST_CASE("enum names round trip") {
    for (Season s : kAllSeasons) CHECK(parse_season(to_string(s)) == s);
    for (Pollutant p : {Pollutant::PM10, Pollutant::PM25}) CHECK(parse_pollutant(to_string(p)) == p);
    for (auto t : {LocationType::L1, LocationType::L2, LocationType::L3, LocationType::L4})
        CHECK(parse_location_type(to_string(t)) == t);
    CHECK_THROWS_AS(parse_season("spring"), ConfigError);
    CHECK_THROWS_AS(parse_pollutant("pm1"), ConfigError);
}

TEST_CASE("haversine") {
    // One degree of latitude on the mean-radius sphere.
    CHECK(haversine({0, 0}, {1, 0}) == doctest::Approx(kEarthRadiusM * M_PI / 180.0).epsilon(1e-12));
    CHECK(std::round(haversine({0, 0}, {1, 0})) == 111195.0);
    CHECK(haversine({28.6, 77.2}, {28.6, 77.2}) == 0.0);
    const GeoPoint a{28.61, 77.21}, b{28.63, 77.18};
    CHECK(haversine(a, b) == doctest::Approx(haversine(b, a)).epsilon(1e-15));
}

TEST_CASE("bbox and local plane") {
    const GeoPoint c{28.6139, 77.2090};
    const BBox box = BBox::around(c, 2000.0, 1500.0);
    CHECK(box.width_m() == doctest::Approx(2000.0).epsilon(1e-3));
    CHECK(box.height_m() == doctest::Approx(1500.0).epsilon(1e-3));
    CHECK(box.contains(c));
    CHECK_FALSE(box.degenerate());

    const LocalXY xy = to_local(c, box.north_east);
    CHECK(xy.x == doctest::Approx(1000.0).epsilon(1e-3));
    CHECK(xy.y == doctest::Approx(750.0).epsilon(1e-3));
    const GeoPoint back = from_local(c, xy);
    CHECK(back.lat == doctest::Approx(box.north_east.lat).epsilon(1e-12));
    CHECK(back.lon == doctest::Approx(box.north_east.lon).epsilon(1e-12));
    // The local plane agrees with the great-circle distance at this scale.
    CHECK(std::hypot(xy.x, xy.y) == doctest::Approx(haversine(c, box.north_east)).epsilon(1e-4));
}

TEST_CASE("csv number formatting round trips") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        CHECK(std::stod(csv::format(v)) == v);
        const float f = static_cast<float>(v);
        CHECK(std::stof(csv::format(f)) == f);
    }
    CHECK(csv::format(0.5) == "0.5");
    CHECK(csv::format(12.0) == "12");
}

TEST_CASE("csv helpers") {
    const auto parts = csv::split("a,,b");
    REQUIRE(parts.size() == 3);
    CHECK(parts[1].empty());

    std::istringstream in("x,y\r\n1,2\n");
    std::string line;
    REQUIRE(csv::read_line(in, line));
    CHECK(line == "x,y");
    REQUIRE(csv::read_line(in, line));
    CHECK(line == "1,2");
    CHECK_FALSE(csv::read_line(in, line));

    const std::string_view cols[] = {"x", "y"};
    CHECK_NOTHROW(csv::expect_header("x,y", cols, "test"));
    CHECK_THROWS_AS(csv::expect_header("x,z", cols, "test"), SchemaError);
    CHECK_THROWS_AS(csv::parse_double("1.5x", 3, "pm10"), SchemaError);
    CHECK(csv::parse_int("-42", 1, "id") == -42);
}

TEST_CASE("derived seeds") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
    Rng a = make_rng(5, stream::kWeather), b = make_rng(5, stream::kWeather);
    for (int i = 0; i < 10; ++i) CHECK(a() == b());
}

#include "aqnet/common.hpp"

#include <charconv>
#include <cstdio>

namespace aqnet {

std::string_view to_string(LocationType t) {
    switch (t) {
        case LocationType::L1: return "L1";
        case LocationType::L2: return "L2";
        case LocationType::L3: return "L3";
        case LocationType::L4: return "L4";
    }
    return "?";
}

std::string_view to_string(Season s) {
    switch (s) {
        case Season::Monsoon: return "monsoon";
        case Season::Winter: return "winter";
        case Season::Summer: return "summer";
    }
    return "?";
}

std::string_view to_string(Pollutant p) { return p == Pollutant::PM10 ? "pm10" : "pm25"; }

LocationType parse_location_type(std::string_view s) {
    if (s == "L1") return LocationType::L1;
    if (s == "L2") return LocationType::L2;
    if (s == "L3") return LocationType::L3;
    if (s == "L4") return LocationType::L4;
    throw ConfigError("unknown location type '" + std::string(s) + "' (expected L1..L4)");
}

Season parse_season(std::string_view s) {
    if (s == "monsoon") return Season::Monsoon;
    if (s == "winter") return Season::Winter;
    if (s == "summer") return Season::Summer;
    throw ConfigError("unknown season '" + std::string(s) + "' (expected monsoon, winter or summer)");
}

Pollutant parse_pollutant(std::string_view s) {
    if (s == "pm10") return Pollutant::PM10;
    if (s == "pm25" || s == "pm2.5") return Pollutant::PM25;
    throw ConfigError("unknown pollutant '" + std::string(s) + "' (expected pm10 or pm25)");
}

SeasonCalendar::SeasonCalendar()
    : by_month_{Season::Winter, Season::Winter, Season::Summer, Season::Summer,
                Season::Summer, Season::Monsoon, Season::Monsoon, Season::Monsoon,
                Season::Monsoon, Season::Monsoon, Season::Winter, Season::Winter} {}

Season SeasonCalendar::of_month(int month) const {
    if (month < 1 || month > 12) throw DomainError("month out of range: " + std::to_string(month));
    return by_month_[static_cast<std::size_t>(month - 1)];
}

Season SeasonCalendar::at(Timestamp t) const { return of_month(month_of(t)); }

void SeasonCalendar::set(int month, Season s) {
    if (month < 1 || month > 12) throw ConfigError("month out of range: " + std::to_string(month));
    by_month_[static_cast<std::size_t>(month - 1)] = s;
}

// Howard Hinnant's days_from_civil / civil_from_days.
namespace {

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    y = static_cast<int>(static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2));
}

}  // namespace

Timestamp floor_to(Timestamp t, Timestamp step) {
    Timestamp q = t / step;
    if (t % step != 0 && t < 0) --q;
    return q * step;
}

CivilTime to_civil(Timestamp t) {
    const Timestamp days = floor_to(t, kSecondsPerDay) / kSecondsPerDay;
    const Timestamp sod = t - days * kSecondsPerDay;
    CivilTime c{};
    civil_from_days(days, c.year, c.month, c.day);
    c.hour = static_cast<int>(sod / 3600);
    c.minute = static_cast<int>((sod % 3600) / 60);
    c.second = static_cast<int>(sod % 60);
    return c;
}

Timestamp from_civil(const CivilTime& c) {
    return days_from_civil(c.year, static_cast<unsigned>(c.month), static_cast<unsigned>(c.day)) *
               kSecondsPerDay +
           c.hour * 3600 + c.minute * 60 + c.second;
}

int month_of(Timestamp t) { return to_civil(t).month; }

Timestamp month_start(Timestamp t) {
    CivilTime c = to_civil(t);
    return from_civil({c.year, c.month, 1, 0, 0, 0});
}

Timestamp next_month_start(Timestamp t) {
    CivilTime c = to_civil(t);
    if (c.month == 12) return from_civil({c.year + 1, 1, 1, 0, 0, 0});
    return from_civil({c.year, c.month + 1, 1, 0, 0, 0});
}

std::string format_iso8601(Timestamp t) {
    const CivilTime c = to_civil(t);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", c.year, c.month, c.day, c.hour,
                  c.minute, c.second);
    return buf;
}

std::string format_hour_tag(Timestamp t) {
    const CivilTime c = to_civil(t);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d", c.year, c.month, c.day, c.hour);
    return buf;
}

namespace {

bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    const char* first = s.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc{} && ptr == first + len;
}

}  // namespace

Timestamp parse_timestamp(std::string_view s) {
    auto fail = [&]() -> Timestamp {
        throw DomainError("invalid timestamp '" + std::string(s) + "'");
    };
    if (s.empty()) return fail();

    if (s.find('-', 1) == std::string_view::npos) {
        Timestamp v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) return fail();
        return v;
    }

    CivilTime c{};
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') return fail();
    if (!parse_fixed(s, 0, 4, c.year) || !parse_fixed(s, 5, 2, c.month) || !parse_fixed(s, 8, 2, c.day))
        return fail();
    std::string_view rest = s.substr(10);
    if (!rest.empty()) {
        if (rest[0] != 'T' && rest[0] != ' ') return fail();
        if (!parse_fixed(rest, 1, 2, c.hour) || rest.size() < 6 || rest[3] != ':' ||
            !parse_fixed(rest, 4, 2, c.minute))
            return fail();
        rest = rest.substr(6);
        if (!rest.empty() && rest[0] == ':') {
            if (!parse_fixed(rest, 1, 2, c.second)) return fail();
            rest = rest.substr(3);
        }
        if (rest == "Z" || rest == "+00:00") rest = {};
        if (!rest.empty()) return fail();
    }
    if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > 31 || c.hour > 23 || c.minute > 59 ||
        c.second > 60)
        return fail();
    return from_civil(c);
}

}  // namespace aqnet

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aqnet {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

using DeviceId = std::uint16_t;

inline constexpr Timestamp kSecondsPerHour = 3600;
inline constexpr Timestamp kSecondsPerDay = 86400;

// ---------------------------------------------------------------------------
// Errors. Everything thrown by the library derives from aqnet::Error so the
// CLI can map categories onto exit codes.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

/// Invalid configuration (scenario, flags, model/season mismatch).
struct ConfigError : Error {
    using Error::Error;
};

struct InsufficientData : Error {
    using Error::Error;
};

struct DegenerateFit : Error {
    using Error::Error;
};

struct NotFound : Error {
    using Error::Error;
};

struct EncodingError : Error {
    using Error::Error;
};

/// Non-linear fit did not converge from any start.
struct FitError : Error {
    using Error::Error;
};

/// File content does not match the expected CSV schema.
struct SchemaError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Enumerations shared across modules.

enum class LocationType : std::uint8_t { L1 = 1, L2, L3, L4 };
enum class Season : std::uint8_t { Monsoon, Winter, Summer };
enum class Pollutant : std::uint8_t { PM10, PM25 };

inline constexpr std::array<Season, 3> kAllSeasons{Season::Monsoon, Season::Winter, Season::Summer};

std::string_view to_string(LocationType t);
std::string_view to_string(Season s);
std::string_view to_string(Pollutant p);

LocationType parse_location_type(std::string_view s);
Season parse_season(std::string_view s);
Pollutant parse_pollutant(std::string_view s);

/// Total month -> season mapping.
class SeasonCalendar {
public:
    /// Monsoon Jun-Oct, winter Nov-Feb, summer Mar-May.
    SeasonCalendar();
    explicit SeasonCalendar(const std::array<Season, 12>& by_month) : by_month_(by_month) {}

    Season of_month(int month) const;  // month in 1..12
    Season at(Timestamp t) const;
    void set(int month, Season s);

    bool operator==(const SeasonCalendar&) const = default;

private:
    std::array<Season, 12> by_month_;
};

// ---------------------------------------------------------------------------
// Calendar arithmetic in UTC.

struct CivilTime {
    int year;
    int month;  // 1..12
    int day;    // 1..31
    int hour;
    int minute;
    int second;
};

CivilTime to_civil(Timestamp t);
Timestamp from_civil(const CivilTime& c);

int month_of(Timestamp t);
/// Start of the calendar month containing t.
Timestamp month_start(Timestamp t);
/// Start of the calendar month after the one containing t.
Timestamp next_month_start(Timestamp t);

/// Largest multiple of step that is <= t.
Timestamp floor_to(Timestamp t, Timestamp step);

/// "2021-11-04T21:00:00Z"
std::string format_iso8601(Timestamp t);
/// Accepts "YYYY-MM-DDTHH:MM:SSZ", "YYYY-MM-DD HH:MM:SS", "YYYY-MM-DDTHH:MM" and
/// "YYYY-MM-DD" (all UTC), or a plain integer of epoch seconds.
Timestamp parse_timestamp(std::string_view s);

/// Compact form used in artifact file names: "20211104T21".
std::string format_hour_tag(Timestamp t);

}  // namespace aqnet

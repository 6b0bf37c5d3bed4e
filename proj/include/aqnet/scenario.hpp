#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aqnet/common.hpp"
#include "aqnet/device.hpp"
#include "aqnet/fieldsim.hpp"

/// Scenario files: YAML documents that fully determine a run given the seed.
namespace aqnet::scenario {

struct Period {
    Timestamp start = 0;
    int days = 1;

    Timestamp end() const { return start + static_cast<Timestamp>(days) * kSecondsPerDay; }
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct SensorOverride {
    DeviceId device = 0;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> noise_sigma;
    std::optional<double> rh_inflation;
    std::optional<double> spike_rate;
    std::optional<double> spike_magnitude;
};

struct SensorSpec {
    Range alpha{1.0, 1.0};
    Range beta{0.0, 0.0};
    double noise_sigma = 0.0;
    double rh_inflation = 1.0;
    double spike_rate = 0.0;
    double spike_magnitude = 0.0;
    std::vector<SensorOverride> overrides;
};

struct RandomOutages {
    int per_device = 0;  // per period
    int min_samples = 1;
    int max_samples = 1;
};

struct ExplicitOutage {
    DeviceId device = 0;
    Timestamp start = 0;
    Timestamp end = 0;
};

struct OutageSpec {
    std::optional<RandomOutages> random;
    std::vector<ExplicitOutage> explicit_intervals;
};

enum class CalibrationMode { ColocationRun, Self, None };
CalibrationMode parse_calibration_mode(std::string_view s);
std::string_view to_string(CalibrationMode m);

struct CalibrationSpec {
    CalibrationMode mode = CalibrationMode::None;
    int days = 7;
};

struct AnalyticsSpec {
    double power = 2.0;
    int nx = 40;
    int ny = 40;
    std::vector<std::size_t> subsets{4, 12};
    double fit_bin_m = 0.0;
    double knee_threshold = 0.025;
    std::size_t min_overlap_hours = 24;
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 0;
    GeoPoint center;
    double width_m = 2000.0;
    double height_m = 2000.0;
    std::vector<Period> periods;
    fieldsim::FieldConfig field;
    std::optional<fieldsim::PlumeGenerator> event_generator;
    fieldsim::WeatherConfig weather;
    fieldsim::LayoutKind layout = fieldsim::LayoutKind::Grid;
    int n_devices = 49;
    std::optional<double> cell_m;
    SensorSpec sensors;
    OutageSpec outages;
    CalibrationSpec calibration;
    AnalyticsSpec analytics;

    BBox region() const { return field.region; }
    Timestamp start() const;
    Timestamp end() const;
    std::size_t samples_per_device() const;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;
};

/// Throws ConfigError; messages carry `source:line:` prefixes where the YAML position is known.
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);

/// Field configuration with seed-derived texture seeds and generated plumes merged into the
/// explicit events.
fieldsim::FieldConfig build_field(const Scenario& s);

}  // namespace aqnet::scenario

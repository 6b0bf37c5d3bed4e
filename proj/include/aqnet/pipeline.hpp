#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "aqnet/common.hpp"
#include "aqnet/device.hpp"

/// Raw channel data to cleaned, calibrated series.
namespace aqnet::pipeline {

struct TimePoint {
    Timestamp t = 0;
    double v = 0.0;

    bool operator==(const TimePoint&) const = default;
};

struct TimeSeries {
    DeviceId device_id = 0;
    std::vector<TimePoint> points;
    Timestamp cadence = device::kSamplePeriod;

    /// Throws DomainError unless timestamps strictly increase and values are finite.
    void validate() const;
    std::size_t size() const { return points.size(); }
    bool operator==(const TimeSeries&) const = default;
};

/// true = point removed.
using Mask = std::vector<bool>;

struct Masked {
    TimeSeries series;
    Mask removed;

    std::size_t removed_count() const;
};

/// Extracts one pollutant (or temp / rh) column from time-ordered readings.
enum class Field { PM10, PM25, Temp, RH };
TimeSeries extract(DeviceId id, std::span<const device::SensorReading> readings, Field field);

/// Marks points with RH > 80 % or a value outside [0, 999.9]. Throws DomainError when the two
/// series do not share timestamps.
Masked filter_unreliable(const TimeSeries& series, const TimeSeries& rh_series);

struct IqrBounds {
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double lower = 0.0;  // q1 - 1.5 iqr
    double upper = 0.0;  // q3 + 1.5 iqr
};

/// Type-7 quantile (linear interpolation of order statistics, h = (n-1) p) of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

/// Throws InsufficientData for fewer than 4 values.
IqrBounds iqr_bounds(std::span<const double> values);

/// Removes points strictly outside [lower, upper]. `prior` (if non-empty) marks points already
/// removed; they stay removed.
Masked remove_outliers(const TimeSeries& series, const IqrBounds& bounds, const Mask& prior = {});

/// Bounds recomputed per calendar month over the points not already removed. Months with fewer
/// than 4 surviving points are left untouched.
Masked remove_outliers_monthly(const TimeSeries& series, const Mask& prior = {});

/// Removed interior points are replaced by the linear interpolant of their nearest surviving
/// neighbours; leading/trailing gaps take the nearest surviving value. Throws InsufficientData if
/// nothing survives.
TimeSeries interpolate_gaps(const TimeSeries& series, const Mask& removed);

struct CleanReport {
    std::size_t unreliable = 0;
    std::size_t outliers = 0;
};

/// filter_unreliable -> remove_outliers_monthly -> interpolate_gaps. Output keeps the input grid.
TimeSeries clean(const TimeSeries& series, const TimeSeries& rh_series, CleanReport* report = nullptr);

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationModel {
    DeviceId device_id = 0;
    Season season = Season::Monsoon;
    Pollutant pollutant = Pollutant::PM10;
    double m = 1.0;
    double c = 0.0;
    double fit_rmse = 0.0;
    std::size_t n_points = 0;
    // Ordinary least-squares standard errors of m and c.
    double se_m = 0.0;
    double se_c = 0.0;
};

/// OLS of reference on raw over shared timestamps. Season is taken from the median timestamp.
/// Throws InsufficientData (< 2 shared points), DegenerateFit (constant raw).
CalibrationModel fit_calibration(const TimeSeries& raw, const TimeSeries& reference, Pollutant pollutant,
                                 const SeasonCalendar& calendar = {});

/// y = max(0, m x + c). Throws ConfigError if any point's season differs from the model's.
TimeSeries apply_calibration(const TimeSeries& series, const CalibrationModel& model,
                             const SeasonCalendar& calendar = {});

/// Picks the model for each point's season. Throws ConfigError if one is missing.
TimeSeries apply_calibration(const TimeSeries& series, std::span<const CalibrationModel> models,
                             Pollutant pollutant, const SeasonCalendar& calendar = {});

void write_models_csv(std::span<const CalibrationModel> models, std::ostream& out);
std::vector<CalibrationModel> read_models_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Statistics

/// Means over left-closed hourly buckets; empty buckets omitted.
TimeSeries hourly_means(const TimeSeries& series);

struct SeasonStats {
    double mean = 0.0;
    double variance = 0.0;  // population
    std::size_t n_hours = 0;
};

/// Population mean/variance of hourly means per season; seasons without data are omitted.
std::map<Season, SeasonStats> seasonal_stats(const TimeSeries& series, const SeasonCalendar& calendar = {});

// ---------------------------------------------------------------------------
// Staged CSV: created_at,pm10,pm25,temp,rh,stage

struct StagedRow {
    Timestamp created_at = 0;
    double pm10 = 0.0;
    double pm25 = 0.0;
    double temp = 0.0;
    double rh = 0.0;
};

void write_staged_csv(std::span<const StagedRow> rows, std::string_view stage, std::ostream& out);
/// Accepts both the gateway export schema and the staged schema.
std::vector<StagedRow> read_staged_csv(std::istream& in);

std::vector<StagedRow> to_rows(std::span<const device::SensorReading> readings);
TimeSeries extract(DeviceId id, std::span<const StagedRow> rows, Field field);

/// Cleans pm10 and pm25 independently (RH mask shared); temp and rh pass through.
std::vector<StagedRow> clean_rows(std::span<const StagedRow> rows, CleanReport* report = nullptr);

/// Applies per-season models for `device` to pm10 and pm25.
std::vector<StagedRow> calibrate_rows(std::span<const StagedRow> rows, DeviceId device,
                                      std::span<const CalibrationModel> models, const SeasonCalendar& calendar = {});

}  // namespace aqnet::pipeline

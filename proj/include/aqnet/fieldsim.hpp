#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "aqnet/common.hpp"
#include "aqnet/geo.hpp"
#include "aqnet/random.hpp"

/// Synthetic ground truth: PM fields, deployments, weather and sensor error models.
namespace aqnet::fieldsim {

/// One diurnal harmonic. The k-th entry (1-based) of a harmonic list has a period of 24/k hours
/// and peaks at `phase_hr` (UTC hour of day).
struct Harmonic {
    double phase_hr = 0.0;
    double amplitude = 0.0;
};

/// Localised emission burst: Gaussian in space, triangular ramp in time.
struct PlumeEvent {
    GeoPoint center;
    double sigma_m = 100.0;
    double peak = 0.0;
    Timestamp start = 0;
    Timestamp peak_time = 0;
    Timestamp end = 0;

    /// Time profile in [0, 1]; 0 outside [start, end], 1 at peak_time.
    double ramp(Timestamp t) const;
    double ramp(double t) const;
    void validate() const;
};

/// Smooth spatio-temporal random field built from random Fourier features.
/// Spatial wavenumbers are drawn for a Gaussian covariance with the given length scale,
/// temporal angular frequencies uniformly over periods [period_min_hr, period_max_hr].
/// `amplitude` is the field's standard deviation.
struct SpatialTexture {
    double length_scale_m = 300.0;
    double amplitude = 0.0;
    std::uint64_t seed = 0;
    int features = 64;
    double period_min_hr = 2.0;
    double period_max_hr = 12.0;
};

struct FieldConfig {
    BBox region;
    std::map<Season, double> baseline;  // PM10, per season
    std::vector<Harmonic> diurnal;
    std::vector<PlumeEvent> events;
    SpatialTexture texture;
    SpatialTexture texture_pm25;
    double pm25_ratio = 0.55;
    SeasonCalendar calendar;
};

struct Concentration {
    double pm10 = 0.0;
    double pm25 = 0.0;
};

/// Analytic ground-truth field. Immutable after construction; safe for concurrent evaluation.
class GroundTruthField {
public:
    explicit GroundTruthField(FieldConfig config);

    /// Throws DomainError outside the region.
    Concentration at(GeoPoint loc, Timestamp t) const;
    /// Same, for fractional time (used by continuity checks).
    Concentration at(GeoPoint loc, double t) const;

    /// Seasonal baseline with 24 h linear blends across month boundaries where the season changes.
    double baseline(double t) const;

    /// Upper bound on |d truth / dt| in µg/m³ per second, for either pollutant.
    double max_rate() const;

    const FieldConfig& config() const { return config_; }

private:
    struct Feature {
        double kx, ky, omega, phase;
    };
    static std::vector<Feature> build_features(const SpatialTexture& tex);
    static double eval_texture(const SpatialTexture& tex, std::span<const Feature> features, LocalXY xy,
                               double t);
    static double texture_rate(const SpatialTexture& tex, std::span<const Feature> features);

    FieldConfig config_;
    GeoPoint origin_;
    std::vector<Feature> features_pm10_;
    std::vector<Feature> features_pm25_;
};

inline Concentration truth_at(const GroundTruthField& field, GeoPoint loc, Timestamp t) {
    return field.at(loc, t);
}

/// Random plumes sharing one time profile ("widespread" event such as festival fireworks).
struct PlumeGenerator {
    int count = 0;
    Timestamp start = 0;
    Timestamp peak_time = 0;
    Timestamp end = 0;
    double sigma_min_m = 150.0;
    double sigma_max_m = 400.0;
    double peak_min = 150.0;
    double peak_max = 300.0;
};

std::vector<PlumeEvent> generate_plumes(const BBox& region, const PlumeGenerator& gen, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Weather

struct WeatherConfig {
    std::map<Season, double> temp_mean{{Season::Monsoon, 26.0}, {Season::Winter, 21.0}, {Season::Summer, 33.0}};
    std::map<Season, double> rh_mean{{Season::Monsoon, 66.0}, {Season::Winter, 55.0}, {Season::Summer, 35.0}};
    double temp_amplitude = 5.0;
    double rh_amplitude = 12.0;
    double temp_noise = 0.4;
    double rh_noise = 2.5;
    double temp_peak_hr = 14.0;  // RH peaks 12 h later
    SeasonCalendar calendar;
};

struct Weather {
    double temp = 0.0;
    double rh = 0.0;
};

/// Deterministic daily cycle at t plus additive noise drawn from rng; RH clamped to [0, 100].
Weather weather_at(const WeatherConfig& cfg, Timestamp t, Rng& rng);

// ---------------------------------------------------------------------------
// Sensor error model

inline constexpr double kSensorMin = 0.0;
inline constexpr double kSensorMax = 999.9;
inline constexpr double kReliableRhMax = 80.0;

struct SensorErrorModel {
    double alpha = 1.0;
    double beta = 0.0;
    double noise_sigma = 0.0;
    double rh_inflation = 1.0;  // multiplies the reading when RH > 80 %
    double spike_rate = 0.0;    // probability of an additive positive spike per sample
    double spike_magnitude = 0.0;

    void validate() const;
};

/// raw = clamp((alpha*truth + beta + N(0, sigma) + spike) * (rh > 80 ? rh_inflation : 1), 0, 999.9).
/// Always consumes the same number of draws from rng regardless of parameters.
double sample_sensor(const SensorErrorModel& model, double truth, double rh, Rng& rng);

// ---------------------------------------------------------------------------
// Deployment

struct DeploymentEntry {
    DeviceId device_id = 0;
    GeoPoint location;
    LocationType type = LocationType::L1;
};

struct DeploymentMap {
    std::vector<DeploymentEntry> entries;

    const DeploymentEntry* find(DeviceId id) const;
    /// Throws ConfigError on duplicate ids or points outside region.
    void validate(const BBox& region) const;
    std::size_t size() const { return entries.size(); }
};

enum class LayoutKind { Grid, Paper49, Random, Colocated };

struct Layout {
    LayoutKind kind = LayoutKind::Grid;
    std::uint64_t seed = 0;
    /// Grid cell edge in meters. Unset: ceil(sqrt(n)) cells per side.
    std::optional<double> cell_m;
};

LayoutKind parse_layout_kind(std::string_view s);

/// Number of devices per location type emitted by the paper49 layout (L1..L4).
inline constexpr std::array<int, 4> kPaper49TypeCounts{11, 6, 16, 16};

DeploymentMap generate_deployment(const BBox& region, int n, const Layout& layout);

void write_deployment_csv(const DeploymentMap& map, std::ostream& out);
DeploymentMap read_deployment_csv(std::istream& in);

/// Header `created_at,lat,lon,pm10,pm25`.
void write_truth_csv_header(std::ostream& out);
void write_truth_csv_row(std::ostream& out, Timestamp t, GeoPoint loc, const Concentration& c);

}  // namespace aqnet::fieldsim

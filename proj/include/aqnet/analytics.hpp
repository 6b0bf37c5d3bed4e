#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aqnet/common.hpp"
#include "aqnet/fieldsim.hpp"
#include "aqnet/geo.hpp"
#include "aqnet/pipeline.hpp"

/// Spatial interpolation, dense-vs-sparse comparison, rank correlation vs distance, and the
/// two-term exponential decay fit with its knee distance.
namespace aqnet::analytics {

using aqnet::haversine;

struct Sample {
    GeoPoint location;
    double value = 0.0;
};

/// Targets closer than this to a sample take the sample's value exactly.
inline constexpr double kSingularityRadiusM = 0.5;
inline constexpr double kDefaultPower = 2.0;

/// Inverse-distance weighted mean with weights d^-p. Throws DomainError for no samples or p <= 0.
double idw(std::span<const Sample> samples, GeoPoint target, double power = kDefaultPower);

/// Regular raster over a box. Row 0 is the northern edge, columns run west to east.
struct GridSpec {
    BBox bbox;
    int nx = 40;
    int ny = 40;

    GeoPoint cell_center(int ix, int iy) const;
    void validate() const;
};

struct Grid {
    BBox bbox;
    int nx = 0;
    int ny = 0;
    std::vector<double> cells;  // row-major, cells[iy * nx + ix]
    Timestamp timestamp = 0;
    Pollutant pollutant = Pollutant::PM10;

    double at(int ix, int iy) const { return cells[static_cast<std::size_t>(iy) * nx + ix]; }
    GridSpec spec() const { return {bbox, nx, ny}; }
    double mean() const;
    double min() const;
    double max() const;
};

/// IDW at every cell centre (parallel kernel; bit-identical to the serial reference).
Grid idw_grid(std::span<const Sample> samples, const GridSpec& spec, double power = kDefaultPower,
              Timestamp t = 0, Pollutant pollutant = Pollutant::PM10);

/// Samples from the devices in `deployment` that have a value. Throws DomainError if none do.
std::vector<Sample> samples_for(const fieldsim::DeploymentMap& deployment, const std::map<DeviceId, double>& values,
                                std::span<const DeviceId> subset = {});

double grid_rmse(const Grid& a, const Grid& b);

/// Grid from `subset` compared cell-wise with `full`. Throws DomainError for an empty subset or
/// ids not in the deployment.
double sparse_subset_rmse(const Grid& full, const fieldsim::DeploymentMap& deployment,
                          std::span<const DeviceId> subset, const std::map<DeviceId, double>& values,
                          double power = kDefaultPower);

/// Random k-subset of `candidates` that is spread out: the best (largest minimum pairwise
/// distance) of `draws` uniform draws.
std::vector<DeviceId> choose_spread_subset(const fieldsim::DeploymentMap& deployment, std::size_t k,
                                           std::span<const DeviceId> candidates, std::uint64_t seed, int draws = 64);

// ---------------------------------------------------------------------------
// Correlation

/// Kendall tau-b in O(n log n). Throws DomainError for unequal lengths, n < 2, or when either
/// side is entirely tied.
double kendall_tau(std::span<const double> x, std::span<const double> y);

struct CorrelationPoint {
    DeviceId device_a = 0;
    DeviceId device_b = 0;
    double distance_m = 0.0;
    double tau = 0.0;
    std::size_t n_samples = 0;
};

struct CorrelationResult {
    std::vector<CorrelationPoint> points;
    std::vector<std::string> notices;  // skipped pairs
};

inline constexpr std::size_t kMinOverlapHours = 24;

/// One point per unordered device pair over overlapping timestamps of their hourly series.
/// Pairs with too little overlap or all-tied series are skipped with a notice.
CorrelationResult correlation_vs_distance(const fieldsim::DeploymentMap& deployment,
                                          const std::map<DeviceId, pipeline::TimeSeries>& hourly,
                                          std::size_t min_overlap = kMinOverlapHours);

// ---------------------------------------------------------------------------
// f(x) = a e^{bx} + c e^{dx}

struct ExpFitModel {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    double residual_rmse = 0.0;
    double initial_rmse = 0.0;  // best residual among the starting points
    std::size_t n_points = 0;
    int iterations = 0;

    double operator()(double x) const;
    double slope(double x) const;
};

struct FitOptions {
    /// > 0: average points into distance bins of this width before fitting.
    double bin_width_m = 0.0;
    int max_iterations = 2000;
};

/// Damped Gauss-Newton (Levenberg-Marquardt) with analytic Jacobian from a grid of (fast, slow)
/// decay-rate starts. The returned model has |b| >= |d|. Throws InsufficientData for fewer than 8
/// points or a span under 500 m, FitError if no start converges to a finite model.
ExpFitModel fit_two_term_exp(std::span<const std::pair<double, double>> points, const FitOptions& options = {});

std::vector<std::pair<double, double>> bin_points(std::span<const std::pair<double, double>> points, double width);

inline constexpr double kDefaultKneeThreshold = 0.025;

/// Smallest x with |f'(x)| <= threshold * |f'(0)|, rounded to 10 m. Throws DomainError when the
/// model does not decay.
double knee_distance(const ExpFitModel& model, double threshold = kDefaultKneeThreshold);

// ---------------------------------------------------------------------------
// Exports

/// `lat,lon,value` per cell, row-major.
void write_grid_csv(const Grid& grid, std::ostream& out);
/// 8-bit binary PGM, v -> round(255 (v - lo) / (hi - lo)) clamped; lo/hi default to the grid's
/// own min/max and are recorded in a header comment. A flat range maps to 0.
void write_grid_pgm(const Grid& grid, std::ostream& out, std::optional<std::pair<double, double>> range = {});

void write_correlation_csv(std::span<const CorrelationPoint> points, std::ostream& out);
std::vector<CorrelationPoint> read_correlation_csv(std::istream& in);

std::string fit_report_json(const ExpFitModel& model, double knee_threshold, std::optional<double> knee_m);

}  // namespace aqnet::analytics

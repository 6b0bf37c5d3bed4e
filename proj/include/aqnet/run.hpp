#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aqnet/analytics.hpp"
#include "aqnet/device.hpp"
#include "aqnet/fieldsim.hpp"
#include "aqnet/gateway.hpp"
#include "aqnet/pipeline.hpp"
#include "aqnet/random.hpp"
#include "aqnet/scenario.hpp"

/// Scenario orchestration. Every stage reads and writes the documented file formats, so running
/// the stages one by one reproduces run_scenario.
namespace aqnet::run {

namespace fs = std::filesystem;

inline constexpr std::string_view kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Fleet simulation

struct DeviceModel {
    DeviceId id = 0;
    fieldsim::SensorErrorModel error;
    device::OutageSchedule outages;
};

struct Fleet {
    fieldsim::DeploymentMap deployment;
    std::vector<DeviceModel> devices;  // same order as deployment.entries
};

/// Deployment, per-device error models and outage schedules drawn from the scenario seed.
Fleet build_fleet(const scenario::Scenario& s);

using FrameSink = std::function<void(const device::Frame&)>;

struct SimStats {
    std::uint64_t sensed = 0;
    std::uint64_t transmitted = 0;
    std::uint64_t dropped = 0;
    std::uint64_t buffered_at_end = 0;  // offline at the end of the last period
    std::uint64_t frames = 0;
};

struct SimSetup {
    std::vector<scenario::Period> periods;
    /// Per-device location override (colocation); empty = deployment locations.
    std::optional<GeoPoint> location;
    bool outages = true;
    std::uint64_t noise_stream = stream::kSensorNoise;
    std::uint64_t weather_index = 0;
    /// Called before each sample time; `serve` uses it to pace the clock.
    std::function<void(Timestamp)> on_step;
};

/// Steps every device through every 30 s sample of the periods and hands emitted frames to `sink`.
SimStats simulate_fleet(const scenario::Scenario& s, const Fleet& fleet, const fieldsim::GroundTruthField& field,
                        const SimSetup& setup, const FrameSink& sink);

/// Sink that decodes into an in-process store; throws Error on a rejected frame.
FrameSink store_sink(gateway::Store& store);

// ---------------------------------------------------------------------------
// Stages

enum class Transport { InProcess, Tcp };

struct SimulateOptions {
    Transport transport = Transport::InProcess;
};

struct SimulateResult {
    SimStats deployment;
    SimStats colocation;
    std::uint64_t gateway_readings = 0;
};

/// Writes deployment.csv, raw/device_<id>.csv (gateway export) and, unless calibration is
/// disabled, colocation/device_<id>.csv plus colocation/reference.csv.
SimulateResult simulate_stage(const scenario::Scenario& s, const fs::path& out, const SimulateOptions& options = {});

/// device_<id>.csv files in a directory, keyed by id.
std::map<DeviceId, fs::path> device_files(const fs::path& dir);

/// Reference file `created_at,pm10,pm25`.
void write_reference_csv(const std::vector<std::pair<Timestamp, fieldsim::Concentration>>& rows, std::ostream& out);
std::vector<std::pair<Timestamp, fieldsim::Concentration>> read_reference_csv(std::istream& in);

/// Per device, pollutant and season: OLS on reliable colocated points. Writes `models_out`.
std::vector<pipeline::CalibrationModel> fit_models_stage(const fs::path& colocation_dir, const SeasonCalendar& calendar,
                                                         const fs::path& models_out);

pipeline::CleanReport clean_stage(const fs::path& in_dir, const fs::path& out_dir);

/// An empty model list passes values through unchanged.
void apply_models_stage(const fs::path& in_dir, const std::vector<pipeline::CalibrationModel>& models,
                        const SeasonCalendar& calendar, const fs::path& out_dir);

/// `device_id,pollutant,season,mean,variance,n_hours`.
void stats_stage(const fs::path& in_dir, const SeasonCalendar& calendar, const fs::path& out_csv);

/// Hourly means per device for one pollutant, keyed by hour start.
std::map<Timestamp, std::map<DeviceId, double>> hourly_values(const fs::path& in_dir, Pollutant pollutant);

struct GridOptions {
    analytics::GridSpec spec;
    double power = analytics::kDefaultPower;
    std::vector<std::size_t> subsets{4, 12};
    std::uint64_t seed = 0;
    std::optional<Timestamp> hour;  // unset: every hour with data
    bool write_grids = true;
    bool write_sparse_grids = false;
};

struct HourResult {
    Timestamp hour = 0;
    Pollutant pollutant = Pollutant::PM10;
    double mean = 0.0;
    double max = 0.0;
    std::map<std::size_t, double> rmse;  // subset size -> rmse vs full grid
};

struct GridResult {
    std::map<std::size_t, std::vector<DeviceId>> subsets;
    std::vector<HourResult> hours;
};

/// grids/<pollutant>_<hour>.{csv,pgm} and sparse/rmse.csv under `out_dir`.
GridResult grid_stage(const fs::path& in_dir, const fieldsim::DeploymentMap& deployment, const GridOptions& options,
                      const fs::path& out_dir);

/// Hourly PM10 correlation vs distance; writes `out_csv` and, when pairs were skipped, a
/// `.notices.txt` next to it.
analytics::CorrelationResult correlate_stage(const fs::path& in_dir, const fieldsim::DeploymentMap& deployment,
                                             std::size_t min_overlap, const fs::path& out_csv);

struct FitResult {
    std::optional<analytics::ExpFitModel> model;
    std::optional<double> knee_m;
    std::string error;
};

/// Writes the fit report; a failed fit is recorded in the report and returned in `error`.
FitResult fit_stage(const fs::path& correlation_csv, const analytics::FitOptions& options, double knee_threshold,
                    const fs::path& out_json);

// ---------------------------------------------------------------------------
// Whole run

struct RunOptions {
    Transport transport = Transport::InProcess;
    bool write_grids = true;
    /// Contents of the scenario file, hashed into the manifest.
    std::string scenario_text;
};

struct RunSummary {
    SimulateResult sim;
    std::size_t devices = 0;
    std::size_t models = 0;
    pipeline::CleanReport clean;
    GridResult grids;
    std::size_t correlation_points = 0;
    FitResult fit;
    std::string manifest_sha256;
};

RunSummary run_scenario(const scenario::Scenario& s, const fs::path& out, const RunOptions& options = {});

/// Lists every file under `out` with its SHA-256 into manifest.json and writes the digest of that
/// file to manifest.sha256. Returns the digest.
std::string write_manifest(const fs::path& out, const scenario::Scenario& s, const RunSummary& summary,
                           const std::string& scenario_text);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

}  // namespace aqnet::run

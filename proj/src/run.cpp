#include "aqnet/run.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "aqnet/csv.hpp"
#include "aqnet/gateway_net.hpp"
#include "aqnet/random.hpp"
#include "json.hpp"

namespace aqnet::run {

// ---------------------------------------------------------------------------
// Fleet

namespace {

std::vector<device::OutageSchedule::Interval> random_outages(const scenario::Scenario& s, DeviceId id) {
    std::vector<device::OutageSchedule::Interval> out;
    if (!s.outages.random || s.outages.random->per_device == 0) return out;
    const auto& spec = *s.outages.random;
    Rng rng = make_rng(s.seed, stream::kOutage, id);
    std::uniform_int_distribution<int> length(spec.min_samples, spec.max_samples);
    for (const auto& p : s.periods) {
        const Timestamp n_samples = (p.end() - p.start) / device::kSamplePeriod;
        std::vector<device::OutageSchedule::Interval> placed;
        for (int k = 0; k < spec.per_device; ++k) {
            const Timestamp len = length(rng);
            // keep the last sample of the period online so nothing is left buffered
            if (len + 1 >= n_samples) continue;
            std::uniform_int_distribution<Timestamp> first(0, n_samples - 1 - len);
            for (int attempt = 0; attempt < 100; ++attempt) {
                const Timestamp a = p.start + first(rng) * device::kSamplePeriod;
                const Timestamp b = a + len * device::kSamplePeriod;
                const bool clash = std::any_of(placed.begin(), placed.end(), [&](const auto& iv) {
                    return a <= iv.end && iv.start <= b;  // keep a gap of one sample between outages
                });
                if (!clash) {
                    placed.push_back({a, b});
                    break;
                }
            }
        }
        out.insert(out.end(), placed.begin(), placed.end());
    }
    return out;
}

std::vector<device::OutageSchedule::Interval> merge_intervals(std::vector<device::OutageSchedule::Interval> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    std::vector<device::OutageSchedule::Interval> out;
    for (const auto& iv : v) {
        if (!out.empty() && iv.start <= out.back().end) {
            out.back().end = std::max(out.back().end, iv.end);
        } else {
            out.push_back(iv);
        }
    }
    return out;
}

}  // namespace

Fleet build_fleet(const scenario::Scenario& s) {
    Fleet fleet;
    fieldsim::Layout layout;
    layout.kind = s.layout;
    layout.seed = s.seed;
    layout.cell_m = s.cell_m;
    fleet.deployment = fieldsim::generate_deployment(s.region(), s.n_devices, layout);

    for (const auto& o : s.sensors.overrides) {
        if (!fleet.deployment.find(o.device)) {
            throw ConfigError("sensor override for device " + std::to_string(o.device) + " which is not deployed");
        }
    }
    for (const auto& o : s.outages.explicit_intervals) {
        if (!fleet.deployment.find(o.device)) {
            throw ConfigError("explicit outage for device " + std::to_string(o.device) + " which is not deployed");
        }
    }

    for (const auto& e : fleet.deployment.entries) {
        DeviceModel m;
        m.id = e.device_id;
        Rng rng = make_rng(s.seed, stream::kSensorModel, e.device_id);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double ua = unit(rng);
        const double ub = unit(rng);
        m.error.alpha = s.sensors.alpha.lo + (s.sensors.alpha.hi - s.sensors.alpha.lo) * ua;
        m.error.beta = s.sensors.beta.lo + (s.sensors.beta.hi - s.sensors.beta.lo) * ub;
        m.error.noise_sigma = s.sensors.noise_sigma;
        m.error.rh_inflation = s.sensors.rh_inflation;
        m.error.spike_rate = s.sensors.spike_rate;
        m.error.spike_magnitude = s.sensors.spike_magnitude;
        for (const auto& o : s.sensors.overrides) {
            if (o.device != e.device_id) continue;
            if (o.alpha) m.error.alpha = *o.alpha;
            if (o.beta) m.error.beta = *o.beta;
            if (o.noise_sigma) m.error.noise_sigma = *o.noise_sigma;
            if (o.rh_inflation) m.error.rh_inflation = *o.rh_inflation;
            if (o.spike_rate) m.error.spike_rate = *o.spike_rate;
            if (o.spike_magnitude) m.error.spike_magnitude = *o.spike_magnitude;
        }
        m.error.validate();

        auto intervals = random_outages(s, e.device_id);
        for (const auto& o : s.outages.explicit_intervals) {
            if (o.device == e.device_id) intervals.push_back({o.start, o.end});
        }
        if (!intervals.empty()) m.outages = device::OutageSchedule(merge_intervals(std::move(intervals)));
        fleet.devices.push_back(std::move(m));
    }
    return fleet;
}

SimStats simulate_fleet(const scenario::Scenario& s, const Fleet& fleet, const fieldsim::GroundTruthField& field,
                        const SimSetup& setup, const FrameSink& sink) {
    const std::size_t n = fleet.devices.size();
    std::vector<device::DeviceState> states;
    std::vector<Rng> noise;
    std::vector<GeoPoint> loc;
    states.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        states.emplace_back(fleet.devices[k].id);
        noise.push_back(make_rng(s.seed, setup.noise_stream, fleet.devices[k].id));
        loc.push_back(setup.location ? *setup.location : fleet.deployment.entries[k].location);
    }
    Rng weather_rng = make_rng(s.seed, stream::kWeather, setup.weather_index);

    SimStats stats;
    for (const auto& p : setup.periods) {
        for (Timestamp t = p.start; t < p.end(); t += device::kSamplePeriod) {
            if (setup.on_step) setup.on_step(t);
            const fieldsim::Weather w = fieldsim::weather_at(s.weather, t, weather_rng);
            for (std::size_t k = 0; k < n; ++k) {
                const auto& model = fleet.devices[k];
                const fieldsim::Concentration c = field.at(loc[k], t);
                device::SensorReading r;
                r.created_at = t;
                r.pm10 = static_cast<float>(fieldsim::sample_sensor(model.error, c.pm10, w.rh, noise[k]));
                r.pm25 = static_cast<float>(fieldsim::sample_sensor(model.error, c.pm25, w.rh, noise[k]));
                r.temp = static_cast<float>(w.temp);
                r.rh = static_cast<float>(w.rh);
                const auto conn = setup.outages ? model.outages.at(t) : device::Connectivity::Online;
                for (const auto& f : states[k].tick(t, r, conn)) {
                    ++stats.frames;
                    sink(f);
                }
            }
        }
    }
    for (const auto& st : states) {
        stats.sensed += st.sensed();
        stats.transmitted += st.transmitted();
        stats.dropped += st.dropped();
        stats.buffered_at_end += st.stored();
    }
    return stats;
}

FrameSink store_sink(gateway::Store& store) {
    return [&store](const device::Frame& f) {
        const auto res = store.handle_frame(f.bytes);
        if (const auto* err = std::get_if<device::FrameError>(&res)) {
            throw Error("gateway rejected frame from device " + std::to_string(f.device_id) + ": " +
                        std::string(device::to_string(*err)));
        }
    };
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    return in;
}

std::string device_file_name(DeviceId id) { return "device_" + std::to_string(id) + ".csv"; }

std::vector<pipeline::StagedRow> read_rows(const fs::path& path) {
    auto in = open_in(path);
    try {
        return pipeline::read_staged_csv(in);
    } catch (const SchemaError& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

void export_device(const gateway::Store& store, DeviceId id, Timestamp from, Timestamp to, const fs::path& path) {
    auto out = open_out(path);
    std::vector<device::SensorReading> rows;
    try {
        rows = store.readings(id, from, to);
    } catch (const NotFound&) {
    }
    gateway::write_readings_csv(rows, out);
}

std::vector<scenario::Period> colocation_windows(const scenario::Scenario& s) {
    std::vector<scenario::Period> out;
    for (const auto& p : s.periods) out.push_back({p.start, s.calibration.days});
    // windows may not overlap when periods are shorter than the colocation run
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].start < out[i - 1].end()) {
            throw ConfigError("calibration days exceed the gap between periods");
        }
    }
    return out;
}

}  // namespace

std::map<DeviceId, fs::path> device_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::map<DeviceId, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("device_", 0) != 0 || entry.path().extension() != ".csv") continue;
        const std::string digits = name.substr(7, name.size() - 11);
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            continue;
        }
        const long id = std::stol(digits);
        if (id < 0 || id > 65535) continue;
        out[static_cast<DeviceId>(id)] = entry.path();
    }
    return out;
}

void write_reference_csv(const std::vector<std::pair<Timestamp, fieldsim::Concentration>>& rows, std::ostream& out) {
    out << "created_at,pm10,pm25\n";
    for (const auto& [t, c] : rows) {
        out << format_iso8601(t) << ',' << csv::format(c.pm10) << ',' << csv::format(c.pm25) << '\n';
    }
}

std::vector<std::pair<Timestamp, fieldsim::Concentration>> read_reference_csv(std::istream& in) {
    static constexpr std::array<std::string_view, 3> kCols{"created_at", "pm10", "pm25"};
    std::string line;
    if (!csv::read_line(in, line)) throw SchemaError("reference csv: empty file");
    csv::expect_header(line, kCols, "reference csv");
    std::vector<std::pair<Timestamp, fieldsim::Concentration>> out;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != kCols.size()) {
            throw SchemaError("reference csv line " + std::to_string(line_no) + ": expected 3 fields");
        }
        Timestamp t = 0;
        try {
            t = parse_timestamp(f[0]);
        } catch (const DomainError& e) {
            throw SchemaError("reference csv line " + std::to_string(line_no) + ", column 'created_at': " + e.what());
        }
        out.push_back({t, {csv::parse_double(f[1], line_no, "pm10"), csv::parse_double(f[2], line_no, "pm25")}});
    }
    return out;
}

SimulateResult simulate_stage(const scenario::Scenario& s, const fs::path& out, const SimulateOptions& options) {
    const Fleet fleet = build_fleet(s);
    const fieldsim::GroundTruthField field(scenario::build_field(s));
    fs::create_directories(out);
    {
        auto f = open_out(out / "deployment.csv");
        fieldsim::write_deployment_csv(fleet.deployment, f);
    }

    SimulateResult result;
    gateway::Store store;
    for (const auto& e : fleet.deployment.entries) store.register_device(e);

    SimSetup setup;
    setup.periods = s.periods;
    if (options.transport == Transport::Tcp) {
        gateway::IngestServer server(store);
        const std::uint16_t port = server.start("127.0.0.1", 0);
        gateway::IngestClient client("127.0.0.1", port);
        result.deployment = simulate_fleet(s, fleet, field, setup, [&client](const device::Frame& f) {
            const auto reply = client.send(f.bytes);
            if (reply.status != 0) {
                throw Error("gateway rejected frame from device " + std::to_string(f.device_id) + " with status " +
                            std::to_string(reply.status));
            }
        });
        server.stop();
    } else {
        result.deployment = simulate_fleet(s, fleet, field, setup, store_sink(store));
    }
    result.gateway_readings = store.readings_inserted();

    const Timestamp from = s.start();
    const Timestamp to = s.end();
    for (const auto& e : fleet.deployment.entries) {
        export_device(store, e.device_id, from, to, out / "raw" / device_file_name(e.device_id));
    }

    if (s.calibration.mode == scenario::CalibrationMode::None) return result;

    const GeoPoint point = s.region().center();
    std::vector<scenario::Period> windows;
    if (s.calibration.mode == scenario::CalibrationMode::Self) {
        windows = s.periods;
        fs::create_directories(out / "colocation");
        for (const auto& e : fleet.deployment.entries) {
            fs::copy_file(out / "raw" / device_file_name(e.device_id), out / "colocation" / device_file_name(e.device_id),
                          fs::copy_options::overwrite_existing);
        }
    } else {
        windows = colocation_windows(s);
        gateway::Store coloc;
        SimSetup cs;
        cs.periods = windows;
        cs.location = point;
        cs.outages = false;
        cs.noise_stream = stream::kColocationNoise;
        cs.weather_index = 1;
        result.colocation = simulate_fleet(s, fleet, field, cs, store_sink(coloc));
        for (const auto& e : fleet.deployment.entries) {
            export_device(coloc, e.device_id, windows.front().start, windows.back().end(),
                          out / "colocation" / device_file_name(e.device_id));
        }
    }
    std::vector<std::pair<Timestamp, fieldsim::Concentration>> ref;
    for (const auto& w : windows) {
        for (Timestamp t = w.start; t < w.end(); t += device::kSamplePeriod) ref.emplace_back(t, field.at(point, t));
    }
    auto f = open_out(out / "colocation" / "reference.csv");
    write_reference_csv(ref, f);
    return result;
}

std::vector<pipeline::CalibrationModel> fit_models_stage(const fs::path& colocation_dir, const SeasonCalendar& calendar,
                                                         const fs::path& models_out) {
    std::vector<std::pair<Timestamp, fieldsim::Concentration>> ref;
    {
        auto in = open_in(colocation_dir / "reference.csv");
        ref = read_reference_csv(in);
    }
    pipeline::TimeSeries ref10;
    pipeline::TimeSeries ref25;
    for (const auto& [t, c] : ref) {
        ref10.points.push_back({t, c.pm10});
        ref25.points.push_back({t, c.pm25});
    }

    std::vector<pipeline::CalibrationModel> models;
    for (const auto& [id, path] : device_files(colocation_dir)) {
        const auto rows = read_rows(path);
        if (rows.empty()) continue;
        const auto rh = pipeline::extract(id, rows, pipeline::Field::RH);
        for (Pollutant pol : {Pollutant::PM10, Pollutant::PM25}) {
            const auto raw = pipeline::extract(id, rows, pol == Pollutant::PM10 ? pipeline::Field::PM10 : pipeline::Field::PM25);
            const auto masked = pipeline::filter_unreliable(raw, rh);
            std::map<Season, pipeline::TimeSeries> by_season;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (masked.removed[i]) continue;
                auto& series = by_season[calendar.at(raw.points[i].t)];
                series.device_id = id;
                series.points.push_back(raw.points[i]);
            }
            for (const auto& [season, series] : by_season) {
                models.push_back(pipeline::fit_calibration(series, pol == Pollutant::PM10 ? ref10 : ref25, pol, calendar));
            }
        }
    }
    std::sort(models.begin(), models.end(), [](const auto& a, const auto& b) {
        return std::tie(a.device_id, a.season, a.pollutant) < std::tie(b.device_id, b.season, b.pollutant);
    });
    auto out = open_out(models_out);
    pipeline::write_models_csv(models, out);
    return models;
}

pipeline::CleanReport clean_stage(const fs::path& in_dir, const fs::path& out_dir) {
    pipeline::CleanReport report;
    fs::create_directories(out_dir);
    for (const auto& [id, path] : device_files(in_dir)) {
        const auto rows = read_rows(path);
        std::vector<pipeline::StagedRow> cleaned;
        try {
            cleaned = pipeline::clean_rows(rows, &report);
        } catch (const InsufficientData& e) {
            throw InsufficientData("device " + std::to_string(id) + ": " + e.what());
        }
        auto out = open_out(out_dir / device_file_name(id));
        pipeline::write_staged_csv(cleaned, "clean", out);
    }
    return report;
}

void apply_models_stage(const fs::path& in_dir, const std::vector<pipeline::CalibrationModel>& models,
                        const SeasonCalendar& calendar, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    for (const auto& [id, path] : device_files(in_dir)) {
        auto rows = read_rows(path);
        if (!models.empty()) rows = pipeline::calibrate_rows(rows, id, models, calendar);
        auto out = open_out(out_dir / device_file_name(id));
        pipeline::write_staged_csv(rows, "calibrated", out);
    }
}

void stats_stage(const fs::path& in_dir, const SeasonCalendar& calendar, const fs::path& out_csv) {
    auto out = open_out(out_csv);
    out << "device_id,pollutant,season,mean,variance,n_hours\n";
    for (const auto& [id, path] : device_files(in_dir)) {
        const auto rows = read_rows(path);
        for (Pollutant pol : {Pollutant::PM10, Pollutant::PM25}) {
            const auto series =
                pipeline::extract(id, rows, pol == Pollutant::PM10 ? pipeline::Field::PM10 : pipeline::Field::PM25);
            for (const auto& [season, st] : pipeline::seasonal_stats(series, calendar)) {
                out << id << ',' << to_string(pol) << ',' << to_string(season) << ',' << csv::format(st.mean) << ','
                    << csv::format(st.variance) << ',' << st.n_hours << '\n';
            }
        }
    }
}

std::map<Timestamp, std::map<DeviceId, double>> hourly_values(const fs::path& in_dir, Pollutant pollutant) {
    std::map<Timestamp, std::map<DeviceId, double>> out;
    for (const auto& [id, path] : device_files(in_dir)) {
        const auto rows = read_rows(path);
        const auto series =
            pipeline::extract(id, rows, pollutant == Pollutant::PM10 ? pipeline::Field::PM10 : pipeline::Field::PM25);
        for (const auto& p : pipeline::hourly_means(series).points) out[p.t][id] = p.v;
    }
    return out;
}

namespace {

void write_grid_files(const analytics::Grid& g, const fs::path& stem) {
    {
        auto out = open_out(fs::path(stem).concat(".csv"));
        analytics::write_grid_csv(g, out);
    }
    auto out = open_out(fs::path(stem).concat(".pgm"));
    analytics::write_grid_pgm(g, out);
}

}  // namespace

GridResult grid_stage(const fs::path& in_dir, const fieldsim::DeploymentMap& deployment, const GridOptions& options,
                      const fs::path& out_dir) {
    options.spec.validate();
    GridResult result;
    std::vector<DeviceId> ids;
    for (const auto& e : deployment.entries) ids.push_back(e.device_id);
    for (std::size_t k : options.subsets) {
        result.subsets[k] = analytics::choose_spread_subset(deployment, std::min(k, ids.size()), ids, options.seed);
    }

    std::ostringstream rmse_csv;
    rmse_csv << "hour,pollutant,k,devices,rmse\n";
    for (Pollutant pol : {Pollutant::PM10, Pollutant::PM25}) {
        const auto values = hourly_values(in_dir, pol);
        std::vector<Timestamp> hours;
        if (options.hour) {
            const Timestamp h = floor_to(*options.hour, kSecondsPerHour);
            if (!values.count(h)) throw DomainError("no device has data for hour " + format_iso8601(h));
            hours.push_back(h);
        } else {
            for (const auto& [h, v] : values) hours.push_back(h);
        }
        for (Timestamp h : hours) {
            const auto& vals = values.at(h);
            const auto samples = analytics::samples_for(deployment, vals);
            const analytics::Grid full = analytics::idw_grid(samples, options.spec, options.power, h, pol);
            const std::string tag = std::string(to_string(pol)) + "_" + format_hour_tag(h);
            if (options.write_grids) write_grid_files(full, out_dir / "grids" / tag);

            HourResult hr;
            hr.hour = h;
            hr.pollutant = pol;
            hr.mean = full.mean();
            hr.max = full.max();
            for (const auto& [k, subset] : result.subsets) {
                const auto sparse_samples = analytics::samples_for(deployment, vals, subset);
                const analytics::Grid sparse = analytics::idw_grid(sparse_samples, options.spec, options.power, h, pol);
                const double rmse = analytics::grid_rmse(full, sparse);
                hr.rmse[k] = rmse;
                if (options.write_sparse_grids) {
                    write_grid_files(sparse, out_dir / "grids" / (tag + "_k" + std::to_string(k)));
                }
                rmse_csv << format_iso8601(h) << ',' << to_string(pol) << ',' << k << ',';
                for (std::size_t i = 0; i < subset.size(); ++i) rmse_csv << (i ? ";" : "") << subset[i];
                rmse_csv << ',' << csv::format(rmse) << '\n';
            }
            result.hours.push_back(hr);
        }
    }
    if (!options.subsets.empty()) {
        auto out = open_out(out_dir / "sparse" / "rmse.csv");
        out << rmse_csv.str();
    }
    return result;
}

analytics::CorrelationResult correlate_stage(const fs::path& in_dir, const fieldsim::DeploymentMap& deployment,
                                             std::size_t min_overlap, const fs::path& out_csv) {
    std::map<DeviceId, pipeline::TimeSeries> hourly;
    for (const auto& [id, path] : device_files(in_dir)) {
        const auto rows = read_rows(path);
        if (rows.empty()) continue;
        hourly[id] = pipeline::hourly_means(pipeline::extract(id, rows, pipeline::Field::PM10));
    }
    auto result = analytics::correlation_vs_distance(deployment, hourly, min_overlap);
    {
        auto out = open_out(out_csv);
        analytics::write_correlation_csv(result.points, out);
    }
    const fs::path notices = fs::path(out_csv).replace_extension(".notices.txt");
    if (!result.notices.empty()) {
        auto out = open_out(notices);
        for (const auto& n : result.notices) out << n << '\n';
    } else if (fs::exists(notices)) {
        fs::remove(notices);
    }
    return result;
}

FitResult fit_stage(const fs::path& correlation_csv, const analytics::FitOptions& options, double knee_threshold,
                    const fs::path& out_json) {
    std::vector<analytics::CorrelationPoint> points;
    {
        auto in = open_in(correlation_csv);
        points = analytics::read_correlation_csv(in);
    }
    std::vector<std::pair<double, double>> xy;
    for (const auto& p : points) xy.emplace_back(p.distance_m, p.tau);

    FitResult result;
    try {
        result.model = analytics::fit_two_term_exp(xy, options);
    } catch (const InsufficientData& e) {
        result.error = e.what();
    } catch (const FitError& e) {
        result.error = e.what();
    }
    if (result.model) {
        try {
            result.knee_m = analytics::knee_distance(*result.model, knee_threshold);
        } catch (const DomainError& e) {
            result.error = e.what();
        }
    }
    auto out = open_out(out_json);
    if (result.model) {
        std::string report = analytics::fit_report_json(*result.model, knee_threshold, result.knee_m);
        if (!result.error.empty()) {
            auto j = nlohmann::ordered_json::parse(report);
            j["error"] = result.error;
            report = j.dump(2) + "\n";
        }
        out << report;
    } else {
        nlohmann::ordered_json j;
        j["model"] = "a*exp(b*x) + c*exp(d*x)";
        j["n_points"] = xy.size();
        j["knee_threshold"] = knee_threshold;
        j["error"] = result.error;
        out << j.dump(2) << "\n";
    }
    return result;
}

// ---------------------------------------------------------------------------
// Run

RunSummary run_scenario(const scenario::Scenario& s, const fs::path& out, const RunOptions& options) {
    s.validate();
    if (fs::exists(out)) {
        // stale artifacts would leak into the manifest
        for (const char* sub : {"raw", "colocation", "calibration", "clean", "calibrated", "stats", "grids", "sparse"}) {
            fs::remove_all(out / sub);
        }
    }
    fs::create_directories(out);
    RunSummary summary;
    summary.sim = simulate_stage(s, out, {options.transport});
    summary.devices = s.n_devices;

    const SeasonCalendar& calendar = s.field.calendar;
    std::vector<pipeline::CalibrationModel> models;
    if (s.calibration.mode != scenario::CalibrationMode::None) {
        models = fit_models_stage(out / "colocation", calendar, out / "calibration" / "models.csv");
    }
    summary.models = models.size();
    summary.clean = clean_stage(out / "raw", out / "clean");
    apply_models_stage(out / "clean", models, calendar, out / "calibrated");
    stats_stage(out / "calibrated", calendar, out / "stats" / "seasonal.csv");

    fieldsim::DeploymentMap deployment;
    {
        auto in = open_in(out / "deployment.csv");
        deployment = fieldsim::read_deployment_csv(in);
    }
    GridOptions go;
    go.spec = {s.region(), s.analytics.nx, s.analytics.ny};
    go.power = s.analytics.power;
    go.subsets = s.analytics.subsets;
    go.seed = s.seed;
    go.write_grids = options.write_grids;
    summary.grids = grid_stage(out / "calibrated", deployment, go, out);

    summary.correlation_points =
        correlate_stage(out / "calibrated", deployment, s.analytics.min_overlap_hours, out / "correlation.csv").points.size();
    analytics::FitOptions fo;
    fo.bin_width_m = s.analytics.fit_bin_m;
    summary.fit = fit_stage(out / "correlation.csv", fo, s.analytics.knee_threshold, out / "fit_report.json");
    summary.manifest_sha256 = write_manifest(out, s, summary, options.scenario_text);
    return summary;
}

// ---------------------------------------------------------------------------
// Manifest

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

std::string write_manifest(const fs::path& out, const scenario::Scenario& s, const RunSummary& summary,
                           const std::string& scenario_text) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), out).generic_string();
        if (rel == "manifest.json" || rel == "manifest.sha256") continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());

    nlohmann::ordered_json j;
    j["tool"] = "aqnet";
    j["version"] = kVersion;
    j["scenario"] = s.name;
    j["seed"] = s.seed;
    if (!scenario_text.empty()) j["scenario_sha256"] = sha256_hex(scenario_text);
    j["simulation"] = {
        {"sensed", summary.sim.deployment.sensed},
        {"transmitted", summary.sim.deployment.transmitted},
        {"dropped", summary.sim.deployment.dropped},
        {"buffered_at_end", summary.sim.deployment.buffered_at_end},
        {"frames", summary.sim.deployment.frames},
        {"gateway_readings", summary.sim.gateway_readings},
    };
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& rel : files) {
        list.push_back({{"path", rel}, {"bytes", fs::file_size(out / rel)}, {"sha256", sha256_file(out / rel)}});
    }
    j["files"] = std::move(list);
    const std::string text = j.dump(2) + "\n";
    {
        auto f = open_out(out / "manifest.json");
        f << text;
    }
    const std::string digest = sha256_hex(text);
    auto f = open_out(out / "manifest.sha256");
    f << digest << "  manifest.json\n";
    return digest;
}

}  // namespace aqnet::run

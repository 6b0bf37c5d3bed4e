// aqnet: scenario runner and file-based pipeline stages.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 runtime error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "aqnet/analytics.hpp"
#include "aqnet/gateway.hpp"
#include "aqnet/gateway_net.hpp"
#include "aqnet/run.hpp"
#include "aqnet/scenario.hpp"

namespace fs = std::filesystem;
using namespace aqnet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Loaded {
    scenario::Scenario scenario;
    std::string text;
};

Loaded load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return {scenario::parse_scenario(ss.str(), path), ss.str()};
}

std::pair<int, int> parse_grid(const std::string& s) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument("no x");
        std::size_t used = 0;
        const int nx = std::stoi(s.substr(0, x), &used);
        if (used != x) throw std::invalid_argument("nx");
        const int ny = std::stoi(s.substr(x + 1), &used);
        if (used != s.size() - x - 1) throw std::invalid_argument("ny");
        if (nx < 2 || ny < 2) throw ConfigError("--grid needs at least 2x2 cells");
        return {nx, ny};
    } catch (const std::logic_error&) {
        throw ConfigError("--grid expects <nx>x<ny>, got '" + s + "'");
    }
}

Timestamp parse_hour(const std::string& s) {
    try {
        return parse_timestamp(s);
    } catch (const DomainError& e) {
        throw ConfigError(std::string("--hour: ") + e.what());
    }
}

fieldsim::DeploymentMap read_deployment(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    return fieldsim::read_deployment_csv(in);
}

/// Region for grids: the scenario's, else the deployment extent padded by 10 %.
BBox grid_region(const std::optional<Loaded>& sc, const fieldsim::DeploymentMap& d) {
    if (sc) return sc->scenario.region();
    if (d.entries.empty()) throw ConfigError("empty deployment");
    BBox b{d.entries.front().location, d.entries.front().location};
    for (const auto& e : d.entries) {
        b.south_west.lat = std::min(b.south_west.lat, e.location.lat);
        b.south_west.lon = std::min(b.south_west.lon, e.location.lon);
        b.north_east.lat = std::max(b.north_east.lat, e.location.lat);
        b.north_east.lon = std::max(b.north_east.lon, e.location.lon);
    }
    const double plat = std::max(1e-4, 0.1 * (b.north_east.lat - b.south_west.lat));
    const double plon = std::max(1e-4, 0.1 * (b.north_east.lon - b.south_west.lon));
    b.south_west.lat -= plat;
    b.south_west.lon -= plon;
    b.north_east.lat += plat;
    b.north_east.lon += plon;
    return b;
}

void print_fit(const run::FitResult& r) {
    if (r.model) {
        const auto& m = *r.model;
        std::cout << "a=" << m.a << " b=" << m.b << " c=" << m.c << " d=" << m.d << " rmse=" << m.residual_rmse
                  << "\n";
    }
    if (r.knee_m) std::cout << "knee_distance_m=" << *r.knee_m << "\n";
    if (!r.error.empty()) std::cerr << "fit: " << r.error << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aqnet: dense PM sensor network simulator and analytics"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out;
    std::string in;
    std::uint64_t seed = 0;
    double power = 0.0;
    std::string grid;
    std::vector<std::size_t> subsets;
    std::string hour;
    bool no_grids = false;
    bool tcp = false;

    auto* run_cmd = app.add_subcommand("run", "simulate, ingest, clean, calibrate and analyse a scenario");
    run_cmd->add_option("--scenario", scenario_path, "scenario file")->required();
    run_cmd->add_option("--out", out, "output directory")->required();
    run_cmd->add_option("--seed", seed, "override the scenario seed");
    run_cmd->add_option("--power", power, "IDW power");
    run_cmd->add_option("--grid", grid, "grid size <nx>x<ny>");
    run_cmd->add_option("--subset", subsets, "sparse subset sizes (repeatable)");
    run_cmd->add_flag("--no-grids", no_grids, "skip per-hour grid files");
    run_cmd->add_flag("--tcp", tcp, "send frames to the gateway over loopback TCP");

    auto* sim_cmd = app.add_subcommand("simulate", "simulate the fleet and export raw gateway data");
    sim_cmd->add_option("--scenario", scenario_path, "scenario file")->required();
    sim_cmd->add_option("--out", out, "output directory")->required();
    sim_cmd->add_option("--seed", seed, "override the scenario seed");
    sim_cmd->add_flag("--tcp", tcp, "send frames to the gateway over loopback TCP");

    std::string data_dir;
    std::string host = "127.0.0.1";
    std::uint16_t port = 7070;
    std::uint16_t http_port = 8080;
    std::string clock = "sim";
    double speed = 60.0;
    double duration = 0.0;
    auto* serve_cmd = app.add_subcommand("serve", "run the gateway (TCP ingest + HTTP query API)");
    serve_cmd->add_option("--data", data_dir, "durable store directory")->required();
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "ingest TCP port (0 = any)");
    serve_cmd->add_option("--http-port", http_port, "HTTP query port (0 = any)");
    serve_cmd->add_option("--scenario", scenario_path, "drive a simulated fleet against the gateway");
    serve_cmd->add_option("--seed", seed, "override the scenario seed");
    serve_cmd->add_option("--clock", clock, "sim (as fast as possible) or wall (paced)")
        ->check(CLI::IsMember({"sim", "wall"}));
    serve_cmd->add_option("--speed", speed, "wall clock: simulated seconds per real second");
    serve_cmd->add_option("--duration", duration, "seconds to keep serving after the fleet finishes (0 = until SIGINT)");

    auto* clean_cmd = app.add_subcommand("clean", "filter, remove outliers and interpolate (file or directory)");
    clean_cmd->add_option("--in", in, "gateway export CSV or directory of device_<id>.csv")->required();
    clean_cmd->add_option("--out", out, "output CSV or directory")->required();

    std::string colocation;
    std::string models;
    auto* cal_cmd = app.add_subcommand("calibrate", "fit models from colocation data and/or apply them");
    cal_cmd->add_option("--colocation", colocation, "colocation directory (device files + reference.csv)");
    cal_cmd->add_option("--models", models, "models CSV (written when fitting, read when applying)")->required();
    cal_cmd->add_option("--in", in, "directory of cleaned device files to calibrate");
    cal_cmd->add_option("--out", out, "output directory for calibrated files");
    cal_cmd->add_option("--scenario", scenario_path, "scenario (season calendar)");

    auto* stats_cmd = app.add_subcommand("stats", "seasonal mean and variance of hourly means");
    stats_cmd->add_option("--in", in, "directory of device files")->required();
    stats_cmd->add_option("--out", out, "output CSV")->required();
    stats_cmd->add_option("--scenario", scenario_path, "scenario (season calendar)");

    std::string deployment_path;
    auto* grid_cmd = app.add_subcommand("grid", "IDW grids and sparse-subset RMSE");
    grid_cmd->add_option("--in", in, "directory of calibrated device files")->required();
    grid_cmd->add_option("--deployment", deployment_path, "deployment CSV")->required();
    grid_cmd->add_option("--out", out, "output directory")->required();
    grid_cmd->add_option("--scenario", scenario_path, "scenario (region, defaults)");
    grid_cmd->add_option("--hour", hour, "single hour (ISO 8601)");
    grid_cmd->add_option("--subset", subsets, "sparse subset sizes (repeatable)");
    grid_cmd->add_option("--power", power, "IDW power");
    grid_cmd->add_option("--grid", grid, "grid size <nx>x<ny>");
    grid_cmd->add_option("--seed", seed, "subset selection seed");
    grid_cmd->add_flag("--no-grids", no_grids, "skip full grid files");

    std::size_t min_overlap = analytics::kMinOverlapHours;
    auto* corr_cmd = app.add_subcommand("correlate", "Kendall tau vs distance over device pairs");
    corr_cmd->add_option("--in", in, "directory of calibrated device files")->required();
    corr_cmd->add_option("--deployment", deployment_path, "deployment CSV")->required();
    corr_cmd->add_option("--out", out, "output CSV")->required();
    corr_cmd->add_option("--min-overlap", min_overlap, "minimum overlapping hours per pair");

    double bin_m = 0.0;
    double knee_threshold = analytics::kDefaultKneeThreshold;
    auto* fit_cmd = app.add_subcommand("fit", "two-term exponential fit and knee distance");
    fit_cmd->add_option("--in", in, "correlation CSV")->required();
    fit_cmd->add_option("--out", out, "fit report (JSON)")->required();
    fit_cmd->add_option("--bin", bin_m, "average points into distance bins of this width (m)");
    fit_cmd->add_option("--knee-threshold", knee_threshold, "fraction of the initial slope defining the knee");
    fit_cmd->add_option("--scenario", scenario_path, "scenario (fit defaults)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        std::optional<Loaded> sc;
        if (!scenario_path.empty()) {
            sc = load(scenario_path);
            auto* cmd = app.get_subcommands().front();
            if (const auto* opt = cmd->get_option_no_throw("--seed"); opt && opt->count() > 0) sc->scenario.seed = seed;
        }
        const SeasonCalendar calendar = sc ? sc->scenario.field.calendar : SeasonCalendar{};

        if (run_cmd->parsed()) {
            auto& s = sc->scenario;
            if (run_cmd->count("--power")) s.analytics.power = power;
            if (run_cmd->count("--grid")) std::tie(s.analytics.nx, s.analytics.ny) = parse_grid(grid);
            if (run_cmd->count("--subset")) s.analytics.subsets = subsets;
            s.validate();
            run::RunOptions ro;
            ro.transport = tcp ? run::Transport::Tcp : run::Transport::InProcess;
            ro.write_grids = !no_grids;
            ro.scenario_text = sc->text;
            const auto summary = run::run_scenario(s, out, ro);
            const auto& d = summary.sim.deployment;
            std::cout << "devices=" << summary.devices << " sensed=" << d.sensed << " stored=" << summary.sim.gateway_readings
                      << " dropped=" << d.dropped << " buffered_at_end=" << d.buffered_at_end << "\n";
            std::cout << "models=" << summary.models << " unreliable=" << summary.clean.unreliable
                      << " outliers=" << summary.clean.outliers << " correlation_pairs=" << summary.correlation_points
                      << "\n";
            print_fit(summary.fit);
            std::cout << "manifest_sha256=" << summary.manifest_sha256 << "\n";
            return 0;
        }
        if (sim_cmd->parsed()) {
            const auto r = run::simulate_stage(sc->scenario, out, {tcp ? run::Transport::Tcp : run::Transport::InProcess});
            std::cout << "sensed=" << r.deployment.sensed << " stored=" << r.gateway_readings
                      << " dropped=" << r.deployment.dropped << " buffered_at_end=" << r.deployment.buffered_at_end
                      << " frames=" << r.deployment.frames << "\n";
            return 0;
        }
        if (serve_cmd->parsed()) {
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            gateway::Store store{fs::path(data_dir)};
            gateway::IngestServer ingest(store);
            gateway::QueryServer query(store);
            const auto ingest_port = ingest.start(host, port);
            const auto query_port = query.start(host, http_port);
            std::cout << "ingest tcp://" << host << ':' << ingest_port << "  query http://" << host << ':' << query_port
                      << std::endl;
            if (sc) {
                const auto fleet = run::build_fleet(sc->scenario);
                for (const auto& e : fleet.deployment.entries) store.register_device(e);
                const fieldsim::GroundTruthField field(scenario::build_field(sc->scenario));
                gateway::IngestClient client(host == "0.0.0.0" ? "127.0.0.1" : host, ingest_port);
                run::SimSetup setup;
                setup.periods = sc->scenario.periods;
                if (clock == "wall") {
                    const auto step = std::chrono::duration<double>(static_cast<double>(device::kSamplePeriod) / speed);
                    setup.on_step = [step](Timestamp) {
                        if (g_stop) throw Error("interrupted");
                        std::this_thread::sleep_for(step);
                    };
                }
                const auto stats = run::simulate_fleet(sc->scenario, fleet, field, setup, [&](const device::Frame& f) {
                    const auto reply = client.send(f.bytes);
                    if (reply.status != 0) throw Error("frame rejected with status " + std::to_string(reply.status));
                });
                store.snapshot();
                std::cout << "fleet done: sensed=" << stats.sensed << " stored=" << store.readings_inserted()
                          << " dropped=" << stats.dropped << std::endl;
            }
            const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration);
            while (!g_stop && (duration <= 0.0 || std::chrono::steady_clock::now() < until)) {
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
            }
            query.stop();
            ingest.stop();
            store.snapshot();
            return 0;
        }
        if (clean_cmd->parsed()) {
            if (fs::is_directory(in)) {
                const auto r = run::clean_stage(in, out);
                std::cout << "unreliable=" << r.unreliable << " outliers=" << r.outliers << "\n";
            } else {
                std::ifstream is(in, std::ios::binary);
                if (!is) throw Error("cannot read " + in);
                const auto rows = pipeline::read_staged_csv(is);
                pipeline::CleanReport r;
                const auto cleaned = pipeline::clean_rows(rows, &r);
                std::ofstream os(out, std::ios::binary | std::ios::trunc);
                if (!os) throw Error("cannot write " + out);
                pipeline::write_staged_csv(cleaned, "clean", os);
                std::cout << "rows=" << cleaned.size() << " unreliable=" << r.unreliable << " outliers=" << r.outliers
                          << "\n";
            }
            return 0;
        }
        if (cal_cmd->parsed()) {
            if (colocation.empty() && in.empty()) throw ConfigError("calibrate needs --colocation and/or --in");
            std::vector<pipeline::CalibrationModel> fitted;
            if (!colocation.empty()) {
                fitted = run::fit_models_stage(colocation, calendar, models);
                std::cout << "models=" << fitted.size() << "\n";
            }
            if (!in.empty()) {
                if (out.empty()) throw ConfigError("calibrate --in needs --out");
                std::ifstream ms(models, std::ios::binary);
                if (!ms) throw Error("cannot read " + models);
                run::apply_models_stage(in, pipeline::read_models_csv(ms), calendar, out);
            }
            return 0;
        }
        if (stats_cmd->parsed()) {
            run::stats_stage(in, calendar, out);
            return 0;
        }
        if (grid_cmd->parsed()) {
            const auto deployment = read_deployment(deployment_path);
            run::GridOptions go;
            go.spec.bbox = grid_region(sc, deployment);
            if (sc) {
                go.spec.nx = sc->scenario.analytics.nx;
                go.spec.ny = sc->scenario.analytics.ny;
                go.power = sc->scenario.analytics.power;
                go.subsets = sc->scenario.analytics.subsets;
                go.seed = sc->scenario.seed;
            }
            if (grid_cmd->count("--grid")) std::tie(go.spec.nx, go.spec.ny) = parse_grid(grid);
            if (grid_cmd->count("--power")) go.power = power;
            if (grid_cmd->count("--subset")) go.subsets = subsets;
            if (grid_cmd->count("--seed")) go.seed = seed;
            if (!hour.empty()) {
                go.hour = parse_hour(hour);
                go.write_sparse_grids = true;
            }
            go.write_grids = !no_grids;
            const auto r = run::grid_stage(in, deployment, go, out);
            for (const auto& h : r.hours) {
                if (go.hour) {
                    for (const auto& [k, v] : h.rmse) {
                        std::cout << format_iso8601(h.hour) << ' ' << to_string(h.pollutant) << " k=" << k
                                  << " rmse=" << v << "\n";
                    }
                }
            }
            if (!go.hour) std::cout << "hours=" << r.hours.size() / 2 << "\n";
            return 0;
        }
        if (corr_cmd->parsed()) {
            const auto r = run::correlate_stage(in, read_deployment(deployment_path), min_overlap, out);
            std::cout << "pairs=" << r.points.size() << " skipped=" << r.notices.size() << "\n";
            return 0;
        }
        if (fit_cmd->parsed()) {
            analytics::FitOptions fo;
            fo.bin_width_m = bin_m;
            if (sc && !fit_cmd->count("--bin")) fo.bin_width_m = sc->scenario.analytics.fit_bin_m;
            if (sc && !fit_cmd->count("--knee-threshold")) knee_threshold = sc->scenario.analytics.knee_threshold;
            const auto r = run::fit_stage(in, fo, knee_threshold, out);
            print_fit(r);
            return r.model && r.knee_m ? 0 : kExitRuntime;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}

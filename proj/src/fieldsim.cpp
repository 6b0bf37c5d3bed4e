#include "aqnet/fieldsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "aqnet/csv.hpp"

namespace aqnet::fieldsim {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}
}  // namespace

// ---------------------------------------------------------------------------
// PlumeEvent

void PlumeEvent::validate() const {
    require(start < peak_time && peak_time < end, "plume event requires start < peak_time < end");
    require(sigma_m > 0.0, "plume event sigma must be > 0");
    require(peak >= 0.0, "plume event peak must be >= 0");
    require(center.valid(), "plume event center is not a valid coordinate");
}

double PlumeEvent::ramp(double t) const {
    const auto s = static_cast<double>(start);
    const auto p = static_cast<double>(peak_time);
    const auto e = static_cast<double>(end);
    if (t <= s || t >= e) return 0.0;
    if (t <= p) return (t - s) / (p - s);
    return (e - t) / (e - p);
}

double PlumeEvent::ramp(Timestamp t) const { return ramp(static_cast<double>(t)); }

// ---------------------------------------------------------------------------
// GroundTruthField

GroundTruthField::GroundTruthField(FieldConfig config) : config_(std::move(config)) {
    require(!config_.region.degenerate(), "field region is degenerate");
    for (Season s : kAllSeasons) {
        auto it = config_.baseline.find(s);
        require(it != config_.baseline.end(),
                "field baseline missing for season " + std::string(to_string(s)));
        require(it->second >= 0.0, "field baseline must be >= 0");
    }
    for (const auto& h : config_.diurnal) require(h.amplitude >= 0.0, "diurnal amplitude must be >= 0");
    for (const auto& e : config_.events) e.validate();
    for (const auto* tex : {&config_.texture, &config_.texture_pm25}) {
        require(tex->amplitude >= 0.0, "texture amplitude must be >= 0");
        require(tex->length_scale_m > 0.0, "texture length_scale must be > 0");
        require(tex->features >= 1, "texture needs at least one feature");
        require(tex->period_min_hr > 0.0 && tex->period_min_hr <= tex->period_max_hr,
                "texture periods must satisfy 0 < period_min <= period_max");
    }
    require(config_.pm25_ratio >= 0.0 && config_.pm25_ratio <= 1.0, "pm25_ratio must be in [0, 1]");

    origin_ = config_.region.south_west;
    features_pm10_ = build_features(config_.texture);
    features_pm25_ = build_features(config_.texture_pm25);
}

std::vector<GroundTruthField::Feature> GroundTruthField::build_features(const SpatialTexture& tex) {
    if (tex.amplitude == 0.0) return {};
    Rng rng(derive_seed(tex.seed, stream::kTexturePm10));
    std::normal_distribution<double> wave(0.0, 1.0 / tex.length_scale_m);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double omega_lo = kTwoPi / (tex.period_max_hr * 3600.0);
    const double omega_hi = kTwoPi / (tex.period_min_hr * 3600.0);
    std::vector<Feature> out;
    out.reserve(static_cast<std::size_t>(tex.features));
    for (int i = 0; i < tex.features; ++i) {
        Feature f{};
        f.kx = wave(rng);
        f.ky = wave(rng);
        f.omega = omega_lo + (omega_hi - omega_lo) * unit(rng);
        f.phase = kTwoPi * unit(rng);
        out.push_back(f);
    }
    return out;
}

double GroundTruthField::eval_texture(const SpatialTexture& tex, std::span<const Feature> features,
                                      LocalXY xy, double t) {
    if (features.empty()) return 0.0;
    double sum = 0.0;
    for (const Feature& f : features) sum += std::cos(f.kx * xy.x + f.ky * xy.y + f.omega * t + f.phase);
    return tex.amplitude * std::sqrt(2.0 / static_cast<double>(features.size())) * sum;
}

double GroundTruthField::texture_rate(const SpatialTexture& tex, std::span<const Feature> features) {
    if (features.empty()) return 0.0;
    double sum = 0.0;
    for (const Feature& f : features) sum += std::abs(f.omega);
    return tex.amplitude * std::sqrt(2.0 / static_cast<double>(features.size())) * sum;
}

double GroundTruthField::baseline(double t) const {
    const auto ti = static_cast<Timestamp>(std::floor(t));
    const Timestamp ms = month_start(ti);
    const Timestamp me = next_month_start(ti);
    const SeasonCalendar& cal = config_.calendar;
    const Season here = cal.at(ti);
    const double b_here = config_.baseline.at(here);
    constexpr double kHalf = kSecondsPerDay / 2.0;

    const Season prev = cal.at(ms - 1);
    if (prev != here && t - static_cast<double>(ms) < kHalf) {
        const double w = 0.5 + (t - static_cast<double>(ms)) / kSecondsPerDay;
        return config_.baseline.at(prev) * (1.0 - w) + b_here * w;
    }
    const Season next = cal.at(me);
    if (next != here && static_cast<double>(me) - t < kHalf) {
        const double w = 0.5 - (static_cast<double>(me) - t) / kSecondsPerDay;
        return b_here * (1.0 - w) + config_.baseline.at(next) * w;
    }
    return b_here;
}

Concentration GroundTruthField::at(GeoPoint loc, Timestamp t) const { return at(loc, static_cast<double>(t)); }

Concentration GroundTruthField::at(GeoPoint loc, double t) const {
    if (!config_.region.contains(loc)) {
        throw DomainError("location (" + csv::format(loc.lat) + ", " + csv::format(loc.lon) +
                          ") outside field region");
    }
    double pm10 = baseline(t);

    const double sod = t - std::floor(t / kSecondsPerDay) * kSecondsPerDay;
    const double hour = sod / 3600.0;
    for (std::size_t k = 0; k < config_.diurnal.size(); ++k) {
        const Harmonic& h = config_.diurnal[k];
        pm10 += h.amplitude * std::cos(kTwoPi * static_cast<double>(k + 1) * (hour - h.phase_hr) / 24.0);
    }

    for (const PlumeEvent& e : config_.events) {
        const double r = e.ramp(t);
        if (r == 0.0) continue;
        const double d = haversine(e.center, loc);
        pm10 += e.peak * r * std::exp(-0.5 * (d * d) / (e.sigma_m * e.sigma_m));
    }

    const LocalXY xy = to_local(origin_, loc);
    pm10 += eval_texture(config_.texture, features_pm10_, xy, t);
    pm10 = std::max(0.0, pm10);

    double pm25 = config_.pm25_ratio * pm10 + eval_texture(config_.texture_pm25, features_pm25_, xy, t);
    pm25 = std::clamp(pm25, 0.0, pm10);
    return {pm10, pm25};
}

double GroundTruthField::max_rate() const {
    double lo = config_.baseline.begin()->second;
    double hi = lo;
    for (const auto& [s, b] : config_.baseline) {
        lo = std::min(lo, b);
        hi = std::max(hi, b);
    }
    double rate = (hi - lo) / kSecondsPerDay;
    for (std::size_t k = 0; k < config_.diurnal.size(); ++k) {
        rate += config_.diurnal[k].amplitude * kTwoPi * static_cast<double>(k + 1) / kSecondsPerDay;
    }
    for (const PlumeEvent& e : config_.events) {
        const auto up = static_cast<double>(e.peak_time - e.start);
        const auto down = static_cast<double>(e.end - e.peak_time);
        rate += e.peak / std::min(up, down);
    }
    rate += texture_rate(config_.texture, features_pm10_);
    const double rate25 = config_.pm25_ratio * rate + texture_rate(config_.texture_pm25, features_pm25_);
    return std::max(rate, rate25);
}

std::vector<PlumeEvent> generate_plumes(const BBox& region, const PlumeGenerator& gen, std::uint64_t seed) {
    require(gen.count >= 0, "plume count must be >= 0");
    require(gen.sigma_min_m > 0.0 && gen.sigma_min_m <= gen.sigma_max_m, "plume sigma range invalid");
    require(gen.peak_min >= 0.0 && gen.peak_min <= gen.peak_max, "plume peak range invalid");
    Rng rng = make_rng(seed, stream::kEvents);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const GeoPoint c = region.center();
    const double w = region.width_m();
    const double h = region.height_m();
    std::vector<PlumeEvent> out;
    for (int i = 0; i < gen.count; ++i) {
        PlumeEvent e;
        e.center = from_local(c, {(unit(rng) - 0.5) * w, (unit(rng) - 0.5) * h});
        e.sigma_m = gen.sigma_min_m + (gen.sigma_max_m - gen.sigma_min_m) * unit(rng);
        e.peak = gen.peak_min + (gen.peak_max - gen.peak_min) * unit(rng);
        e.start = gen.start;
        e.peak_time = gen.peak_time;
        e.end = gen.end;
        e.validate();
        out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weather

Weather weather_at(const WeatherConfig& cfg, Timestamp t, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    const double e1 = n01(rng);
    const double e2 = n01(rng);
    const Season s = cfg.calendar.at(t);
    const double hour = static_cast<double>(t - floor_to(t, kSecondsPerDay)) / 3600.0;
    const double cycle = std::cos(kTwoPi * (hour - cfg.temp_peak_hr) / 24.0);
    Weather w;
    w.temp = cfg.temp_mean.at(s) + cfg.temp_amplitude * cycle + cfg.temp_noise * e1;
    w.rh = std::clamp(cfg.rh_mean.at(s) - cfg.rh_amplitude * cycle + cfg.rh_noise * e2, 0.0, 100.0);
    return w;
}

// ---------------------------------------------------------------------------
// Sensor

void SensorErrorModel::validate() const {
    require(alpha > 0.0, "sensor alpha must be > 0");
    require(noise_sigma >= 0.0, "sensor noise_sigma must be >= 0");
    require(rh_inflation >= 1.0, "sensor rh_inflation must be >= 1");
    require(spike_rate >= 0.0 && spike_rate <= 1.0, "sensor spike_rate must be in [0, 1]");
    require(spike_magnitude >= 0.0, "sensor spike_magnitude must be >= 0");
}

double sample_sensor(const SensorErrorModel& model, double truth, double rh, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double noise = n01(rng);
    const double spike_draw = unit(rng);
    const double spike_size = unit(rng);

    double v = model.alpha * truth + model.beta + model.noise_sigma * noise;
    if (spike_draw < model.spike_rate) v += model.spike_magnitude * (0.5 + spike_size);
    if (rh > kReliableRhMax) v *= model.rh_inflation;
    return std::clamp(v, kSensorMin, kSensorMax);
}

// ---------------------------------------------------------------------------
// Deployment

const DeploymentEntry* DeploymentMap::find(DeviceId id) const {
    for (const auto& e : entries) {
        if (e.device_id == id) return &e;
    }
    return nullptr;
}

void DeploymentMap::validate(const BBox& region) const {
    std::set<DeviceId> seen;
    for (const auto& e : entries) {
        require(seen.insert(e.device_id).second, "duplicate device id " + std::to_string(e.device_id));
        require(region.contains(e.location), "device " + std::to_string(e.device_id) + " lies outside the region");
    }
}

LayoutKind parse_layout_kind(std::string_view s) {
    if (s == "grid") return LayoutKind::Grid;
    if (s == "paper49") return LayoutKind::Paper49;
    if (s == "random") return LayoutKind::Random;
    if (s == "colocated") return LayoutKind::Colocated;
    throw ConfigError("unknown layout '" + std::string(s) + "' (expected grid, paper49, random or colocated)");
}

namespace {

LocationType cyclic_type(std::size_t i) { return static_cast<LocationType>(1 + i % 4); }

DeploymentMap grid_layout(const BBox& region, int n, const Layout& layout) {
    const double w = region.width_m();
    const double h = region.height_m();
    int nx = 0;
    int ny = 0;
    double cx = 0.0;
    double cy = 0.0;
    if (layout.cell_m) {
        require(*layout.cell_m > 0.0, "grid cell size must be > 0");
        cx = cy = *layout.cell_m;
        nx = static_cast<int>(std::floor(w / cx + 1e-9));
        ny = static_cast<int>(std::floor(h / cy + 1e-9));
    } else {
        nx = ny = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-12));
        cx = w / nx;
        cy = h / ny;
    }
    if (static_cast<long long>(nx) * ny < n) {
        throw ConfigError("grid layout has " + std::to_string(nx * ny) + " cells but " + std::to_string(n) +
                          " devices were requested");
    }
    const GeoPoint c = region.center();
    // Grid block is centred in the region; rows run north to south, columns west to east.
    const double x0 = -nx * cx / 2.0;
    const double y0 = ny * cy / 2.0;
    DeploymentMap map;
    for (int k = 0; k < n; ++k) {
        const int row = k / nx;
        const int col = k % nx;
        const LocalXY xy{x0 + (col + 0.5) * cx, y0 - (row + 0.5) * cy};
        map.entries.push_back({static_cast<DeviceId>(k + 1), from_local(c, xy), cyclic_type(static_cast<std::size_t>(k))});
    }
    return map;
}

DeploymentMap paper49_layout(const BBox& region, std::uint64_t seed) {
    constexpr double kBox = 400.0;
    constexpr int kDevices = 49;
    Rng rng = make_rng(seed, stream::kLayout);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double w = region.width_m();
    const double h = region.height_m();
    const int nbx = std::max(1, static_cast<int>(std::floor(w / kBox + 1e-9)));
    const int nby = std::max(1, static_cast<int>(std::floor(h / kBox + 1e-9)));
    const double bx = w / nbx;
    const double by = h / nby;
    const GeoPoint c = region.center();

    // One device per box, jittered inside the inner 75 % of the box.
    std::vector<LocalXY> points;
    for (int r = 0; r < nby && static_cast<int>(points.size()) < kDevices; ++r) {
        for (int q = 0; q < nbx && static_cast<int>(points.size()) < kDevices; ++q) {
            const double xc = -w / 2.0 + (q + 0.5) * bx;
            const double yc = h / 2.0 - (r + 0.5) * by;
            points.push_back({xc + (unit(rng) - 0.5) * 0.75 * bx, yc + (unit(rng) - 0.5) * 0.75 * by});
        }
    }
    // Remaining devices share a box with an existing one, 40-140 m away.
    const std::size_t primaries = points.size();
    std::vector<std::size_t> order(primaries);
    for (std::size_t i = 0; i < primaries; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t next = 0;
    while (static_cast<int>(points.size()) < kDevices) {
        const LocalXY anchor = points[order[next % primaries]];
        ++next;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double dist = 40.0 + 100.0 * unit(rng);
            const double ang = 2.0 * std::numbers::pi * unit(rng);
            const LocalXY p{anchor.x + dist * std::cos(ang), anchor.y + dist * std::sin(ang)};
            if (std::abs(p.x) < w / 2.0 && std::abs(p.y) < h / 2.0) {
                points.push_back(p);
                break;
            }
        }
    }

    // 43 in-house devices (L1..L4 = 7/5/15/16) then 6 commercial units (4/1/1/0).
    std::vector<LocationType> types;
    const std::array<int, 4> own{7, 5, 15, 16};
    const std::array<int, 4> commercial{4, 1, 1, 0};
    for (int t = 0; t < 4; ++t)
        for (int i = 0; i < own[t]; ++i) types.push_back(static_cast<LocationType>(t + 1));
    for (int t = 0; t < 4; ++t)
        for (int i = 0; i < commercial[t]; ++i) types.push_back(static_cast<LocationType>(t + 1));

    std::vector<std::size_t> slot(kDevices);
    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] = i;
    std::shuffle(slot.begin(), slot.end(), rng);

    DeploymentMap map;
    for (std::size_t i = 0; i < static_cast<std::size_t>(kDevices); ++i) {
        map.entries.push_back({static_cast<DeviceId>(i + 1), from_local(c, points[slot[i]]), types[i]});
    }
    return map;
}

}  // namespace

DeploymentMap generate_deployment(const BBox& region, int n, const Layout& layout) {
    require(!region.degenerate(), "deployment region is degenerate");
    if (layout.kind == LayoutKind::Paper49) {
        DeploymentMap m = paper49_layout(region, layout.seed);
        m.validate(region);
        return m;
    }
    require(n >= 1, "deployment needs n >= 1");
    DeploymentMap map;
    switch (layout.kind) {
        case LayoutKind::Grid:
            map = grid_layout(region, n, layout);
            break;
        case LayoutKind::Random: {
            Rng rng = make_rng(layout.seed, stream::kLayout);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (int k = 0; k < n; ++k) {
                const GeoPoint p{region.south_west.lat + unit(rng) * (region.north_east.lat - region.south_west.lat),
                                 region.south_west.lon + unit(rng) * (region.north_east.lon - region.south_west.lon)};
                map.entries.push_back({static_cast<DeviceId>(k + 1), p, cyclic_type(static_cast<std::size_t>(k))});
            }
            break;
        }
        case LayoutKind::Colocated:
            for (int k = 0; k < n; ++k) {
                map.entries.push_back({static_cast<DeviceId>(k + 1), region.center(), cyclic_type(static_cast<std::size_t>(k))});
            }
            break;
        case LayoutKind::Paper49:
            break;
    }
    map.validate(region);
    return map;
}

void write_deployment_csv(const DeploymentMap& map, std::ostream& out) {
    out << "device_id,lat,lon,type\n";
    for (const auto& e : map.entries) {
        out << e.device_id << ',' << csv::format(e.location.lat) << ',' << csv::format(e.location.lon) << ','
            << to_string(e.type) << '\n';
    }
}

DeploymentMap read_deployment_csv(std::istream& in) {
    static constexpr std::array<std::string_view, 4> kCols{"device_id", "lat", "lon", "type"};
    std::string line;
    if (!csv::read_line(in, line)) throw SchemaError("deployment csv: empty file");
    csv::expect_header(line, kCols, "deployment csv");
    DeploymentMap map;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != kCols.size()) {
            throw SchemaError("deployment csv line " + std::to_string(line_no) + ": expected 4 fields, found " +
                              std::to_string(f.size()));
        }
        const long long id = csv::parse_int(f[0], line_no, kCols[0]);
        if (id < 0 || id > 65535) throw SchemaError("deployment csv line " + std::to_string(line_no) + ": device_id out of range");
        DeploymentEntry e;
        e.device_id = static_cast<DeviceId>(id);
        e.location = {csv::parse_double(f[1], line_no, kCols[1]), csv::parse_double(f[2], line_no, kCols[2])};
        e.type = parse_location_type(f[3]);
        map.entries.push_back(e);
    }
    return map;
}

void write_truth_csv_header(std::ostream& out) { out << "created_at,lat,lon,pm10,pm25\n"; }

void write_truth_csv_row(std::ostream& out, Timestamp t, GeoPoint loc, const Concentration& c) {
    out << format_iso8601(t) << ',' << csv::format(loc.lat) << ',' << csv::format(loc.lon) << ','
        << csv::format(c.pm10) << ',' << csv::format(c.pm25) << '\n';
}

}  // namespace aqnet::fieldsim

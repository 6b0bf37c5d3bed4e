#include "aqnet/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "aqnet/random.hpp"

namespace aqnet::scenario {

CalibrationMode parse_calibration_mode(std::string_view s) {
    if (s == "colocation_run") return CalibrationMode::ColocationRun;
    if (s == "self") return CalibrationMode::Self;
    if (s == "none") return CalibrationMode::None;
    throw ConfigError("unknown calibration mode '" + std::string(s) + "' (expected colocation_run, self or none)");
}

std::string_view to_string(CalibrationMode m) {
    switch (m) {
        case CalibrationMode::ColocationRun: return "colocation_run";
        case CalibrationMode::Self: return "self";
        case CalibrationMode::None: return "none";
    }
    return "none";
}

Timestamp Scenario::start() const {
    Timestamp t = periods.front().start;
    for (const auto& p : periods) t = std::min(t, p.start);
    return t;
}

Timestamp Scenario::end() const {
    Timestamp t = periods.front().end();
    for (const auto& p : periods) t = std::max(t, p.end());
    return t;
}

std::size_t Scenario::samples_per_device() const {
    std::size_t n = 0;
    for (const auto& p : periods) n += static_cast<std::size_t>((p.end() - p.start) / device::kSamplePeriod);
    return n;
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

void Scenario::validate() const {
    require(!periods.empty(), "scenario needs at least one period");
    for (std::size_t i = 0; i < periods.size(); ++i) {
        require(periods[i].days >= 1, "period days must be >= 1");
        require(periods[i].start % device::kSamplePeriod == 0, "period start must be a multiple of 30 s");
        if (i > 0) require(periods[i].start >= periods[i - 1].end(), "periods must be ordered and non-overlapping");
    }
    require(width_m > 0.0 && height_m > 0.0, "region width_m and height_m must be > 0");
    require(center.valid(), "region center is not a valid lat/lon");
    require(n_devices >= 1 && n_devices <= 65535, "deployment n must be in [1, 65535]");
    if (cell_m) require(*cell_m > 0.0, "deployment cell_m must be > 0");
    require(sensors.alpha.lo > 0.0 && sensors.alpha.lo <= sensors.alpha.hi, "sensors alpha range invalid");
    require(sensors.beta.lo <= sensors.beta.hi, "sensors beta range invalid");
    if (outages.random) {
        const auto& r = *outages.random;
        require(r.per_device >= 0, "outages per_device must be >= 0");
        require(r.min_samples >= 1 && r.min_samples <= r.max_samples, "outage sample range invalid");
    }
    for (const auto& o : outages.explicit_intervals) require(o.start < o.end, "explicit outage needs start < end");
    require(calibration.days >= 1, "calibration days must be >= 1");
    if (calibration.mode == CalibrationMode::Self) {
        require(layout == fieldsim::LayoutKind::Colocated, "calibration mode 'self' needs the colocated layout");
    }
    require(analytics.power > 0.0, "analytics power must be > 0");
    require(analytics.nx >= 2 && analytics.ny >= 2, "analytics grid must be at least 2x2");
    require(analytics.knee_threshold > 0.0 && analytics.knee_threshold < 1.0, "knee_threshold must be in (0, 1)");
    for (std::size_t k : analytics.subsets) require(k >= 1, "analytics subsets must be >= 1");
    if (event_generator) {
        require(event_generator->start <= event_generator->peak_time && event_generator->peak_time <= event_generator->end &&
                    event_generator->start < event_generator->end,
                "event_generator needs start <= peak_time <= end");
    }
    // Constructing the field validates baselines, textures and explicit events.
    fieldsim::GroundTruthField check(build_field(*this));
    for (const auto& o : sensors.overrides) require(o.device >= 1, "sensor override device must be >= 1");
}

fieldsim::FieldConfig build_field(const Scenario& s) {
    fieldsim::FieldConfig f = s.field;
    f.texture.seed = derive_seed(s.seed, stream::kTexturePm10);
    f.texture_pm25.seed = derive_seed(s.seed, stream::kTexturePm25);
    if (s.event_generator) {
        const auto gen = fieldsim::generate_plumes(f.region, *s.event_generator, s.seed);
        f.events.insert(f.events.end(), gen.begin(), gen.end());
    }
    return f;
}

// ---------------------------------------------------------------------------
// YAML

namespace {

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const {
        std::ostringstream os;
        os << source_;
        if (n.IsDefined() && n.Mark().line >= 0) os << ':' << (n.Mark().line + 1);
        os << ": " << msg;
        throw ConfigError(os.str());
    }

    void expect_map(const YAML::Node& n, const std::string& what) const {
        if (!n.IsMap()) fail(n, what + " must be a mapping");
    }

    void allow_keys(const YAML::Node& n, const std::string& what, std::initializer_list<std::string_view> keys) const {
        expect_map(n, what);
        for (const auto& kv : n) {
            const auto key = kv.first.as<std::string>();
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                fail(kv.first, "unknown key '" + key + "' in " + what);
            }
        }
    }

    template <typename T>
    T as(const YAML::Node& n, const std::string& what) const {
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, what + ": cannot parse '" + (n.IsScalar() ? n.Scalar() : std::string("<non-scalar>")) + "'");
        }
    }

    template <typename T>
    void opt(const YAML::Node& parent, const char* key, T& out, const std::string& what) const {
        const YAML::Node n = parent[key];
        if (n) out = as<T>(n, what + "." + key);
    }

    template <typename T>
    T req(const YAML::Node& parent, const char* key, const std::string& what) const {
        const YAML::Node n = parent[key];
        if (!n) fail(parent, what + ": missing required key '" + key + "'");
        return as<T>(n, what + "." + key);
    }

    Timestamp time(const YAML::Node& n, const std::string& what) const {
        const auto s = as<std::string>(n, what);
        try {
            return parse_timestamp(s);
        } catch (const Error& e) {
            fail(n, what + ": " + e.what());
        }
    }

    Range range(const YAML::Node& n, const std::string& what) const {
        if (n.IsSequence()) {
            if (n.size() != 2) fail(n, what + " must be [lo, hi]");
            return {as<double>(n[0], what), as<double>(n[1], what)};
        }
        const double v = as<double>(n, what);
        return {v, v};
    }

    std::map<Season, double> per_season(const YAML::Node& n, const std::string& what) const {
        std::map<Season, double> out;
        if (n.IsScalar()) {
            const double v = as<double>(n, what);
            for (Season s : kAllSeasons) out[s] = v;
            return out;
        }
        expect_map(n, what);
        for (const auto& kv : n) {
            try {
                out[parse_season(kv.first.as<std::string>())] = as<double>(kv.second, what);
            } catch (const ConfigError& e) {
                fail(kv.first, what + ": " + e.what());
            }
        }
        return out;
    }

    fieldsim::SpatialTexture texture(const YAML::Node& n, const std::string& what) const {
        allow_keys(n, what, {"length_scale_m", "amplitude", "features", "period_min_hr", "period_max_hr"});
        fieldsim::SpatialTexture t;
        opt(n, "length_scale_m", t.length_scale_m, what);
        opt(n, "amplitude", t.amplitude, what);
        opt(n, "features", t.features, what);
        opt(n, "period_min_hr", t.period_min_hr, what);
        opt(n, "period_max_hr", t.period_max_hr, what);
        return t;
    }

    GeoPoint point(const YAML::Node& n, const std::string& what) const {
        if (!n.IsSequence() || n.size() != 2) fail(n, what + " must be [lat, lon]");
        GeoPoint p{as<double>(n[0], what), as<double>(n[1], what)};
        if (!p.valid()) fail(n, what + " is not a valid lat/lon");
        return p;
    }

private:
    std::string source_;
};

void read_field(const Reader& r, const YAML::Node& n, Scenario& s, bool& pm25_texture_set) {
    r.allow_keys(n, "field", {"baseline", "pm25_ratio", "diurnal", "texture", "texture_pm25", "events", "event_generator"});
    if (!n["baseline"]) r.fail(n, "field: missing required key 'baseline'");
    s.field.baseline = r.per_season(n["baseline"], "field.baseline");
    r.opt(n, "pm25_ratio", s.field.pm25_ratio, "field");
    if (const auto d = n["diurnal"]) {
        if (!d.IsSequence()) r.fail(d, "field.diurnal must be a list of {phase_hr, amplitude}");
        for (const auto& h : d) {
            r.allow_keys(h, "field.diurnal entry", {"phase_hr", "amplitude"});
            s.field.diurnal.push_back({r.req<double>(h, "phase_hr", "field.diurnal"),
                                       r.req<double>(h, "amplitude", "field.diurnal")});
        }
    }
    if (const auto t = n["texture"]) s.field.texture = r.texture(t, "field.texture");
    if (const auto t = n["texture_pm25"]) {
        s.field.texture_pm25 = r.texture(t, "field.texture_pm25");
        pm25_texture_set = true;
    }
    if (const auto ev = n["events"]) {
        if (!ev.IsSequence()) r.fail(ev, "field.events must be a list");
        for (const auto& e : ev) {
            r.allow_keys(e, "field.events entry", {"center", "sigma_m", "peak", "start", "peak_time", "end"});
            fieldsim::PlumeEvent p;
            p.center = r.point(e["center"], "field.events.center");
            r.opt(e, "sigma_m", p.sigma_m, "field.events");
            p.peak = r.req<double>(e, "peak", "field.events");
            p.start = r.time(e["start"], "field.events.start");
            p.peak_time = r.time(e["peak_time"], "field.events.peak_time");
            p.end = r.time(e["end"], "field.events.end");
            try {
                p.validate();
            } catch (const Error& err) {
                r.fail(e, err.what());
            }
            s.field.events.push_back(p);
        }
    }
    if (const auto g = n["event_generator"]) {
        r.allow_keys(g, "field.event_generator", {"count", "start", "peak_time", "end", "sigma_m", "peak"});
        fieldsim::PlumeGenerator gen;
        gen.count = r.req<int>(g, "count", "field.event_generator");
        gen.start = r.time(g["start"], "field.event_generator.start");
        gen.peak_time = r.time(g["peak_time"], "field.event_generator.peak_time");
        gen.end = r.time(g["end"], "field.event_generator.end");
        if (const auto x = g["sigma_m"]) {
            const Range rg = r.range(x, "field.event_generator.sigma_m");
            gen.sigma_min_m = rg.lo;
            gen.sigma_max_m = rg.hi;
        }
        if (const auto x = g["peak"]) {
            const Range rg = r.range(x, "field.event_generator.peak");
            gen.peak_min = rg.lo;
            gen.peak_max = rg.hi;
        }
        s.event_generator = gen;
    }
}

void read_sensors(const Reader& r, const YAML::Node& n, Scenario& s) {
    r.allow_keys(n, "sensors",
                 {"alpha", "beta", "noise_sigma", "rh_inflation", "spike_rate", "spike_magnitude", "overrides"});
    if (const auto a = n["alpha"]) s.sensors.alpha = r.range(a, "sensors.alpha");
    if (const auto b = n["beta"]) s.sensors.beta = r.range(b, "sensors.beta");
    r.opt(n, "noise_sigma", s.sensors.noise_sigma, "sensors");
    r.opt(n, "rh_inflation", s.sensors.rh_inflation, "sensors");
    r.opt(n, "spike_rate", s.sensors.spike_rate, "sensors");
    r.opt(n, "spike_magnitude", s.sensors.spike_magnitude, "sensors");
    if (const auto ov = n["overrides"]) {
        if (!ov.IsSequence()) r.fail(ov, "sensors.overrides must be a list");
        for (const auto& o : ov) {
            r.allow_keys(o, "sensors.overrides entry",
                         {"device", "alpha", "beta", "noise_sigma", "rh_inflation", "spike_rate", "spike_magnitude"});
            SensorOverride so;
            so.device = static_cast<DeviceId>(r.req<int>(o, "device", "sensors.overrides"));
            auto take = [&](const char* key, std::optional<double>& dst) {
                if (o[key]) dst = r.as<double>(o[key], std::string("sensors.overrides.") + key);
            };
            take("alpha", so.alpha);
            take("beta", so.beta);
            take("noise_sigma", so.noise_sigma);
            take("rh_inflation", so.rh_inflation);
            take("spike_rate", so.spike_rate);
            take("spike_magnitude", so.spike_magnitude);
            s.sensors.overrides.push_back(so);
        }
    }
}

Scenario from_yaml(const YAML::Node& root, const Reader& r) {
    r.allow_keys(root, "scenario",
                 {"name", "seed", "region", "periods", "calendar", "field", "weather", "deployment", "sensors",
                  "outages", "calibration", "analytics"});
    Scenario s;
    r.opt(root, "name", s.name, "scenario");
    s.seed = r.req<std::uint64_t>(root, "seed", "scenario");

    const YAML::Node region = root["region"];
    if (!region) r.fail(root, "scenario: missing required key 'region'");
    r.allow_keys(region, "region", {"center", "width_m", "height_m"});
    s.center = r.point(region["center"], "region.center");
    r.opt(region, "width_m", s.width_m, "region");
    r.opt(region, "height_m", s.height_m, "region");
    if (!(s.width_m > 0.0 && s.height_m > 0.0)) r.fail(region, "region width_m and height_m must be > 0");
    s.field.region = BBox::around(s.center, s.width_m, s.height_m);

    const YAML::Node periods = root["periods"];
    if (!periods || !periods.IsSequence() || periods.size() == 0) {
        r.fail(periods ? periods : root, "scenario: 'periods' must be a non-empty list of {start, days}");
    }
    for (const auto& p : periods) {
        r.allow_keys(p, "periods entry", {"start", "days"});
        s.periods.push_back({r.time(p["start"], "periods.start"), r.req<int>(p, "days", "periods")});
        if (s.periods.back().days < 1) r.fail(p, "periods.days must be >= 1");
    }

    SeasonCalendar calendar;
    if (const auto c = root["calendar"]) {
        r.allow_keys(c, "calendar", {"monsoon", "winter", "summer"});
        for (const auto& kv : c) {
            Season season{};
            try {
                season = parse_season(kv.first.as<std::string>());
            } catch (const ConfigError& e) {
                r.fail(kv.first, e.what());
            }
            if (!kv.second.IsSequence()) r.fail(kv.second, "calendar entries must be lists of months");
            for (const auto& m : kv.second) {
                const int month = r.as<int>(m, "calendar month");
                if (month < 1 || month > 12) r.fail(m, "calendar month must be in 1..12");
                calendar.set(month, season);
            }
        }
    }
    s.field.calendar = calendar;
    s.weather.calendar = calendar;

    const YAML::Node field = root["field"];
    if (!field) r.fail(root, "scenario: missing required key 'field'");
    bool pm25_texture_set = false;
    read_field(r, field, s, pm25_texture_set);
    if (!pm25_texture_set) {
        s.field.texture_pm25 = s.field.texture;
        s.field.texture_pm25.amplitude = s.field.texture.amplitude * s.field.pm25_ratio;
    }

    if (const auto w = root["weather"]) {
        r.allow_keys(w, "weather",
                     {"temp_mean", "rh_mean", "temp_amplitude", "rh_amplitude", "temp_noise", "rh_noise", "temp_peak_hr"});
        if (w["temp_mean"]) s.weather.temp_mean = r.per_season(w["temp_mean"], "weather.temp_mean");
        if (w["rh_mean"]) s.weather.rh_mean = r.per_season(w["rh_mean"], "weather.rh_mean");
        r.opt(w, "temp_amplitude", s.weather.temp_amplitude, "weather");
        r.opt(w, "rh_amplitude", s.weather.rh_amplitude, "weather");
        r.opt(w, "temp_noise", s.weather.temp_noise, "weather");
        r.opt(w, "rh_noise", s.weather.rh_noise, "weather");
        r.opt(w, "temp_peak_hr", s.weather.temp_peak_hr, "weather");
        for (Season se : kAllSeasons) {
            if (!s.weather.temp_mean.count(se) || !s.weather.rh_mean.count(se)) {
                r.fail(w, "weather means must cover every season");
            }
        }
    }

    if (const auto d = root["deployment"]) {
        r.allow_keys(d, "deployment", {"layout", "n", "cell_m"});
        if (d["layout"]) {
            try {
                s.layout = fieldsim::parse_layout_kind(r.as<std::string>(d["layout"], "deployment.layout"));
            } catch (const ConfigError& e) {
                r.fail(d["layout"], e.what());
            }
        }
        r.opt(d, "n", s.n_devices, "deployment");
        if (d["cell_m"]) s.cell_m = r.as<double>(d["cell_m"], "deployment.cell_m");
    }
    if (s.layout == fieldsim::LayoutKind::Paper49) s.n_devices = 49;

    if (const auto n = root["sensors"]) read_sensors(r, n, s);

    if (const auto o = root["outages"]) {
        r.allow_keys(o, "outages", {"random", "explicit"});
        if (const auto rnd = o["random"]) {
            r.allow_keys(rnd, "outages.random", {"per_device", "min_samples", "max_samples"});
            RandomOutages ro;
            ro.per_device = r.req<int>(rnd, "per_device", "outages.random");
            ro.min_samples = r.req<int>(rnd, "min_samples", "outages.random");
            ro.max_samples = r.req<int>(rnd, "max_samples", "outages.random");
            s.outages.random = ro;
        }
        if (const auto ex = o["explicit"]) {
            if (!ex.IsSequence()) r.fail(ex, "outages.explicit must be a list");
            for (const auto& e : ex) {
                r.allow_keys(e, "outages.explicit entry", {"device", "start", "end"});
                ExplicitOutage eo;
                eo.device = static_cast<DeviceId>(r.req<int>(e, "device", "outages.explicit"));
                eo.start = r.time(e["start"], "outages.explicit.start");
                eo.end = r.time(e["end"], "outages.explicit.end");
                if (eo.start >= eo.end) r.fail(e, "outages.explicit needs start < end");
                s.outages.explicit_intervals.push_back(eo);
            }
        }
    }

    if (const auto c = root["calibration"]) {
        r.allow_keys(c, "calibration", {"mode", "days"});
        if (c["mode"]) {
            try {
                s.calibration.mode = parse_calibration_mode(r.as<std::string>(c["mode"], "calibration.mode"));
            } catch (const ConfigError& e) {
                r.fail(c["mode"], e.what());
            }
        }
        r.opt(c, "days", s.calibration.days, "calibration");
    }

    if (const auto a = root["analytics"]) {
        r.allow_keys(a, "analytics", {"power", "grid", "subsets", "fit_bin_m", "knee_threshold", "min_overlap_hours"});
        r.opt(a, "power", s.analytics.power, "analytics");
        if (const auto g = a["grid"]) {
            if (!g.IsSequence() || g.size() != 2) r.fail(g, "analytics.grid must be [nx, ny]");
            s.analytics.nx = r.as<int>(g[0], "analytics.grid");
            s.analytics.ny = r.as<int>(g[1], "analytics.grid");
        }
        if (const auto sub = a["subsets"]) {
            if (!sub.IsSequence()) r.fail(sub, "analytics.subsets must be a list");
            s.analytics.subsets.clear();
            for (const auto& k : sub) s.analytics.subsets.push_back(r.as<std::size_t>(k, "analytics.subsets"));
        }
        r.opt(a, "fit_bin_m", s.analytics.fit_bin_m, "analytics");
        r.opt(a, "knee_threshold", s.analytics.knee_threshold, "analytics");
        r.opt(a, "min_overlap_hours", s.analytics.min_overlap_hours, "analytics");
    }
    return s;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": YAML syntax error: " + e.msg);
    }
    const Reader r(source);
    if (!root.IsMap()) r.fail(root, "scenario must be a YAML mapping");
    Scenario s = from_yaml(root, r);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path.string());
}

}  // namespace aqnet::scenario

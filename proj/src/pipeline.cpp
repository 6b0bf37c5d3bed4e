#include "aqnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aqnet/csv.hpp"
#include "aqnet/fieldsim.hpp"

namespace aqnet::pipeline {

void TimeSeries::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isfinite(points[i].v)) throw DomainError("series value is not finite");
        if (i > 0 && points[i].t <= points[i - 1].t) throw DomainError("series timestamps must strictly increase");
    }
}

std::size_t Masked::removed_count() const {
    return static_cast<std::size_t>(std::count(removed.begin(), removed.end(), true));
}

namespace {

double pick(const device::SensorReading& r, Field f) {
    switch (f) {
        case Field::PM10: return r.pm10;
        case Field::PM25: return r.pm25;
        case Field::Temp: return r.temp;
        case Field::RH: return r.rh;
    }
    return 0.0;
}

double pick(const StagedRow& r, Field f) {
    switch (f) {
        case Field::PM10: return r.pm10;
        case Field::PM25: return r.pm25;
        case Field::Temp: return r.temp;
        case Field::RH: return r.rh;
    }
    return 0.0;
}

Mask prior_or_empty(const Mask& prior, std::size_t n) {
    if (prior.empty()) return Mask(n, false);
    if (prior.size() != n) throw DomainError("mask length differs from series length");
    return prior;
}

}  // namespace

TimeSeries extract(DeviceId id, std::span<const device::SensorReading> readings, Field field) {
    TimeSeries s;
    s.device_id = id;
    s.points.reserve(readings.size());
    for (const auto& r : readings) s.points.push_back({r.created_at, pick(r, field)});
    return s;
}

TimeSeries extract(DeviceId id, std::span<const StagedRow> rows, Field field) {
    TimeSeries s;
    s.device_id = id;
    s.points.reserve(rows.size());
    for (const auto& r : rows) s.points.push_back({r.created_at, pick(r, field)});
    return s;
}

Masked filter_unreliable(const TimeSeries& series, const TimeSeries& rh_series) {
    if (series.size() != rh_series.size()) throw DomainError("series and RH series differ in length");
    Masked out{series, Mask(series.size(), false)};
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series.points[i].t != rh_series.points[i].t) throw DomainError("series and RH series timestamps differ");
        const double v = series.points[i].v;
        const bool humid = rh_series.points[i].v > fieldsim::kReliableRhMax;
        const bool out_of_range = !(v >= fieldsim::kSensorMin && v <= fieldsim::kSensorMax);
        out.removed[i] = humid || out_of_range;
    }
    return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InsufficientData("quantile of empty data");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

IqrBounds iqr_bounds(std::span<const double> values) {
    if (values.size() < 4) {
        throw InsufficientData("IQR bounds need at least 4 values, got " + std::to_string(values.size()));
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    IqrBounds b;
    b.q1 = quantile_sorted(sorted, 0.25);
    b.q3 = quantile_sorted(sorted, 0.75);
    b.iqr = b.q3 - b.q1;
    b.lower = b.q1 - 1.5 * b.iqr;
    b.upper = b.q3 + 1.5 * b.iqr;
    return b;
}

Masked remove_outliers(const TimeSeries& series, const IqrBounds& bounds, const Mask& prior) {
    Masked out{series, prior_or_empty(prior, series.size())};
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double v = series.points[i].v;
        if (v < bounds.lower || v > bounds.upper) out.removed[i] = true;
    }
    return out;
}

Masked remove_outliers_monthly(const TimeSeries& series, const Mask& prior) {
    Masked out{series, prior_or_empty(prior, series.size())};
    std::size_t begin = 0;
    std::vector<double> vals;
    while (begin < series.size()) {
        const Timestamp month_end = next_month_start(series.points[begin].t);
        std::size_t end = begin;
        while (end < series.size() && series.points[end].t < month_end) ++end;
        vals.clear();
        for (std::size_t i = begin; i < end; ++i) {
            if (!out.removed[i]) vals.push_back(series.points[i].v);
        }
        if (vals.size() >= 4) {
            const IqrBounds b = iqr_bounds(vals);
            for (std::size_t i = begin; i < end; ++i) {
                const double v = series.points[i].v;
                if (v < b.lower || v > b.upper) out.removed[i] = true;
            }
        }
        begin = end;
    }
    return out;
}

TimeSeries interpolate_gaps(const TimeSeries& series, const Mask& removed) {
    if (removed.size() != series.size()) throw DomainError("mask length differs from series length");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!removed[i]) keep.push_back(i);
    }
    if (keep.empty()) throw InsufficientData("no surviving points to interpolate from");

    TimeSeries out = series;
    std::size_t k = 0;  // index into keep of the next surviving point at or after i
    for (std::size_t i = 0; i < series.size(); ++i) {
        while (k < keep.size() && keep[k] < i) ++k;
        if (!removed[i]) continue;
        if (k == 0) {
            out.points[i].v = series.points[keep.front()].v;
        } else if (k == keep.size()) {
            out.points[i].v = series.points[keep.back()].v;
        } else {
            const TimePoint& a = series.points[keep[k - 1]];
            const TimePoint& b = series.points[keep[k]];
            const double w = static_cast<double>(series.points[i].t - a.t) / static_cast<double>(b.t - a.t);
            out.points[i].v = a.v + w * (b.v - a.v);
        }
    }
    return out;
}

TimeSeries clean(const TimeSeries& series, const TimeSeries& rh_series, CleanReport* report) {
    const Masked unreliable = filter_unreliable(series, rh_series);
    const Masked outliers = remove_outliers_monthly(series, unreliable.removed);
    if (report) {
        report->unreliable += unreliable.removed_count();
        report->outliers += outliers.removed_count() - unreliable.removed_count();
    }
    return interpolate_gaps(series, outliers.removed);
}

// ---------------------------------------------------------------------------
// Calibration

CalibrationModel fit_calibration(const TimeSeries& raw, const TimeSeries& reference, Pollutant pollutant,
                                 const SeasonCalendar& calendar) {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<Timestamp> ts;
    for (std::size_t i = 0, j = 0; i < raw.size() && j < reference.size();) {
        const Timestamp a = raw.points[i].t;
        const Timestamp b = reference.points[j].t;
        if (a < b) {
            ++i;
        } else if (b < a) {
            ++j;
        } else {
            x.push_back(raw.points[i].v);
            y.push_back(reference.points[j].v);
            ts.push_back(a);
            ++i;
            ++j;
        }
    }
    const std::size_t n = x.size();
    if (n < 2) throw InsufficientData("calibration needs at least 2 paired points, got " + std::to_string(n));

    const auto nd = static_cast<double>(n);
    double xbar = 0.0;
    double ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xbar += x[i];
        ybar += y[i];
    }
    xbar /= nd;
    ybar /= nd;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - xbar;
        sxx += dx * dx;
        sxy += dx * (y[i] - ybar);
    }
    if (!(sxx > 0.0)) throw DegenerateFit("raw series is constant; slope is undefined");

    CalibrationModel model;
    model.device_id = raw.device_id;
    model.pollutant = pollutant;
    model.season = calendar.at(ts[n / 2]);
    model.m = sxy / sxx;
    model.c = ybar - model.m * xbar;
    model.n_points = n;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (model.m * x[i] + model.c);
        ssr += r * r;
    }
    model.fit_rmse = std::sqrt(ssr / nd);
    const double s2 = n > 2 ? ssr / (nd - 2.0) : 0.0;
    model.se_m = std::sqrt(s2 / sxx);
    model.se_c = std::sqrt(s2 * (1.0 / nd + xbar * xbar / sxx));
    return model;
}

TimeSeries apply_calibration(const TimeSeries& series, const CalibrationModel& model, const SeasonCalendar& calendar) {
    TimeSeries out = series;
    for (TimePoint& p : out.points) {
        if (calendar.at(p.t) != model.season) {
            throw ConfigError("calibration model for " + std::string(to_string(model.season)) + " applied to a " +
                              std::string(to_string(calendar.at(p.t))) + " timestamp (" + format_iso8601(p.t) + ")");
        }
        p.v = std::max(0.0, model.m * p.v + model.c);
    }
    return out;
}

TimeSeries apply_calibration(const TimeSeries& series, std::span<const CalibrationModel> models, Pollutant pollutant,
                             const SeasonCalendar& calendar) {
    std::map<Season, const CalibrationModel*> by_season;
    for (const auto& m : models) {
        if (m.device_id == series.device_id && m.pollutant == pollutant) by_season[m.season] = &m;
    }
    TimeSeries out = series;
    for (TimePoint& p : out.points) {
        const Season s = calendar.at(p.t);
        auto it = by_season.find(s);
        if (it == by_season.end()) {
            throw ConfigError("no " + std::string(to_string(pollutant)) + " calibration model for device " +
                              std::to_string(series.device_id) + " in " + std::string(to_string(s)));
        }
        p.v = std::max(0.0, it->second->m * p.v + it->second->c);
    }
    return out;
}

namespace {
constexpr std::array<std::string_view, 7> kModelCols{"device_id", "season", "pollutant", "m", "c", "rmse", "n"};
}

void write_models_csv(std::span<const CalibrationModel> models, std::ostream& out) {
    out << "device_id,season,pollutant,m,c,rmse,n\n";
    for (const auto& m : models) {
        out << m.device_id << ',' << to_string(m.season) << ',' << to_string(m.pollutant) << ',' << csv::format(m.m)
            << ',' << csv::format(m.c) << ',' << csv::format(m.fit_rmse) << ',' << m.n_points << '\n';
    }
}

std::vector<CalibrationModel> read_models_csv(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line)) throw SchemaError("models csv: empty file");
    csv::expect_header(line, kModelCols, "models csv");
    std::vector<CalibrationModel> out;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != kModelCols.size()) {
            throw SchemaError("models csv line " + std::to_string(line_no) + ": expected 7 fields");
        }
        CalibrationModel m;
        m.device_id = static_cast<DeviceId>(csv::parse_int(f[0], line_no, kModelCols[0]));
        m.season = parse_season(f[1]);
        m.pollutant = parse_pollutant(f[2]);
        m.m = csv::parse_double(f[3], line_no, kModelCols[3]);
        m.c = csv::parse_double(f[4], line_no, kModelCols[4]);
        m.fit_rmse = csv::parse_double(f[5], line_no, kModelCols[5]);
        m.n_points = static_cast<std::size_t>(csv::parse_int(f[6], line_no, kModelCols[6]));
        out.push_back(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

TimeSeries hourly_means(const TimeSeries& series) {
    TimeSeries out;
    out.device_id = series.device_id;
    out.cadence = kSecondsPerHour;
    for (std::size_t i = 0; i < series.size();) {
        const Timestamp start = floor_to(series.points[i].t, kSecondsPerHour);
        double sum = 0.0;
        std::size_t n = 0;
        for (; i < series.size() && series.points[i].t < start + kSecondsPerHour; ++i) {
            sum += series.points[i].v;
            ++n;
        }
        out.points.push_back({start, sum / static_cast<double>(n)});
    }
    return out;
}

std::map<Season, SeasonStats> seasonal_stats(const TimeSeries& series, const SeasonCalendar& calendar) {
    const TimeSeries hourly = hourly_means(series);
    std::map<Season, std::vector<double>> groups;
    for (const TimePoint& p : hourly.points) groups[calendar.at(p.t)].push_back(p.v);
    std::map<Season, SeasonStats> out;
    for (const auto& [season, vals] : groups) {
        const auto n = static_cast<double>(vals.size());
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        out[season] = {mean, var / n, vals.size()};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Staged CSV

namespace {

constexpr std::array<std::string_view, 5> kRawCols{"created_at", "pm10", "pm25", "temp", "rh"};
constexpr std::array<std::string_view, 6> kStagedCols{"created_at", "pm10", "pm25", "temp", "rh", "stage"};

/// Values that are exactly representable as float (untouched wire values) print in float form.
std::string format_value(double v) {
    const auto f = static_cast<float>(v);
    if (static_cast<double>(f) == v) return csv::format(f);
    return csv::format(v);
}

}  // namespace

void write_staged_csv(std::span<const StagedRow> rows, std::string_view stage, std::ostream& out) {
    out << "created_at,pm10,pm25,temp,rh,stage\n";
    for (const StagedRow& r : rows) {
        out << format_iso8601(r.created_at) << ',' << format_value(r.pm10) << ',' << format_value(r.pm25) << ','
            << format_value(r.temp) << ',' << format_value(r.rh) << ',' << stage << '\n';
    }
}

std::vector<StagedRow> read_staged_csv(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line)) throw SchemaError("series csv: empty file");
    const bool staged = csv::split(line).size() == kStagedCols.size();
    if (staged) {
        csv::expect_header(line, kStagedCols, "series csv");
    } else {
        csv::expect_header(line, kRawCols, "series csv");
    }
    const std::size_t ncols = staged ? kStagedCols.size() : kRawCols.size();
    std::vector<StagedRow> out;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != ncols) {
            throw SchemaError("series csv line " + std::to_string(line_no) + ": expected " + std::to_string(ncols) +
                              " fields, found " + std::to_string(f.size()));
        }
        StagedRow r;
        try {
            r.created_at = parse_timestamp(f[0]);
        } catch (const DomainError& e) {
            throw SchemaError("series csv line " + std::to_string(line_no) + ", column 'created_at': " + e.what());
        }
        r.pm10 = csv::parse_double(f[1], line_no, "pm10");
        r.pm25 = csv::parse_double(f[2], line_no, "pm25");
        r.temp = csv::parse_double(f[3], line_no, "temp");
        r.rh = csv::parse_double(f[4], line_no, "rh");
        if (!out.empty() && r.created_at <= out.back().created_at) {
            throw SchemaError("series csv line " + std::to_string(line_no) + ": created_at not strictly increasing");
        }
        out.push_back(r);
    }
    return out;
}

std::vector<StagedRow> to_rows(std::span<const device::SensorReading> readings) {
    std::vector<StagedRow> out;
    out.reserve(readings.size());
    for (const auto& r : readings) out.push_back({r.created_at, r.pm10, r.pm25, r.temp, r.rh});
    return out;
}

std::vector<StagedRow> clean_rows(std::span<const StagedRow> rows, CleanReport* report) {
    std::vector<StagedRow> out(rows.begin(), rows.end());
    if (rows.empty()) return out;
    const TimeSeries rh = extract(0, rows, Field::RH);
    const TimeSeries pm10 = clean(extract(0, rows, Field::PM10), rh, report);
    const TimeSeries pm25 = clean(extract(0, rows, Field::PM25), rh, report);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].pm10 = pm10.points[i].v;
        out[i].pm25 = pm25.points[i].v;
    }
    return out;
}

std::vector<StagedRow> calibrate_rows(std::span<const StagedRow> rows, DeviceId device,
                                      std::span<const CalibrationModel> models, const SeasonCalendar& calendar) {
    std::vector<StagedRow> out(rows.begin(), rows.end());
    const TimeSeries pm10 = apply_calibration(extract(device, rows, Field::PM10), models, Pollutant::PM10, calendar);
    const TimeSeries pm25 = apply_calibration(extract(device, rows, Field::PM25), models, Pollutant::PM25, calendar);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].pm10 = pm10.points[i].v;
        out[i].pm25 = pm25.points[i].v;
    }
    return out;
}

}  // namespace aqnet::pipeline

#include "aqnet/analytics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "aqnet/csv.hpp"
#include "aqnet/kernels.hpp"
#include "aqnet/random.hpp"
#include "json.hpp"

namespace aqnet::analytics {

double idw(std::span<const Sample> samples, GeoPoint target, double power) {
    if (samples.empty()) throw DomainError("idw: no samples");
    if (!(power > 0.0)) throw DomainError("idw: power must be positive");
    double num = 0.0;
    double den = 0.0;
    for (const Sample& s : samples) {
        const double d = haversine(s.location, target);
        if (d < kSingularityRadiusM) return s.value;
        const double w = std::pow(d, -power);
        num += w * s.value;
        den += w;
    }
    return num / den;
}

GeoPoint GridSpec::cell_center(int ix, int iy) const {
    const double dlat = (bbox.north_east.lat - bbox.south_west.lat) / ny;
    const double dlon = (bbox.north_east.lon - bbox.south_west.lon) / nx;
    return {bbox.north_east.lat - (iy + 0.5) * dlat, bbox.south_west.lon + (ix + 0.5) * dlon};
}

void GridSpec::validate() const {
    if (nx < 2 || ny < 2) throw DomainError("grid needs at least 2x2 cells");
    if (bbox.degenerate()) throw DomainError("grid bounding box is empty");
}

double Grid::mean() const {
    return cells.empty() ? 0.0 : std::accumulate(cells.begin(), cells.end(), 0.0) / static_cast<double>(cells.size());
}
double Grid::min() const { return cells.empty() ? 0.0 : *std::min_element(cells.begin(), cells.end()); }
double Grid::max() const { return cells.empty() ? 0.0 : *std::max_element(cells.begin(), cells.end()); }

Grid idw_grid(std::span<const Sample> samples, const GridSpec& spec, double power, Timestamp t, Pollutant pollutant) {
    spec.validate();
    if (samples.empty()) throw DomainError("idw grid: no device reports a value");
    if (!(power > 0.0)) throw DomainError("idw: power must be positive");
    Grid g;
    g.bbox = spec.bbox;
    g.nx = spec.nx;
    g.ny = spec.ny;
    g.timestamp = t;
    g.pollutant = pollutant;
    g.cells.assign(static_cast<std::size_t>(spec.nx) * spec.ny, 0.0);
    kernels::omp::idw_grid(samples, spec, power, g.cells);
    return g;
}

std::vector<Sample> samples_for(const fieldsim::DeploymentMap& deployment, const std::map<DeviceId, double>& values,
                                std::span<const DeviceId> subset) {
    std::vector<Sample> out;
    if (subset.empty()) {
        for (const auto& e : deployment.entries) {
            auto it = values.find(e.device_id);
            if (it != values.end()) out.push_back({e.location, it->second});
        }
        if (out.empty()) throw DomainError("no device reports a value");
        return out;
    }
    for (DeviceId id : subset) {
        const auto* e = deployment.find(id);
        if (!e) throw DomainError("device " + std::to_string(id) + " is not in the deployment");
        auto it = values.find(id);
        if (it != values.end()) out.push_back({e->location, it->second});
    }
    if (out.empty()) throw DomainError("no subset device reports a value");
    return out;
}

double grid_rmse(const Grid& a, const Grid& b) {
    if (a.nx != b.nx || a.ny != b.ny || a.cells.size() != b.cells.size()) {
        throw DomainError("grid rmse: shapes differ");
    }
    if (a.cells.empty()) return 0.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const double d = a.cells[i] - b.cells[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(a.cells.size()));
}

double sparse_subset_rmse(const Grid& full, const fieldsim::DeploymentMap& deployment,
                          std::span<const DeviceId> subset, const std::map<DeviceId, double>& values, double power) {
    if (subset.empty()) throw DomainError("sparse rmse: empty subset");
    const auto samples = samples_for(deployment, values, subset);
    const Grid sparse = idw_grid(samples, full.spec(), power, full.timestamp, full.pollutant);
    return grid_rmse(full, sparse);
}

std::vector<DeviceId> choose_spread_subset(const fieldsim::DeploymentMap& deployment, std::size_t k,
                                           std::span<const DeviceId> candidates, std::uint64_t seed, int draws) {
    if (k == 0) throw DomainError("subset size must be positive");
    if (k > candidates.size()) {
        throw DomainError("subset size " + std::to_string(k) + " exceeds " + std::to_string(candidates.size()) +
                          " candidate devices");
    }
    std::vector<GeoPoint> loc;
    for (DeviceId id : candidates) {
        const auto* e = deployment.find(id);
        if (!e) throw DomainError("device " + std::to_string(id) + " is not in the deployment");
        loc.push_back(e->location);
    }
    Rng rng = make_rng(seed, stream::kSubset, k);
    std::vector<std::size_t> idx(candidates.size());
    std::vector<std::size_t> best;
    double best_score = -1.0;
    for (int d = 0; d < std::max(1, draws); ++d) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        // partial Fisher-Yates
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        double score = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) score = std::min(score, haversine(loc[idx[i]], loc[idx[j]]));
        }
        if (score > best_score) {
            best_score = score;
            best.assign(idx.begin(), idx.begin() + static_cast<long>(k));
        }
    }
    std::sort(best.begin(), best.end());
    std::vector<DeviceId> out;
    for (std::size_t i : best) out.push_back(candidates[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Kendall tau-b, Knight's algorithm

namespace {

/// Sorts v[lo, hi) ascending and returns the number of inversions.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
    std::size_t i = lo;
    std::size_t j = mid;
    std::size_t k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            buf[k++] = v[j++];
            swaps += mid - i;
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi), v.begin() + static_cast<long>(lo));
    return swaps;
}

std::uint64_t tie_pairs(std::uint64_t run) { return run * (run - 1) / 2; }

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DomainError("kendall tau: lengths differ");
    const std::size_t n = x.size();
    if (n < 2) throw DomainError("kendall tau: need at least 2 observations");
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(x[i]) || std::isnan(y[i])) throw DomainError("kendall tau: NaN input");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });

    std::uint64_t tied_x = 0;
    std::uint64_t tied_xy = 0;
    {
        std::uint64_t run_x = 1;
        std::uint64_t run_xy = 1;
        for (std::size_t i = 1; i < n; ++i) {
            const std::size_t p = order[i - 1];
            const std::size_t c = order[i];
            if (x[c] == x[p]) {
                ++run_x;
                if (y[c] == y[p]) {
                    ++run_xy;
                } else {
                    tied_xy += tie_pairs(run_xy);
                    run_xy = 1;
                }
            } else {
                tied_x += tie_pairs(run_x);
                tied_xy += tie_pairs(run_xy);
                run_x = 1;
                run_xy = 1;
            }
        }
        tied_x += tie_pairs(run_x);
        tied_xy += tie_pairs(run_xy);
    }

    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
    std::vector<double> buf(n);
    const std::uint64_t swaps = merge_count(ys, buf, 0, n);

    std::uint64_t tied_y = 0;
    {
        std::uint64_t run = 1;
        for (std::size_t i = 1; i < n; ++i) {
            if (ys[i] == ys[i - 1]) {
                ++run;
            } else {
                tied_y += tie_pairs(run);
                run = 1;
            }
        }
        tied_y += tie_pairs(run);
    }

    const std::uint64_t n0 = tie_pairs(n);
    if (tied_x == n0 || tied_y == n0) throw DomainError("kendall tau: undefined correlation (all values tied)");
    // concordant - discordant = n0 - tx - ty + txy - 2 swaps
    const auto s = static_cast<double>(static_cast<std::int64_t>(n0 - tied_x - tied_y + tied_xy) -
                                       2 * static_cast<std::int64_t>(swaps));
    const double denom = std::sqrt(static_cast<double>(n0 - tied_x)) * std::sqrt(static_cast<double>(n0 - tied_y));
    return std::clamp(s / denom, -1.0, 1.0);
}

CorrelationResult correlation_vs_distance(const fieldsim::DeploymentMap& deployment,
                                          const std::map<DeviceId, pipeline::TimeSeries>& hourly,
                                          std::size_t min_overlap) {
    std::vector<DeviceId> ids;
    std::vector<kernels::SeriesView> views;
    std::vector<GeoPoint> locs;
    CorrelationResult result;
    for (const auto& e : deployment.entries) {
        auto it = hourly.find(e.device_id);
        if (it == hourly.end()) {
            result.notices.push_back("device " + std::to_string(e.device_id) + ": no hourly series");
            continue;
        }
        ids.push_back(e.device_id);
        views.push_back({it->second.points});
        locs.push_back(e.location);
    }
    if (ids.size() < 2) throw InsufficientData("correlation needs at least 2 devices with data");

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) pairs.emplace_back(i, j);
    }
    std::vector<kernels::PairOutcome> outcomes(pairs.size());
    kernels::omp::pairwise_tau(views, pairs, min_overlap, outcomes);

    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        const auto& o = outcomes[k];
        const std::string label =
            "pair (" + std::to_string(ids[i]) + ", " + std::to_string(ids[j]) + "): ";
        switch (o.status) {
            case kernels::PairStatus::Ok:
                result.points.push_back({ids[i], ids[j], haversine(locs[i], locs[j]), o.tau, o.n});
                break;
            case kernels::PairStatus::InsufficientOverlap:
                result.notices.push_back(label + "skipped, " + std::to_string(o.n) + " overlapping hours < " +
                                         std::to_string(min_overlap));
                break;
            case kernels::PairStatus::AllTied:
                result.notices.push_back(label + "skipped, series entirely tied");
                break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Two-term exponential

double ExpFitModel::operator()(double x) const { return a * std::exp(b * x) + c * std::exp(d * x); }
double ExpFitModel::slope(double x) const { return a * b * std::exp(b * x) + c * d * std::exp(d * x); }

std::vector<std::pair<double, double>> bin_points(std::span<const std::pair<double, double>> points, double width) {
    if (!(width > 0.0)) throw DomainError("bin width must be positive");
    std::map<long long, std::array<double, 3>> bins;  // sum x, sum y, count
    for (const auto& [x, y] : points) {
        auto& b = bins[static_cast<long long>(std::floor(x / width))];
        b[0] += x;
        b[1] += y;
        b[2] += 1.0;
    }
    std::vector<std::pair<double, double>> out;
    for (const auto& [key, b] : bins) out.emplace_back(b[0] / b[2], b[1] / b[2]);
    return out;
}

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Params = Eigen::Vector4d;  // a b c d

struct FitData {
    Vec x;
    Vec y;
};

Vec residuals(const FitData& fd, const Params& p) {
    return (p[0] * (p[1] * fd.x.array()).exp() + p[2] * (p[3] * fd.x.array()).exp()).matrix() - fd.y;
}

Mat jacobian(const FitData& fd, const Params& p) {
    Mat j(fd.x.size(), 4);
    const Eigen::ArrayXd eb = (p[1] * fd.x.array()).exp();
    const Eigen::ArrayXd ed = (p[3] * fd.x.array()).exp();
    j.col(0) = eb.matrix();
    j.col(1) = (p[0] * fd.x.array() * eb).matrix();
    j.col(2) = ed.matrix();
    j.col(3) = (p[2] * fd.x.array() * ed).matrix();
    return j;
}

double cost(const Vec& r) { return r.squaredNorm(); }

/// Linear amplitudes for fixed rates.
Params linear_start(const FitData& fd, double b, double d) {
    Mat basis(fd.x.size(), 2);
    basis.col(0) = (b * fd.x.array()).exp().matrix();
    basis.col(1) = (d * fd.x.array()).exp().matrix();
    const Eigen::Vector2d ac = basis.colPivHouseholderQr().solve(fd.y);
    return {ac[0], b, ac[1], d};
}

struct LmOutcome {
    Params p;
    double cost = 0.0;
    int iterations = 0;
    bool finite = false;
};

LmOutcome levenberg_marquardt(const FitData& fd, Params p, int max_iter) {
    Vec r = residuals(fd, p);
    double f = cost(r);
    double lambda = 1e-3;
    int it = 0;
    bool converged = false;
    for (; it < max_iter && !converged; ++it) {
        const Mat j = jacobian(fd, p);
        Eigen::Vector4d scale = j.colwise().norm().transpose();
        for (int k = 0; k < 4; ++k) scale[k] = std::max(scale[k], 1e-12);
        bool improved = false;
        for (int tries = 0; tries < 40; ++tries) {
            // argmin |J s + r|^2 + lambda |D s|^2 as an augmented least-squares problem
            Mat aug(j.rows() + 4, 4);
            aug.topRows(j.rows()) = j;
            aug.bottomRows(4) = (std::sqrt(lambda) * scale).asDiagonal();
            Vec rhs = Vec::Zero(j.rows() + 4);
            rhs.head(j.rows()) = -r;
            const Params step = aug.colPivHouseholderQr().solve(rhs);
            const Params cand = p + step;
            const Vec rc = residuals(fd, cand);
            const double fc = cost(rc);
            if (std::isfinite(fc) && fc < f) {
                const double rel = (f - fc) / std::max(f, 1e-300);
                p = cand;
                r = rc;
                f = fc;
                lambda = std::max(lambda / 3.0, 1e-15);
                improved = true;
                converged = rel < 1e-15 || step.norm() <= 1e-15 * (p.norm() + 1e-15);
                break;
            }
            lambda *= 4.0;
            if (lambda > 1e16) break;
        }
        if (!improved || f == 0.0) break;
    }
    return {p, f, it, p.allFinite() && std::isfinite(f)};
}

}  // namespace

ExpFitModel fit_two_term_exp(std::span<const std::pair<double, double>> points, const FitOptions& options) {
    std::vector<std::pair<double, double>> pts(points.begin(), points.end());
    if (options.bin_width_m > 0.0) pts = bin_points(points, options.bin_width_m);
    if (pts.size() < 8) {
        throw InsufficientData("exponential fit needs at least 8 points, got " + std::to_string(pts.size()));
    }
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -xmin;
    FitData fd{Vec(static_cast<long>(pts.size())), Vec(static_cast<long>(pts.size()))};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!std::isfinite(pts[i].first) || !std::isfinite(pts[i].second)) {
            throw DomainError("exponential fit: non-finite point");
        }
        fd.x[static_cast<long>(i)] = pts[i].first;
        fd.y[static_cast<long>(i)] = pts[i].second;
        xmin = std::min(xmin, pts[i].first);
        xmax = std::max(xmax, pts[i].first);
    }
    if (xmax - xmin < 500.0) {
        throw InsufficientData("exponential fit needs points spanning at least 500 m, got " +
                               csv::format(xmax - xmin) + " m");
    }

    constexpr std::array<double, 5> kFast{-0.05, -0.02, -0.01, -0.005, -0.002};
    constexpr std::array<double, 5> kSlow{-1e-3, -3e-4, -1e-4, -3e-5, 0.0};

    std::optional<LmOutcome> best;
    double best_initial = std::numeric_limits<double>::infinity();
    std::ostringstream diag;
    int failed = 0;
    for (double fast : kFast) {
        for (double slow : kSlow) {
            const Params start = linear_start(fd, fast, slow);
            const double c0 = cost(residuals(fd, start));
            if (std::isfinite(c0)) best_initial = std::min(best_initial, c0);
            const LmOutcome o = levenberg_marquardt(fd, start, options.max_iterations);
            if (!o.finite) {
                ++failed;
                diag << " start(" << fast << ',' << slow << ") diverged;";
                continue;
            }
            if (!best || o.cost < best->cost) best = o;
        }
    }
    if (!best) {
        throw FitError("exponential fit did not converge from any of " + std::to_string(failed) + " starts:" +
                       diag.str());
    }
    ExpFitModel m;
    m.a = best->p[0];
    m.b = best->p[1];
    m.c = best->p[2];
    m.d = best->p[3];
    if (std::abs(m.b) < std::abs(m.d)) {
        std::swap(m.a, m.c);
        std::swap(m.b, m.d);
    }
    const auto n = static_cast<double>(pts.size());
    m.residual_rmse = std::sqrt(best->cost / n);
    m.initial_rmse = std::sqrt(best_initial / n);
    m.n_points = pts.size();
    m.iterations = best->iterations;
    return m;
}

double knee_distance(const ExpFitModel& model, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("knee threshold must be in (0, 1)");
    const bool fast_decays = model.b < 0.0 && model.a != 0.0;
    const bool slow_decays = model.d < 0.0 && model.c != 0.0;
    if (!fast_decays && !slow_decays) throw DomainError("no knee: model does not decay");
    const double s0 = std::abs(model.slope(0.0));
    if (!(s0 > 0.0)) throw DomainError("no knee: zero initial slope");
    const double target = threshold * s0;
    auto below = [&](double x) { return std::abs(model.slope(x)) <= target; };

    double fastest = 0.0;
    double slowest = std::numeric_limits<double>::infinity();
    for (auto [coef, rate] : {std::pair{model.a, model.b}, std::pair{model.c, model.d}}) {
        if (coef == 0.0 || rate == 0.0) continue;
        fastest = std::max(fastest, std::abs(rate));
        if (rate < 0.0) slowest = std::min(slowest, std::abs(rate));
    }
    const double h = std::min(1.0, 0.05 / fastest);
    const double limit = 20.0 * std::log(1.0 / threshold) / slowest + 10.0;
    double lo = 0.0;
    double hi = -1.0;
    const auto steps = static_cast<std::int64_t>(std::min(limit / h, 1e8));
    for (std::int64_t i = 1; i <= steps; ++i) {
        const double x = static_cast<double>(i) * h;
        if (below(x)) {
            hi = x;
            break;
        }
        lo = x;
    }
    if (hi < 0.0) throw DomainError("no knee: slope never falls below the threshold");
    for (int i = 0; i < 200 && hi - lo > 1e-9; ++i) {
        const double mid = 0.5 * (lo + hi);
        (below(mid) ? hi : lo) = mid;
    }
    return std::round(hi / 10.0) * 10.0;
}

// ---------------------------------------------------------------------------
// Exports

void write_grid_csv(const Grid& grid, std::ostream& out) {
    out << "lat,lon,value\n";
    const GridSpec spec = grid.spec();
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const GeoPoint c = spec.cell_center(ix, iy);
            out << csv::format(c.lat) << ',' << csv::format(c.lon) << ',' << csv::format(grid.at(ix, iy)) << '\n';
        }
    }
}

void write_grid_pgm(const Grid& grid, std::ostream& out, std::optional<std::pair<double, double>> range) {
    const double lo = range ? range->first : grid.min();
    const double hi = range ? range->second : grid.max();
    out << "P5\n# aqnet " << to_string(grid.pollutant) << ' ' << format_iso8601(grid.timestamp)
        << " min=" << csv::format(lo) << " max=" << csv::format(hi) << "\n"
        << grid.nx << ' ' << grid.ny << "\n255\n";
    for (double v : grid.cells) {
        double level = 0.0;
        if (hi > lo) level = std::clamp(std::round(255.0 * (v - lo) / (hi - lo)), 0.0, 255.0);
        out.put(static_cast<char>(static_cast<unsigned char>(level)));
    }
}

namespace {
constexpr std::array<std::string_view, 5> kCorrCols{"device_a", "device_b", "distance_m", "tau", "n"};
}

void write_correlation_csv(std::span<const CorrelationPoint> points, std::ostream& out) {
    out << "device_a,device_b,distance_m,tau,n\n";
    for (const auto& p : points) {
        out << p.device_a << ',' << p.device_b << ',' << csv::format(p.distance_m) << ',' << csv::format(p.tau) << ','
            << p.n_samples << '\n';
    }
}

std::vector<CorrelationPoint> read_correlation_csv(std::istream& in) {
    std::string line;
    if (!csv::read_line(in, line)) throw SchemaError("correlation csv: empty file");
    csv::expect_header(line, kCorrCols, "correlation csv");
    std::vector<CorrelationPoint> out;
    std::size_t line_no = 1;
    while (csv::read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != kCorrCols.size()) {
            throw SchemaError("correlation csv line " + std::to_string(line_no) + ": expected 5 fields, found " +
                              std::to_string(f.size()));
        }
        CorrelationPoint p;
        p.device_a = static_cast<DeviceId>(csv::parse_int(f[0], line_no, kCorrCols[0]));
        p.device_b = static_cast<DeviceId>(csv::parse_int(f[1], line_no, kCorrCols[1]));
        p.distance_m = csv::parse_double(f[2], line_no, kCorrCols[2]);
        p.tau = csv::parse_double(f[3], line_no, kCorrCols[3]);
        p.n_samples = static_cast<std::size_t>(csv::parse_int(f[4], line_no, kCorrCols[4]));
        out.push_back(p);
    }
    return out;
}

std::string fit_report_json(const ExpFitModel& model, double knee_threshold, std::optional<double> knee_m) {
    nlohmann::ordered_json j;
    j["model"] = "a*exp(b*x) + c*exp(d*x)";
    j["a"] = model.a;
    j["b"] = model.b;
    j["c"] = model.c;
    j["d"] = model.d;
    j["residual_rmse"] = model.residual_rmse;
    j["n_points"] = model.n_points;
    j["iterations"] = model.iterations;
    j["knee_threshold"] = knee_threshold;
    if (knee_m) {
        j["knee_distance_m"] = *knee_m;
    } else {
        j["knee_distance_m"] = nullptr;
    }
    return j.dump(2) + "\n";
}

}  // namespace aqnet::analytics

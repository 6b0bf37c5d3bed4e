#include "aqnet/kernels.hpp"

#include <vector>

namespace aqnet::kernels {

PairOutcome tau_on_overlap(const SeriesView& a, const SeriesView& b, std::size_t min_overlap) {
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t i = 0, j = 0; i < a.points.size() && j < b.points.size();) {
        const Timestamp ta = a.points[i].t;
        const Timestamp tb = b.points[j].t;
        if (ta < tb) {
            ++i;
        } else if (tb < ta) {
            ++j;
        } else {
            x.push_back(a.points[i].v);
            y.push_back(b.points[j].v);
            ++i;
            ++j;
        }
    }
    PairOutcome out;
    out.n = x.size();
    if (x.size() < min_overlap || x.size() < 2) {
        out.status = PairStatus::InsufficientOverlap;
        return out;
    }
    try {
        out.tau = analytics::kendall_tau(x, y);
    } catch (const DomainError&) {
        out.status = PairStatus::AllTied;
    }
    return out;
}

namespace serial {

void idw_grid(std::span<const analytics::Sample> samples, const analytics::GridSpec& spec, double power,
              std::span<double> out) {
    for (int iy = 0; iy < spec.ny; ++iy) {
        for (int ix = 0; ix < spec.nx; ++ix) {
            out[static_cast<std::size_t>(iy) * spec.nx + ix] = analytics::idw(samples, spec.cell_center(ix, iy), power);
        }
    }
}

void pairwise_tau(std::span<const SeriesView> series, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                  std::size_t min_overlap, std::span<PairOutcome> out) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        out[k] = tau_on_overlap(series[pairs[k].first], series[pairs[k].second], min_overlap);
    }
}

}  // namespace serial

namespace omp {

void idw_grid(std::span<const analytics::Sample> samples, const analytics::GridSpec& spec, double power,
              std::span<double> out) {
    const long total = static_cast<long>(spec.nx) * spec.ny;
#pragma omp parallel for schedule(static)
    for (long k = 0; k < total; ++k) {
        const int iy = static_cast<int>(k / spec.nx);
        const int ix = static_cast<int>(k % spec.nx);
        out[static_cast<std::size_t>(k)] = analytics::idw(samples, spec.cell_center(ix, iy), power);
    }
}

void pairwise_tau(std::span<const SeriesView> series, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                  std::size_t min_overlap, std::span<PairOutcome> out) {
    const long n = static_cast<long>(pairs.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (long k = 0; k < n; ++k) {
        const auto& p = pairs[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(k)] = tau_on_overlap(series[p.first], series[p.second], min_overlap);
    }
}

}  // namespace omp

}  // namespace aqnet::kernels

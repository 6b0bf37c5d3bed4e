#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "aqnet/analytics.hpp"

// Hot loops of the analytics module. `serial` is the reference; `omp` parallelises over
// independent cells / pairs with no cross-iteration reductions, so results are bit-identical.
namespace aqnet::kernels {

struct SeriesView {
    std::span<const pipeline::TimePoint> points;
};

enum class PairStatus { Ok, InsufficientOverlap, AllTied };

struct PairOutcome {
    PairStatus status = PairStatus::Ok;
    double tau = 0.0;
    std::size_t n = 0;
};

namespace serial {
void idw_grid(std::span<const analytics::Sample> samples, const analytics::GridSpec& spec, double power,
              std::span<double> out);
void pairwise_tau(std::span<const SeriesView> series, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                  std::size_t min_overlap, std::span<PairOutcome> out);
}  // namespace serial

namespace omp {
void idw_grid(std::span<const analytics::Sample> samples, const analytics::GridSpec& spec, double power,
              std::span<double> out);
void pairwise_tau(std::span<const SeriesView> series, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                  std::size_t min_overlap, std::span<PairOutcome> out);
}  // namespace omp

/// Tau over the timestamps two series share.
PairOutcome tau_on_overlap(const SeriesView& a, const SeriesView& b, std::size_t min_overlap);

}  // namespace aqnet::kernels

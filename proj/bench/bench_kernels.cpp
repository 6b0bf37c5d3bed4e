#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "aqnet/geo.hpp"
#include "aqnet/kernels.hpp"

using namespace aqnet;

namespace {

const BBox kBox = BBox::around({17.4455, 78.3489}, 2000, 2000);

std::vector<analytics::Sample> samples(int n) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-900, 900), v(50, 400);
    std::vector<analytics::Sample> out;
    for (int i = 0; i < n; ++i) out.push_back({from_local(kBox.center(), {u(rng), u(rng)}), v(rng)});
    return out;
}

struct TauInput {
    std::vector<std::vector<pipeline::TimePoint>> data;
    std::vector<kernels::SeriesView> views;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

TauInput tau_input(std::size_t devices, std::size_t hours) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0, 1);
    TauInput in;
    for (std::size_t d = 0; d < devices; ++d) {
        auto& s = in.data.emplace_back();
        for (std::size_t h = 0; h < hours; ++h) {
            if (rng() % 20 == 0) continue;
            s.push_back({static_cast<Timestamp>(h * 3600), 100 + 30 * g(rng)});
        }
    }
    for (const auto& s : in.data) in.views.push_back({s});
    for (std::size_t i = 0; i < devices; ++i) {
        for (std::size_t j = i + 1; j < devices; ++j) in.pairs.emplace_back(i, j);
    }
    return in;
}

template <auto Kernel>
void BM_idw_grid(benchmark::State& state) {
    const auto s = samples(49);
    const analytics::GridSpec spec{kBox, static_cast<int>(state.range(0)), static_cast<int>(state.range(0))};
    std::vector<double> out(static_cast<std::size_t>(spec.nx * spec.ny));
    for (auto _ : state) {
        Kernel(s, spec, 2.0, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(out.size()));
}

template <auto Kernel>
void BM_pairwise_tau(benchmark::State& state) {
    const auto in = tau_input(49, static_cast<std::size_t>(state.range(0)));
    std::vector<kernels::PairOutcome> out(in.pairs.size());
    for (auto _ : state) {
        Kernel(in.views, in.pairs, 24, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(in.pairs.size()));
}

}  // namespace

BENCHMARK(BM_idw_grid<kernels::serial::idw_grid>)->Name("idw_grid/serial")->Arg(40)->Arg(200);
BENCHMARK(BM_idw_grid<kernels::omp::idw_grid>)->Name("idw_grid/omp")->Arg(40)->Arg(200);
BENCHMARK(BM_pairwise_tau<kernels::serial::pairwise_tau>)->Name("pairwise_tau/serial")->Arg(720)->Arg(5000);
BENCHMARK(BM_pairwise_tau<kernels::omp::pairwise_tau>)->Name("pairwise_tau/omp")->Arg(720)->Arg(5000);

BENCHMARK_MAIN();

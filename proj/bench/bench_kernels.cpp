// Parallel kernels against their serial references.
//
//   bench_kernels --benchmark_filter=Simulate

#include <benchmark/benchmark.h>
#include <omp.h>

#include "fbsde/girsanov.hpp"
#include "fbsde/markets.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/regression.hpp"

namespace {

using namespace fbsde;

MarketSpec two_asset() {
    Eigen::MatrixXd corr(2, 2);
    corr << 1.0, 0.5, 0.5, 1.0;
    return black_scholes_market({100.0, 100.0}, {0.08, 0.06}, {0.2, 0.3}, corr, 0.02);
}

constexpr std::size_t kPaths = 20000;
constexpr long long kSteps = 50;

void BM_SimulateParallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto m = two_asset();
    const auto grid = build_grid(0.0, 1.0, kSteps);
    for (auto _ : state) {
        auto b = simulate_paths(market_diffusion(m), JumpSpec::none(), grid, kPaths, 1);
        benchmark::DoNotOptimize(b.states.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long long>(kPaths) * kSteps);
}

void BM_SimulateSerial(benchmark::State& state) {
    const auto m = two_asset();
    const auto grid = build_grid(0.0, 1.0, kSteps);
    for (auto _ : state) {
        auto b = reference::simulate_paths_serial(market_diffusion(m), JumpSpec::none(), grid, kPaths, 1);
        benchmark::DoNotOptimize(b.states.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long long>(kPaths) * kSteps);
}

void BM_DensityParallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto m = two_asset();
    const auto b = simulate_paths(market_diffusion(m), JumpSpec::none(), build_grid(0.0, 1.0, kSteps), kPaths, 1);
    const auto tilt = p_to_q_tilt(m);
    for (auto _ : state) {
        auto h = stochastic_exponential(tilt, b, 0.0, 1.0);
        benchmark::DoNotOptimize(h.values.data());
    }
}

void BM_DensitySerial(benchmark::State& state) {
    const auto m = two_asset();
    const auto b = simulate_paths(market_diffusion(m), JumpSpec::none(), build_grid(0.0, 1.0, kSteps), kPaths, 1);
    const auto tilt = p_to_q_tilt(m);
    for (auto _ : state) {
        auto h = reference::stochastic_exponential_serial(tilt, b, 0.0, 1.0);
        benchmark::DoNotOptimize(h.values.data());
    }
}

void BM_NormalMatrixParallel(benchmark::State& state) {
    omp_set_num_threads(static_cast<int>(state.range(0)));
    const auto m = two_asset();
    const auto b = simulate_paths(market_diffusion(m), JumpSpec::none(), build_grid(0.0, 1.0, kSteps), kPaths, 1);
    for (auto _ : state) {
        NodeRegression reg(b, kSteps / 2, 2);
        benchmark::DoNotOptimize(reg.normal_matrix().data());
    }
}

void BM_NormalMatrixSerial(benchmark::State& state) {
    const auto m = two_asset();
    const auto b = simulate_paths(market_diffusion(m), JumpSpec::none(), build_grid(0.0, 1.0, kSteps), kPaths, 1);
    for (auto _ : state) {
        auto g = reference::normal_matrix_serial(b, kSteps / 2, 2);
        benchmark::DoNotOptimize(g.data());
    }
}

}  // namespace

BENCHMARK(BM_SimulateParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DensityParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DensitySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NormalMatrixParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NormalMatrixSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

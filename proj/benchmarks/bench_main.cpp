#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "hybridsim/dynamics.hpp"
#include "hybridsim/expansions.hpp"
#include "hybridsim/monte_carlo.hpp"
#include "hybridsim/potentials.hpp"

using namespace hybridsim;

namespace {

GaussianStateSpec bench_state() {
    CorrelatedInitialData d;
    d.z1 = d.z2 = d.y1 = d.y2 = 0.1;
    d.qp0 = d.qx0 = 0.1;
    d.means = {-1, -3, 1, -1};
    return d.state();
}

PolynomialPotential bench_potential() {
    ScenarioParams p;
    p.alpha = 1.0;
    p.classical_quadratic = 1.0;
    p.beta1 = -1.0;
    p.beta2 = 2.0;
    return example2_potential(p);
}

void BM_GaussianMomentFill(benchmark::State& state) {
    const int cap = static_cast<int>(state.range(0));
    const MomentLayout& layout = shared_layout(cap);
    const CovarianceMatrix cov = bench_state().cov;
    std::vector<double> out;
    for (auto _ : state) {
        fill_gaussian_moments(cov, layout, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(layout.size()));
}
BENCHMARK(BM_GaussianMomentFill)->Arg(8)->Arg(13)->Arg(16);

void BM_HierarchyStep(benchmark::State& state) {
    const int cap = static_cast<int>(state.range(0));
    const auto spec = bench_state();
    const auto pot = bench_potential();
    IntegratorConfig cfg;
    cfg.dt = 1e-4;
    cfg.steps = 16;
    cfg.order_cap = cap;
    cfg.sample_stride = cfg.steps;
    for (auto _ : state) {
        benchmark::DoNotOptimize(integrate(spec, pot, cfg).back().f);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * cfg.steps);
}
BENCHMARK(BM_HierarchyStep)->Arg(4)->Arg(6)->Arg(8)->Arg(11);

void BM_WickMoment(benchmark::State& state) {
    const CovarianceMatrix cov = bench_state().cov;
    const MultiIndex idx(2, 2, static_cast<int>(state.range(0)) - 4, 0);
    for (auto _ : state) benchmark::DoNotOptimize(wick_moment(cov, idx));
}
BENCHMARK(BM_WickMoment)->Arg(6)->Arg(10)->Arg(14);

void BM_EnsembleEvolve(benchmark::State& state) {
    const auto spec = bench_state();
    const auto pot = bench_potential();
    auto ens = mc::sample_gaussian(spec, static_cast<std::size_t>(state.range(0)), 42);
    for (auto _ : state) {
        mc::evolve_ensemble(ens, pot, 1e-4, 8, 1);
        benchmark::DoNotOptimize(ens.particles.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 8 * state.range(0));
}
BENCHMARK(BM_EnsembleEvolve)->Arg(10000)->Arg(100000);

void BM_NumericTaylor(benchmark::State& state) {
    const auto spec = bench_state();
    const auto pot = bench_potential();
    for (auto _ : state) {
        benchmark::DoNotOptimize(numeric_taylor(spec, pot, 2, {}).coeffs.c[2]);
    }
}
BENCHMARK(BM_NumericTaylor);

} // namespace

BENCHMARK_MAIN();

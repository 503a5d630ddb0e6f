// Serial reference kernels against their OpenMP versions on converged-size grids.
#include "shockfit/free_boundary_solver.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

#include <map>
#include <numbers>

using namespace shockfit;

namespace {

// A near-normal reflection field sampled from the reflected state on the
// starting grid; the kernels only care about grid size and a smooth field.
const Field& field(int n) {
    static std::map<int, Field> cache;
    auto it = cache.find(n);
    if (it == cache.end()) {
        const Configuration c = build_configuration(Problem::RegularReflection, GasParams{2.0, 1.0},
                                                    UpstreamSpec{2.0, 0.0, 0.0}, std::numbers::pi / 2.0 - 0.05);
        const GridOptions g{n, n};
        Field f = make_field(build_grid(c, initial_shock(c, g), g), c.upstream, c.params);
        f.values = sample_state(f, c.reflected);
        it = cache.emplace(n, std::move(f)).first;
    }
    return it->second;
}

void BM_StencilsSerial(benchmark::State& st) {
    const MappedGrid& g = *field(static_cast<int>(st.range(0))).grid;
    for (auto _ : st) benchmark::DoNotOptimize(kernels::build_stencils_serial(g));
    st.SetItemsProcessed(st.iterations() * g.size());
}

void BM_StencilsOmp(benchmark::State& st) {
    const MappedGrid& g = *field(static_cast<int>(st.range(0))).grid;
    omp_set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(kernels::build_stencils_omp(g));
    st.SetItemsProcessed(st.iterations() * g.size());
}

void BM_ResidualSerial(benchmark::State& st) {
    const Field& f = field(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(kernels::pde_residual_serial(f));
    st.SetItemsProcessed(st.iterations() * f.size());
}

void BM_ResidualOmp(benchmark::State& st) {
    const Field& f = field(static_cast<int>(st.range(0)));
    omp_set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) benchmark::DoNotOptimize(kernels::pde_residual_omp(f));
    st.SetItemsProcessed(st.iterations() * f.size());
}

void sizes(benchmark::internal::Benchmark* b) {
    for (int n : {65, 129, 257}) b->Args({n});
}

void sizes_threads(benchmark::internal::Benchmark* b) {
    const int hw = omp_get_num_procs();
    for (int n : {65, 129, 257})
        for (int t = 1; t <= hw; t *= 2) b->Args({n, t});
}

}  // namespace

BENCHMARK(BM_StencilsSerial)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_StencilsOmp)->Apply(sizes_threads)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_ResidualSerial)->Apply(sizes)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ResidualOmp)->Apply(sizes_threads)->Unit(benchmark::kMicrosecond)->UseRealTime();

BENCHMARK_MAIN();

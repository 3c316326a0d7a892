#include "slm/mes_solver.hpp"

#include <benchmark/benchmark.h>

namespace {

struct Fixture {
    slm::GroundTruth gt;
    slm::MiniBatch batch;
    slm::ModelState state;
    slm::MomentProfile profile;

    Fixture(slm::Index d, slm::Index k, slm::Index n) {
        slm::Rng rng(1);
        gt = slm::make_ground_truth(d, k, false, rng);
        batch.x = slm::sample_batch(slm::DistributionSpec::gaussian(), d, n, rng);
        batch.y = slm::label_batch(gt, batch.x, rng);
        state = slm::initial_state(batch, k, slm::SolverMode::mip, rng, 5);
        state.v = state.u;
        profile = slm::analytic_profile(slm::DistributionSpec::gaussian(), d, true);
    }
};

void BM_ApplySensing(benchmark::State& st) {
    const slm::Index d = st.range(0), k = st.range(1), n = 4 * k * d;
    Fixture f(d, k, n);
    for (auto _ : st)
        benchmark::DoNotOptimize(slm::apply_sensing(f.batch.x, f.state.w, f.state.u, f.state.v, false));
    st.SetItemsProcessed(st.iterations() * n);
}

void BM_HTimesFactor(benchmark::State& st) {
    const slm::Index d = st.range(0), k = st.range(1), n = 4 * k * d;
    Fixture f(d, k, n);
    for (auto _ : st) benchmark::DoNotOptimize(slm::h_times_factor(f.batch.x, f.batch.y, f.state.u));
    st.SetItemsProcessed(st.iterations() * n);
}

void BM_PStats(benchmark::State& st) {
    const slm::Index d = st.range(0), k = st.range(1), n = 4 * k * d;
    Fixture f(d, k, n);
    for (auto _ : st) benchmark::DoNotOptimize(slm::p_stats(f.batch.x, f.batch.y));
    st.SetItemsProcessed(st.iterations() * n);
}

void BM_MesStep(benchmark::State& st) {
    const slm::Index d = st.range(0), k = st.range(1), n = 4 * k * d;
    Fixture f(d, k, n);
    slm::SolverConfig cfg;
    cfg.rank = k;
    cfg.batch_size = n;
    for (auto _ : st) benchmark::DoNotOptimize(slm::mes_step(f.state, f.batch, f.profile, cfg));
    st.SetItemsProcessed(st.iterations() * n);
}

void shapes(benchmark::internal::Benchmark* b) {
    b->Args({100, 5})->Args({200, 5})->Args({500, 10})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_ApplySensing)->Apply(shapes);
BENCHMARK(BM_HTimesFactor)->Apply(shapes);
BENCHMARK(BM_PStats)->Apply(shapes);
BENCHMARK(BM_MesStep)->Apply(shapes);
BENCHMARK_MAIN();

// Microbenchmarks for the hot paths: the dual minimization, the stable
// exponential reductions, and one solver outer iteration.

#include <benchmark/benchmark.h>

#include "perfdro/experiments.hpp"

namespace {

using namespace perfdro;

LossProfile random_profile(int n, std::uint64_t seed) {
    Rng rng(seed);
    LossProfile p;
    p.losses.resize(n);
    p.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        p.losses[i] = 2.0 * rng.uniform01();
        p.weights[i] = 0.1 + rng.uniform01();
    }
    p.weights /= p.weights.sum();
    p.theta = Vector::Zero(1);
    return p;
}

void BM_weighted_log_sum_exp(benchmark::State& state) {
    const LossProfile p = random_profile(static_cast<int>(state.range(0)), 7);
    for (auto _ : state)
        benchmark::DoNotOptimize(weighted_log_sum_exp(p.weights, p.losses));
}
BENCHMARK(BM_weighted_log_sum_exp)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_drpr(benchmark::State& state) {
    const LossProfile p = random_profile(static_cast<int>(state.range(0)), 11);
    for (auto _ : state) benchmark::DoNotOptimize(drpr(p, 0.05).value);
}
BENCHMARK(BM_drpr)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_worst_case_weights(benchmark::State& state) {
    const LossProfile p = random_profile(static_cast<int>(state.range(0)), 13);
    const double mu = drpr(p, 0.05).mu_star;
    for (auto _ : state) benchmark::DoNotOptimize(worst_case_weights(p, mu));
}
BENCHMARK(BM_worst_case_weights)->Arg(1000)->Arg(100000);

void BM_loss_profile(benchmark::State& state) {
    const LossModel model{0.001};
    const int d = 9;
    const DistributionMap map{
        gen_credit_like_data(d, static_cast<std::size_t>(state.range(0)), 3),
        StrategicLinearResponse{0.5, credit_like_strategic_mask(d)}};
    const Vector theta = Vector::Constant(d, 0.2);
    for (auto _ : state) benchmark::DoNotOptimize(loss_profile(model, map, theta));
}
BENCHMARK(BM_loss_profile)->Arg(1000)->Arg(10000);

void BM_drpo_solve(benchmark::State& state) {
    const LossModel model{0.001};
    const int d = 9;
    const DistributionMap map{
        gen_credit_like_data(d, static_cast<std::size_t>(state.range(0)), 5),
        StrategicLinearResponse{0.5, credit_like_strategic_mask(d)}};
    SolveConfig cfg;
    cfg.max_outer_iters = 10;
    cfg.inner_gd_iters = 20;
    const Vector theta0 = Vector::Zero(d);
    for (auto _ : state)
        benchmark::DoNotOptimize(minimize_drpr(model, map, 0.02, cfg, theta0).objective);
}
BENCHMARK(BM_drpo_solve)->Unit(benchmark::kMillisecond)->Arg(1000)->Arg(5000);

}  // namespace

BENCHMARK_MAIN();

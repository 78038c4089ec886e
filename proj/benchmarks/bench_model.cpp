#include <benchmark/benchmark.h>

#include "irff/data.hpp"
#include "irff/kernels.hpp"
#include "irff/losses.hpp"
#include "irff/model.hpp"
#include "irff/optim.hpp"
#include "irff/rng.hpp"

using namespace irff;

namespace {

void BM_Gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    std::vector<real> a(n * n), b(n * n), c(n * n);
    for (auto& x : a) x = static_cast<real>(rng.normal());
    for (auto& x : b) x = static_cast<real>(rng.normal());
    for (auto _ : state) {
        kernels::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.counters["GFLOP/s"] =
        benchmark::Counter(2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate,
                           benchmark::Counter::kIs1000);
}

void BM_ModelForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    SynthParams p;
    p.size = n;
    const auto s = synth_generate(1, p);
    IhbsModel model(ModelConfig{});
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(s.rgb, s.thermal).main_prob.data().data());
}

void BM_TrainStep(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    SynthParams p;
    p.size = n;
    const auto s = synth_generate(2, p);
    IhbsModel model(ModelConfig{});
    auto params = model.parameters();
    auto opt = make_optimizer_state(params, AdamWOptions{});
    for (auto _ : state) {
        zero_grad(params);
        const auto out = model.forward(s.rgb, s.thermal);
        backward(composite_loss(s.mask, out.main_prob, out.aux_prob, LossWeights{}).total);
        optimizer_step(params, opt);
    }
}

}  // namespace

BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ModelForward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();

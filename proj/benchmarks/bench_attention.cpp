#include <benchmark/benchmark.h>

#include "irff/fusion.hpp"
#include "irff/ops.hpp"
#include "irff/rng.hpp"

using namespace irff;

namespace {

Tensor random_map(Rng& rng, std::size_t c, std::size_t n) {
    std::vector<real> v(c * n * n);
    for (auto& x : v) x = static_cast<real>(rng.normal());
    return Tensor::from({c, n, n}, std::move(v));
}

template <class F>
void run_attention(benchmark::State& state, F&& attention) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto c = static_cast<std::size_t>(state.range(1));
    const auto segments = static_cast<std::size_t>(state.range(2));
    Rng rng(1);
    const auto q = random_map(rng, c, n), k = random_map(rng, c, n), v = random_map(rng, c, n);
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(attention(q, k, v, segments));
    const auto cost = attention_cost_estimate(n, n, c, c, segments, sizeof(float));
    state.counters["naive_MB"] = cost.naive_bytes / 1e6;
    state.counters["efficient_MB"] = cost.efficient_bytes / 1e6;
    state.counters["pixels/s"] = benchmark::Counter(static_cast<double>(n * n), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_EfficientAttention(benchmark::State& state) {
    run_attention(state, [](const Tensor& q, const Tensor& k, const Tensor& v, std::size_t s) {
        return efficient_cross_attention(q, k, v, s);
    });
}

void BM_DenseAttention(benchmark::State& state) {
    run_attention(state, [](const Tensor& q, const Tensor& k, const Tensor& v, std::size_t s) {
        return dense_factorized_attention(q, k, v, s);
    });
}

void BM_EfficientAttentionBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto c = static_cast<std::size_t>(state.range(1));
    Rng rng(2);
    auto q = random_map(rng, c, n), k = random_map(rng, c, n), v = random_map(rng, c, n);
    for (auto* t : {&q, &k, &v}) t->set_requires_grad(true);
    for (auto _ : state) {
        for (auto* t : {&q, &k, &v}) t->zero_grad();
        backward(sum(efficient_cross_attention(q, k, v, 4)));
        benchmark::DoNotOptimize(q.grad().data());
    }
}

}  // namespace

BENCHMARK(BM_EfficientAttention)
    ->ArgsProduct({{8, 16, 32, 64, 128}, {32, 64}, {1, 4}})
    ->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseAttention)->ArgsProduct({{8, 16, 32, 64}, {32}, {4}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EfficientAttentionBackward)->ArgsProduct({{16, 32, 64}, {32}})->Unit(benchmark::kMicrosecond);

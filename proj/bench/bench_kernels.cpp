// Serial reference vs OpenMP kernels.
#include <benchmark/benchmark.h>

#include "cascade/kernels.hpp"
#include "cascade/random.hpp"

namespace {

using namespace cascade;

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = uniform01(rng) * 2 - 1;
    return v;
}

template <bool Parallel>
void BM_dot_rows(benchmark::State& st) {
    const std::size_t rows = static_cast<std::size_t>(st.range(0)), dim = 384;
    const auto q = filled(dim, 1), m = filled(rows * dim, 2);
    std::vector<double> out(rows);
    for (auto _ : st) {
        if constexpr (Parallel) kernels::dot_rows(q, m, out);
        else kernels::serial::dot_rows(q, m, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<long long>(rows));
}

template <bool Parallel>
void BM_affine(benchmark::State& st) {
    // M masked copies of one query through a 150-class head
    const std::size_t n = static_cast<std::size_t>(st.range(0)), dim = 384, classes = 150;
    const auto x = filled(n * dim, 3), w = filled(classes * dim, 4), b = filled(classes, 5);
    std::vector<double> logits(n * classes);
    for (auto _ : st) {
        if constexpr (Parallel) kernels::affine(x, w, b, dim, logits);
        else kernels::serial::affine(x, w, b, dim, logits);
        benchmark::DoNotOptimize(logits.data());
    }
}

template <bool Parallel>
void BM_threshold_counts(benchmark::State& st) {
    const std::size_t n = 2000, classes = 20, t = static_cast<std::size_t>(st.range(0));
    const auto s = filled(n * classes, 6), th = filled(t, 7);
    std::vector<unsigned char> g(n * classes);
    Rng rng(8);
    for (auto& x : g) x = bernoulli(rng, 0.1);
    std::vector<kernels::PairCounts> out(t);
    for (auto _ : st) {
        if constexpr (Parallel) kernels::threshold_counts(s, g, classes, th, out);
        else kernels::serial::threshold_counts(s, g, classes, th, out);
        benchmark::DoNotOptimize(out.data());
    }
}

} // namespace

BENCHMARK(BM_dot_rows<false>)->Arg(1000)->Arg(20000);
BENCHMARK(BM_dot_rows<true>)->Arg(1000)->Arg(20000)->UseRealTime();
BENCHMARK(BM_affine<false>)->Arg(10)->Arg(320);
BENCHMARK(BM_affine<true>)->Arg(10)->Arg(320)->UseRealTime();
BENCHMARK(BM_threshold_counts<false>)->Arg(64)->Arg(1024);
BENCHMARK(BM_threshold_counts<true>)->Arg(64)->Arg(1024)->UseRealTime();

BENCHMARK_MAIN();

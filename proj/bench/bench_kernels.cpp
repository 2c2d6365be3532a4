#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dodt/autodiff/kernels.hpp"

namespace kn = dodt::ad::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const kn::GemmDims dims{n, n, n, false, false};
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kn::parallel::gemm(dims, a, b, c);
    } else {
      kn::serial::gemm(dims, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{64};
  const auto x = random_values(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kn::parallel::softmax_rows(rows, cols, x, y);
    } else {
      kn::serial::softmax_rows(rows, cols, x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{64};
  const auto x = random_values(rows * cols, 4);
  std::vector<double> y(rows * cols), inv(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kn::parallel::layer_norm_rows(rows, cols, 1e-5, x, y, inv);
    } else {
      kn::serial::layer_norm_rows(rows, cols, 1e-5, x, y, inv);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Range(64, 8192);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Range(64, 8192);
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Range(64, 8192);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/parallel")->Range(64, 8192);

BENCHMARK_MAIN();

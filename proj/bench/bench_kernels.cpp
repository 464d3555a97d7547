#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "macdmp/kernels.hpp"

namespace {

using Gemm = void (*)(int, int, int, const double*, const double*, double*);

std::vector<double> random_matrix(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Shapes seen at planning time: 8 agents through a 256-wide layer, and a
// training-size batch.
void run(benchmark::State& state, Gemm gemm) {
  const int m = static_cast<int>(state.range(0));
  const int n = static_cast<int>(state.range(1));
  const int k = static_cast<int>(state.range(2));
  const auto a = random_matrix(static_cast<std::size_t>(m) * k, 1);
  const auto b = random_matrix(static_cast<std::size_t>(k) * n, 2);
  std::vector<double> c(static_cast<std::size_t>(m) * n);
  for (auto _ : state) {
    gemm(m, n, k, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["flops"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate);
}

void nn_serial(benchmark::State& s) { run(s, macdmp::kernels::serial::gemm_nn); }
void nn_omp(benchmark::State& s) { run(s, macdmp::kernels::gemm_nn); }
void nt_serial(benchmark::State& s) { run(s, macdmp::kernels::serial::gemm_nt); }
void nt_omp(benchmark::State& s) { run(s, macdmp::kernels::gemm_nt); }
void tn_serial(benchmark::State& s) { run(s, macdmp::kernels::serial::gemm_tn); }
void tn_omp(benchmark::State& s) { run(s, macdmp::kernels::gemm_tn); }

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({8, 256, 256})->Args({64, 256, 256})->Args({256, 256, 256});
}

}  // namespace

BENCHMARK(nn_serial)->Apply(shapes);
BENCHMARK(nn_omp)->Apply(shapes);
BENCHMARK(nt_serial)->Apply(shapes);
BENCHMARK(nt_omp)->Apply(shapes);
BENCHMARK(tn_serial)->Apply(shapes);
BENCHMARK(tn_omp)->Apply(shapes);

BENCHMARK_MAIN();

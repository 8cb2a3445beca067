// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "gksa/numerics/kernels.hpp"

namespace {

gksa::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  gksa::Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

template <gksa::Matrix (*Kernel)(const gksa::Matrix&, const gksa::Matrix&)>
void square_product(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const gksa::Matrix a = random_matrix(n, n, 1);
  const gksa::Matrix b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}

template <gksa::Matrix (*Kernel)(const gksa::Matrix&)>
void frame_map(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const gksa::Matrix q = random_matrix(n, 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(q));
}

template <gksa::Matrix (*Kernel)(const gksa::Matrix&)>
void row_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const gksa::Matrix s = random_matrix(n, n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(s));
}

using namespace gksa::kernels;

BENCHMARK(square_product<serial::matmul>)->Name("matmul/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(square_product<matmul>)->Name("matmul/omp")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(square_product<serial::matmul_nt>)->Name("matmul_nt/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(square_product<matmul_nt>)->Name("matmul_nt/omp")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(frame_map<serial::pairwise_sq_dist>)->Name("pairwise_sq_dist/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(frame_map<pairwise_sq_dist>)->Name("pairwise_sq_dist/omp")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(row_softmax<serial::softmax_rows>)->Name("softmax_rows/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(row_softmax<softmax_rows>)->Name("softmax_rows/omp")->RangeMultiplier(4)->Range(64, 1024);

}  // namespace

BENCHMARK_MAIN();

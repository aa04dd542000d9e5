// Parallel kernels against their serial references on GNN-sized shapes.
// Thread count follows GCBF_NUM_THREADS / OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "gcbf/numerics/kernels.hpp"
#include "gcbf/numerics/rng.hpp"

using namespace gcbf::num;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// Edge-MLP layer: (edges x 256) * (256 x 256).
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(m, 256, 1), b = random_matrix(256, 256, 2);
  Tensor c = Tensor::matrix(m, 256);
  for (auto _ : state) {
    kernels::gemm(kernels::Trans::No, kernels::Trans::No, a, b, c);
    benchmark::DoNotOptimize(c.ptr());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * m * 256 * 256 * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

void BM_GemmReference(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(m, 256, 1), b = random_matrix(256, 256, 2);
  Tensor c = Tensor::matrix(m, 256);
  for (auto _ : state) {
    kernels::gemm_reference(kernels::Trans::No, kernels::Trans::No, a, b, c);
    benchmark::DoNotOptimize(c.ptr());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * m * 256 * 256 * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

std::vector<std::size_t> offsets_for(std::size_t rows, std::size_t per_segment) {
  std::vector<std::size_t> off{0};
  while (off.back() < rows) off.push_back(std::min(rows, off.back() + per_segment));
  return off;
}

void BM_SegmentSoftmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(rows, 1, 3);
  const auto off = offsets_for(rows, 12);
  Tensor out = Tensor::like(x);
  for (auto _ : state) kernels::segment_softmax(x, off, out);
}

void BM_SegmentSoftmaxReference(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(rows, 1, 3);
  const auto off = offsets_for(rows, 12);
  Tensor out = Tensor::like(x);
  for (auto _ : state) kernels::segment_softmax_reference(x, off, out);
}

void BM_SegmentSum(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(rows, 128, 4);
  const auto off = offsets_for(rows, 12);
  Tensor out = Tensor::matrix(off.size() - 1, 128);
  for (auto _ : state) kernels::segment_sum(x, off, out);
}

void BM_SegmentSumReference(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_matrix(rows, 128, 4);
  const auto off = offsets_for(rows, 12);
  Tensor out = Tensor::matrix(off.size() - 1, 128);
  for (auto _ : state) kernels::segment_sum_reference(x, off, out);
}

void BM_ScatterAdd(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor g = random_matrix(rows, 256, 5);
  std::vector<std::size_t> idx(rows);
  Rng rng(6);
  for (auto& v : idx) v = rng.below(rows / 8 + 1);
  Tensor out = Tensor::matrix(rows / 8 + 1, 256);
  for (auto _ : state) kernels::scatter_add_rows(g, idx, out);
}

void BM_ScatterAddReference(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor g = random_matrix(rows, 256, 5);
  std::vector<std::size_t> idx(rows);
  Rng rng(6);
  for (auto& v : idx) v = rng.below(rows / 8 + 1);
  Tensor out = Tensor::matrix(rows / 8 + 1, 256);
  for (auto _ : state) kernels::scatter_add_rows_reference(g, idx, out);
}

}  // namespace

BENCHMARK(BM_Gemm)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmReference)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SegmentSoftmax)->Arg(1 << 16);
BENCHMARK(BM_SegmentSoftmaxReference)->Arg(1 << 16);
BENCHMARK(BM_SegmentSum)->Arg(1 << 14);
BENCHMARK(BM_SegmentSumReference)->Arg(1 << 14);
BENCHMARK(BM_ScatterAdd)->Arg(1 << 14);
BENCHMARK(BM_ScatterAddReference)->Arg(1 << 14);

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}

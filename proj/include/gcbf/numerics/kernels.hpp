#pragma once

// Data-parallel kernels used by the tape. Each kernel has an OpenMP version
// and a plain serial `*_reference` twin that the tests and the benchmark
// compare against. Work is split into fixed-size row chunks, so the result of
// a parallel kernel does not depend on the thread count.

#include <cstddef>
#include <span>

#include "gcbf/numerics/tensor.hpp"

namespace gcbf::num::kernels {

enum class Trans { No, Yes };

// C = op(A) * op(B) + beta * C, with C already shaped (rows(op(A)), cols(op(B))).
void gemm(Trans ta, Trans tb, const Tensor& a, const Tensor& b, Tensor& c, double beta = 0.0);
void gemm_reference(Trans ta, Trans tb, const Tensor& a, const Tensor& b, Tensor& c, double beta = 0.0);

// Rows [offsets[s], offsets[s+1]) form segment s; out has one row per segment.
void segment_sum(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out);
void segment_sum_reference(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out);

// Column-wise softmax inside each segment.
void segment_softmax(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out);
void segment_softmax_reference(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out);

void gather_rows(const Tensor& x, std::span<const std::size_t> index, Tensor& out);
// out[index[k]] += g[k], accumulated in k order for every column.
void scatter_add_rows(const Tensor& g, std::span<const std::size_t> index, Tensor& out);
void scatter_add_rows_reference(const Tensor& g, std::span<const std::size_t> index, Tensor& out);

int max_threads();
// Applies GCBF_NUM_THREADS from the environment when set.
void configure_threads_from_env();

}  // namespace gcbf::num::kernels

#include "gcbf/numerics/kernels.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "gcbf/error.hpp"

namespace gcbf::num::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

constexpr std::size_t kRowChunk = 128;
constexpr std::size_t kParallelMinWork = 1u << 16;

struct GemmDims {
  std::size_t m, n, k;
};

GemmDims check_gemm(Trans ta, Trans tb, const Tensor& a, const Tensor& b, const Tensor& c) {
  const std::size_t am = ta == Trans::No ? a.rows() : a.cols();
  const std::size_t ak = ta == Trans::No ? a.cols() : a.rows();
  const std::size_t bk = tb == Trans::No ? b.rows() : b.cols();
  const std::size_t bn = tb == Trans::No ? b.cols() : b.rows();
  if (ak != bk || c.rows() != am || c.cols() != bn) {
    throw ShapeError("gemm shape mismatch: op(A) " + std::to_string(am) + "x" + std::to_string(ak) + ", op(B) " +
                     std::to_string(bk) + "x" + std::to_string(bn) + ", C " + c.shape_string());
  }
  return {am, bn, ak};
}

void check_offsets(std::span<const std::size_t> offsets, std::size_t rows) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows) {
    throw ShapeError("segment offsets must start at 0 and end at the row count");
  }
  for (std::size_t s = 1; s < offsets.size(); ++s) {
    if (offsets[s] < offsets[s - 1]) throw ShapeError("segment offsets must be non-decreasing");
  }
}

// C[r0:r0+rn] += A[r0:r0+rn] * B, one row at a time in k order. Every output
// row is summed the same way whatever the row count or chunking, so a row's
// value depends on that row of A alone (graph locality is then bit-exact).
void gemm_rows_nn(const Tensor& a, const Tensor& b, Tensor& c, std::size_t r0, std::size_t rn) {
  const std::size_t k = a.cols(), n = b.cols();
  const double* bp = b.ptr();
  std::size_t r = r0;
  for (; r + 4 <= r0 + rn; r += 4) {
    double* __restrict c0 = c.ptr() + r * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    const double* a0 = a.ptr() + r * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
      const double* __restrict brow = bp + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = brow[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; r < r0 + rn; ++r) {
    double* __restrict c0 = c.ptr() + r * n;
    const double* a0 = a.ptr() + r * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double x0 = a0[p];
      const double* __restrict brow = bp + p * n;
      for (std::size_t j = 0; j < n; ++j) c0[j] += x0 * brow[j];
    }
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, const Tensor& a, const Tensor& b, Tensor& c, double beta) {
  const auto [m, n, k] = check_gemm(ta, tb, a, b, c);
  if (m == 0 || n == 0) return;
  ConstMap am(a.ptr(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  ConstMap bm(b.ptr(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  Map cm(c.ptr(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  const std::size_t chunks = (m + kRowChunk - 1) / kRowChunk;
  const bool parallel = m * n * std::max<std::size_t>(k, 1) >= kParallelMinWork && chunks > 1;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    const auto r0 = static_cast<Eigen::Index>(chunk * kRowChunk);
    const auto rn = static_cast<Eigen::Index>(std::min(kRowChunk, m - chunk * kRowChunk));
    auto cblock = cm.middleRows(r0, rn);
    if (beta == 0.0) {
      cblock.setZero();
    } else if (beta != 1.0) {
      cblock *= beta;
    }
    if (k == 0) continue;
    if (ta == Trans::No && tb == Trans::No) {
      gemm_rows_nn(a, b, c, static_cast<std::size_t>(r0), static_cast<std::size_t>(rn));
    } else if (ta == Trans::No && tb == Trans::Yes) {
      cblock.noalias() += am.middleRows(r0, rn) * bm.transpose();
    } else if (ta == Trans::Yes && tb == Trans::No) {
      cblock.noalias() += am.middleCols(r0, rn).transpose() * bm;
    } else {
      cblock.noalias() += am.middleCols(r0, rn).transpose() * bm.transpose();
    }
  }
}

void gemm_reference(Trans ta, Trans tb, const Tensor& a, const Tensor& b, Tensor& c, double beta) {
  const auto [m, n, k] = check_gemm(ta, tb, a, b, c);
  auto at = [&](std::size_t i, std::size_t p) { return ta == Trans::No ? a(i, p) : a(p, i); };
  auto bt = [&](std::size_t p, std::size_t j) { return tb == Trans::No ? b(p, j) : b(j, p); };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
      c(i, j) = (beta == 0.0 ? 0.0 : beta * c(i, j)) + acc;
    }
  }
}

void segment_sum(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out) {
  check_offsets(offsets, x.rows());
  const std::size_t segs = offsets.size() - 1;
  const std::size_t cols = x.cols();
  if (out.rows() != segs || out.cols() != cols) throw ShapeError("segment_sum output shape mismatch");
  const bool parallel = x.size() >= kParallelMinWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t s = 0; s < segs; ++s) {
    double* dst = out.ptr() + s * cols;
    std::fill(dst, dst + cols, 0.0);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      const double* src = x.ptr() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  }
}

void segment_sum_reference(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out) {
  check_offsets(offsets, x.rows());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double acc = 0.0;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) acc += x(r, c);
      out(s, c) = acc;
    }
  }
}

void segment_softmax(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out) {
  check_offsets(offsets, x.rows());
  if (!out.same_shape(x)) throw ShapeError("segment_softmax output shape mismatch");
  const std::size_t segs = offsets.size() - 1;
  const std::size_t cols = x.cols();
  const bool parallel = x.size() >= kParallelMinWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t s = 0; s < segs; ++s) {
    for (std::size_t c = 0; c < cols; ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) mx = std::max(mx, x(r, c));
      double denom = 0.0;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
        const double e = std::exp(x(r, c) - mx);
        out(r, c) = e;
        denom += e;
      }
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) out(r, c) /= denom;
    }
  }
}

void segment_softmax_reference(const Tensor& x, std::span<const std::size_t> offsets, Tensor& out) {
  check_offsets(offsets, x.rows());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) mx = std::max(mx, x(r, c));
      double denom = 0.0;
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) denom += std::exp(x(r, c) - mx);
      for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) out(r, c) = std::exp(x(r, c) - mx) / denom;
    }
  }
}

void gather_rows(const Tensor& x, std::span<const std::size_t> index, Tensor& out) {
  const std::size_t cols = x.cols();
  if (out.rows() != index.size() || out.cols() != cols) throw ShapeError("gather_rows output shape mismatch");
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= x.rows()) throw ShapeError("gather_rows index out of range");
  }
  const bool parallel = out.size() >= kParallelMinWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t k = 0; k < index.size(); ++k) {
    std::copy_n(x.ptr() + index[k] * cols, cols, out.ptr() + k * cols);
  }
}

void scatter_add_rows(const Tensor& g, std::span<const std::size_t> index, Tensor& out) {
  const std::size_t cols = g.cols();
  if (g.rows() != index.size() || out.cols() != cols) throw ShapeError("scatter_add_rows shape mismatch");
  // Parallel over column blocks so every output element accumulates in k order.
  constexpr std::size_t kColBlock = 32;
  const std::size_t blocks = (cols + kColBlock - 1) / kColBlock;
  const bool parallel = g.size() >= kParallelMinWork && blocks > 1;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t c0 = b * kColBlock;
    const std::size_t c1 = std::min(cols, c0 + kColBlock);
    for (std::size_t k = 0; k < index.size(); ++k) {
      const double* src = g.ptr() + k * cols;
      double* dst = out.ptr() + index[k] * cols;
      for (std::size_t c = c0; c < c1; ++c) dst[c] += src[c];
    }
  }
}

void scatter_add_rows_reference(const Tensor& g, std::span<const std::size_t> index, Tensor& out) {
  for (std::size_t k = 0; k < index.size(); ++k) {
    for (std::size_t c = 0; c < g.cols(); ++c) out(index[k], c) += g(k, c);
  }
}

int max_threads() { return omp_get_max_threads(); }

void configure_threads_from_env() {
  if (const char* env = std::getenv("GCBF_NUM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
}

}  // namespace gcbf::num::kernels

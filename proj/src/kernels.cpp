#include "lorat/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <vector>

namespace lorat::kernels {

namespace {
std::atomic<std::uint64_t> g_multiplies{0};

void count(std::int64_t m, std::int64_t k, std::int64_t n) {
  add_multiplies(static_cast<std::uint64_t>(m * k * n));
}
}  // namespace

std::uint64_t multiply_count() { return g_multiplies.load(std::memory_order_relaxed); }
void reset_multiply_count() { g_multiplies.store(0, std::memory_order_relaxed); }
void add_multiplies(std::uint64_t n) { g_multiplies.fetch_add(n, std::memory_order_relaxed); }

void gemm_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n) {
  count(m, k, n);
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    float* row = pc + i * n;
    std::fill(row, row + n, 0.0f);
    for (std::int64_t p = 0; p < k; ++p) {
      const float aip = pa[i * k + p];
      const float* brow = pb + p * n;
      for (std::int64_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n) {
  // Transposing b keeps the inner loop contiguous; the k order is unchanged.
  std::vector<float> bt(static_cast<std::size_t>(k * n));
  transpose(b, bt, n, k);
  gemm_nn(a, bt, c, m, k, n);
}

void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n) {
  count(m, k, n);
  const float* pa = a.data();
  const float* pb = b.data();
  float* pc = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::int64_t i = 0; i < m; ++i) {
    float* row = pc + i * n;
    std::fill(row, row + n, 0.0f);
    for (std::int64_t p = 0; p < k; ++p) {
      const float api = pa[p * m + i];
      const float* brow = pb + p * n;
      for (std::int64_t j = 0; j < n; ++j) row[j] += api * brow[j];
    }
  }
}

void transpose(std::span<const float> in, std::span<float> out, std::int64_t rows,
               std::int64_t cols) {
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
}

namespace serial {

void gemm_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
}

void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

}  // namespace serial
}  // namespace lorat::kernels

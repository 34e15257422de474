#pragma once

// Dense row-major GEMM kernels. The default entry points are OpenMP-parallel
// over output rows; `serial::` holds the plain triple-loop reference they are
// tested and benchmarked against. Every output element is accumulated in
// ascending k order in both paths, so results do not depend on thread count.

#include <cstdint>
#include <span>

namespace lorat::kernels {

/// c[m×n] = a[m×k] · b[k×n]
void gemm_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n);

/// c[m×n] = a[m×k] · b[n×k]ᵀ
void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n);

/// c[m×n] = a[k×m]ᵀ · b[k×n]
void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n);

/// out[cols×rows] = in[rows×cols]ᵀ
void transpose(std::span<const float> in, std::span<float> out, std::int64_t rows,
               std::int64_t cols);

namespace serial {
void gemm_nn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n);
void gemm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n);
void gemm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
             std::int64_t m, std::int64_t k, std::int64_t n);
}  // namespace serial

// Instrumentation: number of scalar multiplies issued by the kernels and by
// tensor scaling ops since the last reset. Used to audit inference cost.
std::uint64_t multiply_count();
void reset_multiply_count();
void add_multiplies(std::uint64_t n);

/// Work (m·k·n) below which the parallel kernels stay on the calling thread.
inline constexpr std::int64_t kParallelThreshold = 1 << 15;

}  // namespace lorat::kernels

#pragma once

#include <cstddef>
#include <span>

// Dense row-major kernels backing the autodiff ops.
//
// Every kernel comes in two flavours: a naive serial reference kept for
// testing, and the production version that blocks the inner loops and splits
// output rows across OpenMP threads. Each output element is produced by exactly
// one thread with a fixed summation order, so the production kernels are
// bit-for-bit reproducible regardless of the thread count.
namespace bmr::kernels {

/// C[m x n] (+)= op(A) * op(B), where op(A) is m x k and op(B) is k x n.
/// `trans_a` means A is stored k x m; `trans_b` means B is stored n x k.
struct GemmShape {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
};

void gemm_reference(const GemmShape& s, std::span<const double> a, std::span<const double> b,
                    std::span<double> c, bool accumulate);

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);

/// Batched gemm over `batch` independent contiguous matrices.
void bgemm_reference(std::size_t batch, const GemmShape& s, std::span<const double> a,
                     std::span<const double> b, std::span<double> c, bool accumulate);

void bgemm(std::size_t batch, const GemmShape& s, std::span<const double> a,
           std::span<const double> b, std::span<double> c, bool accumulate);

/// Row-wise softmax of a rows x cols matrix (max-subtracted).
void softmax_rows_reference(std::size_t rows, std::size_t cols, std::span<const double> x,
                            std::span<double> y);
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y);

/// Work (in multiply-adds) below which the parallel kernels stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

int max_threads();

}  // namespace bmr::kernels

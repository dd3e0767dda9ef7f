#include "bmr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bmr::kernels {

namespace {

inline double at_a(const GemmShape& s, std::span<const double> a, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}

inline double at_b(const GemmShape& s, std::span<const double> b, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

void check_sizes(const GemmShape& s, std::size_t a, std::size_t b, std::size_t c) {
  if (a < s.m * s.k || b < s.k * s.n || c < s.m * s.n)
    throw std::length_error("gemm: buffer smaller than declared shape");
}

// Rows [i0, i1) of C += A * B with A row-major m x k and B row-major k x n.
// Four rows share each pass over a row of B; every C entry still accumulates
// in increasing p.
void gemm_block(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                std::size_t i0, std::size_t i1) {
  std::size_t i = i0;
  for (; i + 4 <= i1; i += 4) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const double* __restrict br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = br[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < i1; ++i) {
    double* __restrict cr = c + i * n;
    const double* ar = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* __restrict br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// rows x cols -> cols x rows
void transpose_into(const double* src, std::size_t rows, std::size_t cols, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t q = 0; q < cols; ++q) dst[q * rows + r] = src[r * cols + q];
}

void gemm_rows(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate,
               bool parallel) {
  thread_local std::vector<double> pa, pb, pc;
  if (s.trans_a) {
    transpose_into(a, s.k, s.m, pa);
    a = pa.data();
  }
  if (s.trans_b) {
    transpose_into(b, s.n, s.k, pb);
    b = pb.data();
  }
  // C += A*B adds the finished product, so accumulation matches separate passes
  double* out = c;
  if (accumulate) {
    pc.resize(s.m * s.n);
    out = pc.data();
  }
  std::fill(out, out + s.m * s.n, 0.0);
  const auto blocks = static_cast<std::ptrdiff_t>((s.m + 3) / 4);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t q = 0; q < blocks; ++q) {
    const std::size_t i0 = static_cast<std::size_t>(q) * 4;
    gemm_block(s.n, s.k, a, b, out, i0, std::min(i0 + 4, s.m));
  }
  if (accumulate)
    for (std::size_t i = 0; i < s.m * s.n; ++i) c[i] += out[i];
}

bool want_parallel(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelThreshold && omp_get_max_threads() > 1 && !omp_in_parallel();
#else
  (void)work;
  return false;
#endif
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_reference(const GemmShape& s, std::span<const double> a, std::span<const double> b,
                    std::span<double> c, bool accumulate) {
  check_sizes(s, a.size(), b.size(), c.size());
  for (std::size_t i = 0; i < s.m; ++i)
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += at_a(s, a, i, p) * at_b(s, b, p, j);
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + acc : acc;
    }
}

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  check_sizes(s, a.size(), b.size(), c.size());
  gemm_rows(s, a.data(), b.data(), c.data(), accumulate, want_parallel(s.m * s.n * s.k));
}

void bgemm_reference(std::size_t batch, const GemmShape& s, std::span<const double> a,
                     std::span<const double> b, std::span<double> c, bool accumulate) {
  const std::size_t sa = s.m * s.k, sb = s.k * s.n, sc = s.m * s.n;
  for (std::size_t q = 0; q < batch; ++q)
    gemm_reference(s, a.subspan(q * sa, sa), b.subspan(q * sb, sb), c.subspan(q * sc, sc),
                   accumulate);
}

void bgemm(std::size_t batch, const GemmShape& s, std::span<const double> a,
           std::span<const double> b, std::span<double> c, bool accumulate) {
  const std::size_t sa = s.m * s.k, sb = s.k * s.n, sc = s.m * s.n;
  if (a.size() < batch * sa || b.size() < batch * sb || c.size() < batch * sc)
    throw std::length_error("bgemm: buffer smaller than declared shape");
  const bool parallel = want_parallel(batch * s.m * s.n * s.k);
  const auto nb = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t q = 0; q < nb; ++q)
    gemm_rows(s, a.data() + q * sa, b.data() + q * sb, c.data() + q * sc, accumulate, false);
}

void softmax_rows_reference(std::size_t rows, std::size_t cols, std::span<const double> x,
                            std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(x[r * cols + j] - mx);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = std::exp(x[r * cols + j] - mx) / z;
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x,
                  std::span<double> y) {
  const bool parallel = want_parallel(rows * cols * 8);
  const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t r = 0; r < nr; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = y.data() + r * cols;
    double mx = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

}  // namespace bmr::kernels

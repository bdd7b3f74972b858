// Compiled with -mavx2 -mfma. Only reached after a runtime CPUID check.
#include "divco/kernels/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace divco::kernels {
namespace {

// Register-blocked C[MR×NR] += A[MR×k]·B[k×NR]. Every element of C is one
// FMA chain over p in increasing order, so the result of a row does not
// depend on which block it lands in.
template <int MR>
inline void block8(std::size_t k, const double* a, std::size_t lda, const double* b,
                   std::size_t ldb, double* c, std::size_t ldc) {
  __m256d lo[MR], hi[MR];
  for (int r = 0; r < MR; ++r) {
    lo[r] = _mm256_loadu_pd(c + r * ldc);
    hi[r] = _mm256_loadu_pd(c + r * ldc + 4);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    for (int r = 0; r < MR; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * lda + p);
      lo[r] = _mm256_fmadd_pd(av, b0, lo[r]);
      hi[r] = _mm256_fmadd_pd(av, b1, hi[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm256_storeu_pd(c + r * ldc, lo[r]);
    _mm256_storeu_pd(c + r * ldc + 4, hi[r]);
  }
}

template <int MR>
inline void block4(std::size_t k, const double* a, std::size_t lda, const double* b,
                   std::size_t ldb, double* c, std::size_t ldc) {
  __m256d acc[MR];
  for (int r = 0; r < MR; ++r) acc[r] = _mm256_loadu_pd(c + r * ldc);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    for (int r = 0; r < MR; ++r) {
      acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * lda + p), b0, acc[r]);
    }
  }
  for (int r = 0; r < MR; ++r) _mm256_storeu_pd(c + r * ldc, acc[r]);
}

inline void block_tail(std::size_t rows, std::size_t k, const double* a, std::size_t lda,
                       const double* b, std::size_t ldb, double* c, std::size_t ldc,
                       std::size_t width) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      double s = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) s = std::fma(a[r * lda + p], b[p * ldb + j], s);
      c[r * ldc + j] = s;
    }
  }
}

template <int MR>
inline void row_panel(std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) block8<MR>(k, a, k, b + j, n, c + j, n);
  for (; j + 4 <= n; j += 4) block4<MR>(k, a, k, b + j, n, c + j, n);
  if (j < n) block_tail(MR, k, a, k, b + j, n, c + j, n, n - j);
}

// C[m×n] += A[m×k]·B[k×n]
void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
              double* c) {
  constexpr std::size_t kRows = 6;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) row_panel<6>(k, n, a + i * k, b, c + i * n);
  switch (m - i) {
    case 5: row_panel<5>(k, n, a + i * k, b, c + i * n); break;
    case 4: row_panel<4>(k, n, a + i * k, b, c + i * n); break;
    case 3: row_panel<3>(k, n, a + i * k, b, c + i * n); break;
    case 2: row_panel<2>(k, n, a + i * k, b, c + i * n); break;
    case 1: row_panel<1>(k, n, a + i * k, b, c + i * n); break;
    default: break;
  }
}

// out[cols×rows] = in[rows×cols]ᵀ into a per-thread scratch buffer.
const double* transposed(const double* in, std::size_t rows, std::size_t cols,
                         std::vector<double>& scratch) {
  scratch.resize(rows * cols);
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile);
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t cc = c0; cc < c1; ++cc) scratch[cc * rows + r] = in[r * cols + cc];
      }
    }
  }
  return scratch.data();
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  gemm_acc(m, k, n, a, b, c);
}

void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b,
                 double* c) {
  thread_local std::vector<double> scratch;
  gemm_acc(m, n, k, g, transposed(b, k, n, scratch), c);
}

void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* g,
                 double* c) {
  thread_local std::vector<double> scratch;
  gemm_acc(k, m, n, transposed(a, m, k, scratch), g, c);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  static const KernelTable table{Isa::kAvx2, gemm_nn, gemm_nt_acc, gemm_tn_acc,
                                 dot, axpy};
  return supported ? &table : nullptr;
}

}  // namespace divco::kernels

#else

namespace divco::kernels {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace divco::kernels

#endif

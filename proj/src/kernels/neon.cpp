#include "divco/kernels/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

#include <cmath>

namespace divco::kernels {
namespace {

inline void accumulate_row(std::size_t k, const double* a, std::size_t a_stride,
                           const double* b, std::size_t n, double* c) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    float64x2_t c0 = vld1q_f64(c + j);
    float64x2_t c1 = vld1q_f64(c + j + 2);
    float64x2_t c2 = vld1q_f64(c + j + 4);
    float64x2_t c3 = vld1q_f64(c + j + 6);
    for (std::size_t p = 0; p < k; ++p) {
      const float64x2_t av = vdupq_n_f64(a[p * a_stride]);
      const double* brow = b + p * n + j;
      c0 = vfmaq_f64(c0, av, vld1q_f64(brow));
      c1 = vfmaq_f64(c1, av, vld1q_f64(brow + 2));
      c2 = vfmaq_f64(c2, av, vld1q_f64(brow + 4));
      c3 = vfmaq_f64(c3, av, vld1q_f64(brow + 6));
    }
    vst1q_f64(c + j, c0);
    vst1q_f64(c + j + 2, c1);
    vst1q_f64(c + j + 4, c2);
    vst1q_f64(c + j + 6, c3);
  }
  for (; j < n; ++j) {
    double s = c[j];
    for (std::size_t p = 0; p < k; ++p) s = std::fma(a[p * a_stride], b[p * n + j], s);
    c[j] = s;
  }
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a,
             const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    accumulate_row(k, a + i * k, 1, b, n, crow);
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  float64x2_t s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(x + i), vld1q_f64(y + i));
    s1 = vfmaq_f64(s1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* g,
                 const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) c[i * k + p] += dot(g + i * n, b + p * n, n);
  }
}

void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const double* a,
                 const double* g, double* c) {
  for (std::size_t p = 0; p < k; ++p) accumulate_row(m, a + p, k, g, n, c + p * n);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{Isa::kNeon, gemm_nn, gemm_nt_acc, gemm_tn_acc,
                                 dot, axpy};
  return &table;
}

}  // namespace divco::kernels

#else

namespace divco::kernels {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace divco::kernels

#endif

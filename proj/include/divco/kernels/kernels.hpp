#pragma once
// Dense double-precision inner loops used by the autodiff engine.
//
// Every kernel has a scalar reference implementation. SIMD variants (AVX2+FMA
// on x86-64, NEON on AArch64) are compiled in separate translation units and
// chosen once at startup from the CPU's reported features. The choice can be
// forced with DIVCO_ISA=scalar|avx2|neon.
//
// All matrices are row-major and densely packed. Results of different ISAs
// agree to rounding (FMA contraction and lane-wise partial sums), not bitwise.

#include <cstddef>
#include <string_view>
#include <vector>

namespace divco::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;

  // C[m×n] = A[m×k]·B[k×n]  (C += ... when accumulate is set)
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a,
                  const double* b, double* c, bool accumulate);

  // C[m×k] += G[m×n]·B[k×n]ᵀ   (input gradient of a matmul)
  void (*gemm_nt_acc)(std::size_t m, std::size_t n, std::size_t k,
                      const double* g, const double* b, double* c);

  // C[k×n] += A[m×k]ᵀ·G[m×n]   (weight gradient of a matmul)
  void (*gemm_tn_acc)(std::size_t m, std::size_t k, std::size_t n,
                      const double* a, const double* g, double* c);

  double (*dot)(const double* x, const double* y, std::size_t n);

  // y += alpha·x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
};

const KernelTable& scalar_kernels();

// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Tables usable on this machine, scalar first.
std::vector<const KernelTable*> available_kernels();

// The table selected for this process. Fixed after first call.
const KernelTable& active();

}  // namespace divco::kernels

#pragma once

#include <cstddef>
#include <string_view>

// Dense kernels behind the score network. All matrices are row-major with an
// explicit leading dimension. Each kernel has a scalar reference and, on x86-64,
// an AVX2/FMA variant; active() picks one at first use.
namespace scoremean::kernels {

enum class Isa { Scalar, Avx2 };

struct AdamCoeffs {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double step = 0.0;   // lr / (1 - beta1^k)
  double bias2 = 1.0;  // 1 / (1 - beta2^k)
};

struct KernelTable {
  Isa isa;
  // C (+)= A·B with A m×k, B k×n, C m×n.
  void (*gemm)(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
               int ldc, bool accumulate);
  // dst (cols×rows) = srcᵀ, src rows×cols.
  void (*transpose)(int rows, int cols, const double* src, int ld_src, double* dst, int ld_dst);
  // z[r, c] += bias[r] for c < cols, then optionally z = tanh(z) over those columns.
  void (*bias_act)(int rows, int cols, const double* bias, double* z, int ldz, bool apply_tanh);
  // y[i] = tanh(x[i]).
  void (*tanh)(std::size_t n, const double* x, double* y);
  // grad[i] *= 1 - a[i]².
  void (*tanh_backward)(std::size_t n, const double* a, double* grad);
  // out[r] (+)= Σ_c x[r, c].
  void (*row_sums)(int rows, int cols, const double* x, int ldx, double* out, bool accumulate);
  // One Adam update of n parameters in place.
  void (*adam)(std::size_t n, double* p, const double* g, double* m, double* v, const AdamCoeffs& c);
};

const KernelTable& scalar_table();
/// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();
/// Fastest supported table; SCOREMEAN_SIMD=scalar forces the reference path.
const KernelTable& active();
std::string_view isa_name(Isa isa);

}  // namespace scoremean::kernels

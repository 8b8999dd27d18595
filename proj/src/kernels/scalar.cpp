#include <cmath>

#include "kernels_impl.hpp"

namespace scoremean::kernels {

namespace {

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
          bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) {
      for (int j = 0; j < n; ++j) ci[j] = 0.0;
    }
    const double* ai = a + static_cast<std::size_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void transpose(int rows, int cols, const double* src, int ld_src, double* dst, int ld_dst) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      dst[static_cast<std::size_t>(c) * ld_dst + r] = src[static_cast<std::size_t>(r) * ld_src + c];
    }
  }
}

void bias_act(int rows, int cols, const double* bias, double* z, int ldz, bool apply_tanh) {
  for (int r = 0; r < rows; ++r) {
    double* zr = z + static_cast<std::size_t>(r) * ldz;
    for (int c = 0; c < cols; ++c) {
      zr[c] += bias[r];
      if (apply_tanh) zr[c] = std::tanh(zr[c]);
    }
  }
}

void tanh_vec(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(std::size_t n, const double* a, double* grad) {
  for (std::size_t i = 0; i < n; ++i) grad[i] *= 1.0 - a[i] * a[i];
}

void row_sums(int rows, int cols, const double* x, int ldx, double* out, bool accumulate) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * ldx;
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += xr[c];
    out[r] = accumulate ? out[r] + s : s;
  }
}

void adam(std::size_t n, double* p, const double* g, double* m, double* v, const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    p[i] -= c.step * m[i] / (std::sqrt(v[i] * c.bias2) + c.eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::Scalar, gemm,     transpose, bias_act,
                                 tanh_vec,    tanh_backward, row_sums, adam};
  return table;
}

}  // namespace scoremean::kernels

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kernels_impl.hpp"

namespace scoremean::kernels {

namespace {

// ---------------------------------------------------------------------------
// GEMM: blocked over k and m with packed panels, 6×8 register micro-kernel.

constexpr int kMr = 6;
constexpr int kNr = 8;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

// B[kc × nc] into kNr-wide strips, zero-padded on the right.
void pack_b(int kc, int nc, const double* b, int ldb, double* out) {
  for (int j = 0; j < nc; j += kNr) {
    const int w = std::min(kNr, nc - j);
    for (int p = 0; p < kc; ++p) {
      const double* src = b + static_cast<std::size_t>(p) * ldb + j;
      if (w == kNr) {
        _mm256_storeu_pd(out, _mm256_loadu_pd(src));
        _mm256_storeu_pd(out + 4, _mm256_loadu_pd(src + 4));
      } else {
        int q = 0;
        for (; q < w; ++q) out[q] = src[q];
        for (; q < kNr; ++q) out[q] = 0.0;
      }
      out += kNr;
    }
  }
}

// A[mc × kc] into kMr-tall strips, zero-padded at the bottom.
void pack_a(int mc, int kc, const double* a, int lda, double* out) {
  for (int i = 0; i < mc; i += kMr) {
    const int h = std::min(kMr, mc - i);
    for (int p = 0; p < kc; ++p) {
      int r = 0;
      for (; r < h; ++r) out[r] = a[static_cast<std::size_t>(i + r) * lda + p];
      for (; r < kMr; ++r) out[r] = 0.0;
      out += kMr;
    }
  }
}

// c[h × w] (+)= packed A strip · packed B strip.
void micro(int kc, const double* ap, const double* bp, double* c, int ldc, int h, int w, bool accumulate) {
  __m256d c00 = _mm256_setzero_pd(), c01 = c00, c10 = c00, c11 = c00, c20 = c00, c21 = c00;
  __m256d c30 = c00, c31 = c00, c40 = c00, c41 = c00, c50 = c00, c51 = c00;
  for (int p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d a = _mm256_broadcast_sd(ap);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_broadcast_sd(ap + 1);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_broadcast_sd(ap + 2);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_broadcast_sd(ap + 3);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
    a = _mm256_broadcast_sd(ap + 4);
    c40 = _mm256_fmadd_pd(a, b0, c40);
    c41 = _mm256_fmadd_pd(a, b1, c41);
    a = _mm256_broadcast_sd(ap + 5);
    c50 = _mm256_fmadd_pd(a, b0, c50);
    c51 = _mm256_fmadd_pd(a, b1, c51);
    ap += kMr;
    bp += kNr;
  }
  alignas(32) double tmp[kMr][kNr];
  _mm256_store_pd(tmp[0], c00);
  _mm256_store_pd(tmp[0] + 4, c01);
  _mm256_store_pd(tmp[1], c10);
  _mm256_store_pd(tmp[1] + 4, c11);
  _mm256_store_pd(tmp[2], c20);
  _mm256_store_pd(tmp[2] + 4, c21);
  _mm256_store_pd(tmp[3], c30);
  _mm256_store_pd(tmp[3] + 4, c31);
  _mm256_store_pd(tmp[4], c40);
  _mm256_store_pd(tmp[4] + 4, c41);
  _mm256_store_pd(tmp[5], c50);
  _mm256_store_pd(tmp[5] + 4, c51);
  if (w == kNr) {
    for (int r = 0; r < h; ++r) {
      double* cr = c + static_cast<std::size_t>(r) * ldc;
      __m256d lo = _mm256_load_pd(tmp[r]);
      __m256d hi = _mm256_load_pd(tmp[r] + 4);
      if (accumulate) {
        lo = _mm256_add_pd(_mm256_loadu_pd(cr), lo);
        hi = _mm256_add_pd(_mm256_loadu_pd(cr + 4), hi);
      }
      _mm256_storeu_pd(cr, lo);
      _mm256_storeu_pd(cr + 4, hi);
    }
    return;
  }
  for (int r = 0; r < h; ++r) {
    double* cr = c + static_cast<std::size_t>(r) * ldc;
    for (int q = 0; q < w; ++q) cr[q] = accumulate ? cr[q] + tmp[r][q] : tmp[r][q];
  }
}

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
          bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill_n(c + static_cast<std::size_t>(i) * ldc, n, 0.0);
    }
    return;
  }
  thread_local std::vector<double> bpack, apack;
  for (int jc = 0; jc < n; jc += kNc) {
    const int nc = std::min(kNc, n - jc);
    for (int pc = 0; pc < k; pc += kKc) {
      const int kc = std::min(kKc, k - pc);
      const bool acc = accumulate || pc > 0;
      bpack.resize(static_cast<std::size_t>(kc) * ((nc + kNr - 1) / kNr * kNr));
      pack_b(kc, nc, b + static_cast<std::size_t>(pc) * ldb + jc, ldb, bpack.data());
      for (int ic = 0; ic < m; ic += kMc) {
        const int mc = std::min(kMc, m - ic);
        apack.resize(static_cast<std::size_t>(kc) * ((mc + kMr - 1) / kMr * kMr));
        pack_a(mc, kc, a + static_cast<std::size_t>(ic) * lda + pc, lda, apack.data());
        for (int jr = 0; jr < nc; jr += kNr) {
          const double* bp = bpack.data() + static_cast<std::size_t>(jr) * kc;
          for (int ir = 0; ir < mc; ir += kMr) {
            micro(kc, apack.data() + static_cast<std::size_t>(ir) * kc, bp,
                  c + static_cast<std::size_t>(ic + ir) * ldc + jc + jr, ldc, std::min(kMr, mc - ir),
                  std::min(kNr, nc - jr), acc);
          }
        }
      }
    }
  }
}

void transpose(int rows, int cols, const double* src, int ld_src, double* dst, int ld_dst) {
  int r = 0;
  for (; r + 4 <= rows; r += 4) {
    int c = 0;
    for (; c + 4 <= cols; c += 4) {
      __m256d r0 = _mm256_loadu_pd(src + static_cast<std::size_t>(r) * ld_src + c);
      __m256d r1 = _mm256_loadu_pd(src + static_cast<std::size_t>(r + 1) * ld_src + c);
      __m256d r2 = _mm256_loadu_pd(src + static_cast<std::size_t>(r + 2) * ld_src + c);
      __m256d r3 = _mm256_loadu_pd(src + static_cast<std::size_t>(r + 3) * ld_src + c);
      __m256d t0 = _mm256_unpacklo_pd(r0, r1);
      __m256d t1 = _mm256_unpackhi_pd(r0, r1);
      __m256d t2 = _mm256_unpacklo_pd(r2, r3);
      __m256d t3 = _mm256_unpackhi_pd(r2, r3);
      _mm256_storeu_pd(dst + static_cast<std::size_t>(c) * ld_dst + r, _mm256_permute2f128_pd(t0, t2, 0x20));
      _mm256_storeu_pd(dst + static_cast<std::size_t>(c + 1) * ld_dst + r, _mm256_permute2f128_pd(t1, t3, 0x20));
      _mm256_storeu_pd(dst + static_cast<std::size_t>(c + 2) * ld_dst + r, _mm256_permute2f128_pd(t0, t2, 0x31));
      _mm256_storeu_pd(dst + static_cast<std::size_t>(c + 3) * ld_dst + r, _mm256_permute2f128_pd(t1, t3, 0x31));
    }
    for (; c < cols; ++c) {
      for (int q = 0; q < 4; ++q) {
        dst[static_cast<std::size_t>(c) * ld_dst + r + q] = src[static_cast<std::size_t>(r + q) * ld_src + c];
      }
    }
  }
  for (; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      dst[static_cast<std::size_t>(c) * ld_dst + r] = src[static_cast<std::size_t>(r) * ld_src + c];
    }
  }
}

// ---------------------------------------------------------------------------
// tanh: Cephes rational form below 0.625, 1 - 2/(e^{2|x|} + 1) above.

inline __m256d polevl3(__m256d z, double c0, double c1, double c2) {
  return _mm256_fmadd_pd(_mm256_fmadd_pd(_mm256_set1_pd(c0), z, _mm256_set1_pd(c1)), z, _mm256_set1_pd(c2));
}

inline __m256d exp_pd(__m256d x) {
  const __m256d n = _mm256_floor_pd(_mm256_fmadd_pd(x, _mm256_set1_pd(1.4426950408889634073599), _mm256_set1_pd(0.5)));
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125E-1), x);
  x = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212E-6), x);
  const __m256d xx = _mm256_mul_pd(x, x);
  const __m256d px = _mm256_mul_pd(
      x, polevl3(xx, 1.26177193074810590878E-4, 3.02994407707441961300E-2, 9.99999999999999999910E-1));
  __m256d qx = _mm256_fmadd_pd(
      polevl3(xx, 3.00198505138664455042E-6, 2.52448340349684104192E-3, 2.27265548208155028766E-1), xx,
      _mm256_set1_pd(2.00000000000000000009E0));
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));
  __m256i bits = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n));
  bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(r, _mm256_castsi256_pd(bits));
}

inline __m256d tanh_pd(__m256d x) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d ax = _mm256_min_pd(_mm256_andnot_pd(sign_mask, x), _mm256_set1_pd(20.0));
  const __m256d sign = _mm256_and_pd(sign_mask, x);

  const __m256d e = exp_pd(_mm256_add_pd(ax, ax));
  const __m256d big = _mm256_sub_pd(_mm256_set1_pd(1.0),
                                    _mm256_div_pd(_mm256_set1_pd(2.0), _mm256_add_pd(e, _mm256_set1_pd(1.0))));

  const __m256d z = _mm256_mul_pd(x, x);
  const __m256d p = polevl3(z, -9.64399179425052238628E-1, -9.92877231001918586564E1, -1.61468768441708447952E3);
  const __m256d q = _mm256_fmadd_pd(
      _mm256_fmadd_pd(_mm256_add_pd(z, _mm256_set1_pd(1.12811678491632931402E2)), z,
                      _mm256_set1_pd(2.23548839060100448583E3)),
      z, _mm256_set1_pd(4.84406305325125486048E3));
  const __m256d small = _mm256_fmadd_pd(_mm256_mul_pd(x, z), _mm256_div_pd(p, q), x);

  const __m256d use_small = _mm256_cmp_pd(ax, _mm256_set1_pd(0.625), _CMP_LT_OQ);
  return _mm256_blendv_pd(_mm256_or_pd(big, sign), small, use_small);
}

void tanh_vec(std::size_t n, const double* x, double* y) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, tanh_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::tanh(x[i]);
}

void bias_act(int rows, int cols, const double* bias, double* z, int ldz, bool apply_tanh) {
  for (int r = 0; r < rows; ++r) {
    double* zr = z + static_cast<std::size_t>(r) * ldz;
    const __m256d b = _mm256_set1_pd(bias[r]);
    int c = 0;
    for (; c + 4 <= cols; c += 4) {
      __m256d v = _mm256_add_pd(_mm256_loadu_pd(zr + c), b);
      if (apply_tanh) v = tanh_pd(v);
      _mm256_storeu_pd(zr + c, v);
    }
    for (; c < cols; ++c) {
      zr[c] += bias[r];
      if (apply_tanh) zr[c] = std::tanh(zr[c]);
    }
  }
}

void tanh_backward(std::size_t n, const double* a, double* grad) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_loadu_pd(a + i);
    const __m256d d = _mm256_fnmadd_pd(av, av, one);
    _mm256_storeu_pd(grad + i, _mm256_mul_pd(_mm256_loadu_pd(grad + i), d));
  }
  for (; i < n; ++i) grad[i] *= 1.0 - a[i] * a[i];
}

void row_sums(int rows, int cols, const double* x, int ldx, double* out, bool accumulate) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * ldx;
    __m256d acc = _mm256_setzero_pd();
    int c = 0;
    for (; c + 4 <= cols; c += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(xr + c));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; c < cols; ++c) s += xr[c];
    out[r] = accumulate ? out[r] + s : s;
  }
}

void adam(std::size_t n, double* p, const double* g, double* m, double* v, const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b1c = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d b2c = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d step = _mm256_set1_pd(c.step);
  const __m256d bias2 = _mm256_set1_pd(c.bias2);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(b1c, gv));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(_mm256_mul_pd(b2c, gv), gv));
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, bias2)), eps);
    const __m256d upd = _mm256_div_pd(_mm256_mul_pd(step, mv), denom);
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    p[i] -= c.step * m[i] / (std::sqrt(v[i] * c.bias2) + c.eps);
  }
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{Isa::Avx2, gemm,     transpose, bias_act,
                                 tanh_vec,  tanh_backward, row_sums, adam};
  return table;
}

}  // namespace scoremean::kernels

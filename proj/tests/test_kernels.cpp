#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "scoremean/kernels.hpp"
#include "scoremean/rng.hpp"

using namespace scoremean;
using kernels::KernelTable;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

const KernelTable* simd() {
  const KernelTable* t = kernels::avx2_table();
  if (t == nullptr) MESSAGE("AVX2/FMA unavailable; SIMD equivalence checks skipped");
  return t;
}

}  // namespace

TEST_CASE("scalar reference kernels") {
  const KernelTable& s = kernels::scalar_table();
  CHECK(s.isa == kernels::Isa::Scalar);
  CHECK(kernels::isa_name(kernels::Isa::Scalar) == "scalar");
  CHECK(kernels::isa_name(kernels::Isa::Avx2) == "avx2");

  // [1 2; 3 4] · [5; 6] = [17; 39]
  const double a[] = {1, 2, 3, 4};
  const double b[] = {5, 6};
  double c[] = {1, 1};
  s.gemm(2, 1, 2, a, 2, b, 1, c, 1, false);
  CHECK(c[0] == 17);
  CHECK(c[1] == 39);
  s.gemm(2, 1, 2, a, 2, b, 1, c, 1, true);
  CHECK(c[0] == 34);

  double t[4];
  s.transpose(2, 2, a, 2, t, 2);
  CHECK(t[1] == 3);
  CHECK(t[2] == 2);

  double z[] = {0.0, 1.0, 2.0, 3.0};
  const double bias[] = {1.0, -1.0};
  s.bias_act(2, 2, bias, z, 2, false);
  CHECK(z[0] == 1.0);
  CHECK(z[3] == 2.0);

  double sums[2];
  s.row_sums(2, 2, a, 2, sums, false);
  CHECK(sums[0] == 3);
  CHECK(sums[1] == 7);

  const double x[] = {-30.0, -1.0, 0.0, 0.5, 30.0};
  double y[5];
  s.tanh(5, x, y);
  for (int i = 0; i < 5; ++i) CHECK(y[i] == std::tanh(x[i]));
}

TEST_CASE("Adam kernel matches the textbook update") {
  const KernelTable& s = kernels::scalar_table();
  double p = 1.0, g = 0.5, m = 0.0, v = 0.0;
  kernels::AdamCoeffs c;
  c.step = 0.1 / (1 - 0.9);
  c.bias2 = 1 / (1 - 0.999);
  s.adam(1, &p, &g, &m, &v, c);
  CHECK(m == doctest::Approx(0.05));
  CHECK(v == doctest::Approx(0.00025));
  // First step moves by lr·sign(g) up to eps.
  CHECK(p == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("AVX2 gemm matches the scalar reference") {
  const KernelTable* v = simd();
  if (!v) return;
  const KernelTable& s = kernels::scalar_table();
  Rng rng(1);
  for (int m : {1, 3, 4, 7, 8, 13}) {
    for (int n : {1, 5, 8, 9, 17, 64}) {
      for (int k : {1, 2, 7, 33}) {
        const int lda = k + 3, ldb = n + 1, ldc = n + 2;
        const std::vector<double> a = random_vector(static_cast<std::size_t>(m) * lda, rng);
        const std::vector<double> b = random_vector(static_cast<std::size_t>(k) * ldb, rng);
        const std::vector<double> c0 = random_vector(static_cast<std::size_t>(m) * ldc, rng);
        for (bool acc : {false, true}) {
          std::vector<double> cs = c0, cv = c0;
          s.gemm(m, n, k, a.data(), lda, b.data(), ldb, cs.data(), ldc, acc);
          v->gemm(m, n, k, a.data(), lda, b.data(), ldb, cv.data(), ldc, acc);
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < ldc; ++j) {
              const std::size_t idx = static_cast<std::size_t>(i) * ldc + j;
              if (j >= n) {
                CHECK(cv[idx] == c0[idx]);
                continue;
              }
              double scale = acc ? std::abs(c0[idx]) : 0.0;
              for (int l = 0; l < k; ++l) scale += std::abs(a[i * lda + l] * b[l * ldb + j]);
              CHECK(std::abs(cs[idx] - cv[idx]) <= 1e-15 * (k + 1) * scale);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("AVX2 elementwise kernels match the scalar reference") {
  const KernelTable* v = simd();
  if (!v) return;
  const KernelTable& s = kernels::scalar_table();
  Rng rng(2);

  SUBCASE("tanh over the whole range") {
    std::vector<double> x;
    for (int i = -4000; i <= 4000; ++i) x.push_back(i * 0.0075);
    for (double e : {1e-300, 1e-12, 1e-6, 0.3, 0.62, 0.625, 0.63, 19.9, 20.0, 20.1, 700.0, 1e300}) {
      x.push_back(e);
      x.push_back(-e);
    }
    x.push_back(0.0);
    x.push_back(-0.0);
    std::vector<double> ys(x.size()), yv(x.size());
    s.tanh(x.size(), x.data(), ys.data());
    v->tanh(x.size(), x.data(), yv.data());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(ys[i] - yv[i]) / std::max(std::abs(ys[i]), 1e-300));
      CHECK(std::abs(yv[i]) <= 1.0);
      CHECK(std::signbit(yv[i]) == std::signbit(x[i]));
    }
    CHECK(worst < 1e-14);
  }
  SUBCASE("bias with and without activation") {
    const int rows = 6, cols = 11, ld = 13;
    const std::vector<double> bias = random_vector(rows, rng);
    const std::vector<double> z0 = random_vector(rows * ld, rng, 2.0);
    for (bool act : {false, true}) {
      std::vector<double> zs = z0, zv = z0;
      s.bias_act(rows, cols, bias.data(), zs.data(), ld, act);
      v->bias_act(rows, cols, bias.data(), zv.data(), ld, act);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < ld; ++c) {
          const std::size_t i = r * ld + c;
          CHECK(std::abs(zs[i] - zv[i]) <= 1e-14 * std::max(1.0, std::abs(zs[i])));
        }
      }
    }
  }
  SUBCASE("tanh backward, row sums, transpose") {
    const std::size_t n = 1003;
    const std::vector<double> a = random_vector(n, rng, 0.5);
    const std::vector<double> g0 = random_vector(n, rng);
    std::vector<double> gs = g0, gv = g0;
    s.tanh_backward(n, a.data(), gs.data());
    v->tanh_backward(n, a.data(), gv.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(gs[i] - gv[i]) <= 1e-15 * std::abs(g0[i]) * 2);

    const int rows = 7, cols = 29, ld = 31;
    const std::vector<double> x = random_vector(rows * ld, rng);
    std::vector<double> rs(rows, 1.0), rv(rows, 1.0);
    s.row_sums(rows, cols, x.data(), ld, rs.data(), true);
    v->row_sums(rows, cols, x.data(), ld, rv.data(), true);
    for (int r = 0; r < rows; ++r) CHECK(std::abs(rs[r] - rv[r]) <= 1e-14 * cols);

    std::vector<double> ts(cols * (rows + 2), 0.0), tv(cols * (rows + 2), 0.0);
    s.transpose(rows, cols, x.data(), ld, ts.data(), rows + 2);
    v->transpose(rows, cols, x.data(), ld, tv.data(), rows + 2);
    CHECK(ts == tv);
  }
  SUBCASE("Adam updates are bit-identical") {
    const std::size_t n = 517;
    std::vector<double> ps = random_vector(n, rng), ms(n, 0.0), vs(n, 0.0);
    std::vector<double> pv = ps, mv = ms, vv = vs;
    for (int step = 1; step <= 5; ++step) {
      const std::vector<double> g = random_vector(n, rng);
      kernels::AdamCoeffs c;
      c.step = 1e-3 / (1 - std::pow(c.beta1, step));
      c.bias2 = 1 / (1 - std::pow(c.beta2, step));
      s.adam(n, ps.data(), g.data(), ms.data(), vs.data(), c);
      v->adam(n, pv.data(), g.data(), mv.data(), vv.data(), c);
    }
    CHECK(ps == pv);
    CHECK(ms == mv);
    CHECK(vs == vv);
  }
}

TEST_CASE("the active table is one of the two") {
  const KernelTable& a = kernels::active();
  CHECK((a.isa == kernels::Isa::Scalar || kernels::avx2_table() != nullptr));
}

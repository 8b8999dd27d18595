#include "scoremean/heat_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "scoremean/error.hpp"

namespace scoremean::heat_kernel {

namespace {

void require_positive_time(double t) {
  if (!(t > 0.0)) throw DomainError("diffusion time must be positive");
}

// ---------------------------------------------------------------------------
// Circle: wrapped Gaussian, evaluated with the k = 0 exponent factored out.

struct CircleSums {
  double log_norm = 0.0;  // log Σ_k exp(e_k)
  double mean_disp = 0.0;  // Σ (d+2πk) w_k / Σ w_k
  double mean_sq = 0.0;    // Σ (d+2πk)² w_k / Σ w_k
};

CircleSums circle_sums(double x, double y, double t, const SeriesTruncation& trunc) {
  require_positive_time(t);
  const double two_pi = 2.0 * std::numbers::pi;
  const double d = std::remainder(x - y, two_pi);
  const double top = -d * d / (2.0 * t);
  double s = 1.0;
  double s1 = d;
  double s2 = d * d;
  for (int k = 1; k <= trunc.circle_K; ++k) {
    double added = 0.0;
    for (int sign : {-1, 1}) {
      double disp = d + sign * two_pi * k;
      double w = std::exp(-disp * disp / (2.0 * t) - top);
      s += w;
      s1 += disp * w;
      s2 += disp * disp * w;
      added += w;
    }
    if (added < trunc.tail_tol * s) break;
  }
  return CircleSums{top + std::log(s), s1 / s, s2 / s};
}

// ---------------------------------------------------------------------------
// Sphere series, generic in the floating-point type.

using Float50 = boost::multiprecision::cpp_bin_float_50;
using Float100 = boost::multiprecision::cpp_bin_float_100;

template <class Real>
struct SumResult {
  Real p = 0, dz = 0, dt = 0;
  Real abs_p = 0, abs_dz = 0, abs_dt = 0;
  int terms = 0;
  bool converged = false;
};

template <class Real>
SumResult<Real> sphere_sum(int m, double z_in, double t_in, const SeriesTruncation& trunc) {
  using std::exp;
  using std::abs;
  using std::pow;
  const Real z = z_in;
  const Real t = t_in;
  const Real alpha = Real(m - 1) / 2;
  const Real half_m1 = Real(m + 1) / 2;
  const Real area = 2 * pow(boost::math::constants::pi<Real>(), half_m1) / boost::math::tgamma(half_m1);
  const Real tol = trunc.tail_tol;

  // Recurrences: C_l^{(α)} at z and at 1 (the latter bounds |C_l^{(α)}| on
  // [-1,1]); C_{l-1}^{(α+1)} likewise for the z-derivative.
  Real c_prev = 0, c_cur = 1;       // C_{l-1}, C_l at z (α)
  Real b_prev = 0, b_cur = 1;       // same at z = 1
  Real d_prev = 0, d_cur = 0;       // C_{l-2}, C_{l-1} at z (α+1)
  Real e_prev = 0, e_cur = 0;       // same at z = 1
  Real last_bound = -1;

  SumResult<Real> r;
  for (int l = 0; l <= trunc.sphere_L; ++l) {
    if (l == 1) {
      c_prev = c_cur; c_cur = 2 * alpha * z;
      b_prev = b_cur; b_cur = 2 * alpha;
      d_prev = 0; d_cur = 1;
      e_prev = 0; e_cur = 1;
    } else if (l >= 2) {
      Real c_next = (2 * (l - 1 + alpha) * z * c_cur - (l + 2 * alpha - 2) * c_prev) / l;
      Real b_next = (2 * (l - 1 + alpha) * b_cur - (l + 2 * alpha - 2) * b_prev) / l;
      c_prev = c_cur; c_cur = c_next;
      b_prev = b_cur; b_cur = b_next;
      const int j = l - 1;  // index of the α+1 polynomial
      const Real a1 = alpha + 1;
      Real d_next = j == 1 ? Real(2 * a1 * z) : Real((2 * (j - 1 + a1) * z * d_cur - (j + 2 * a1 - 2) * d_prev) / j);
      Real e_next = j == 1 ? Real(2 * a1) : Real((2 * (j - 1 + a1) * e_cur - (j + 2 * a1 - 2) * e_prev) / j);
      d_prev = d_cur; d_cur = d_next;
      e_prev = e_cur; e_cur = e_next;
    }
    const Real eig = Real(l) * (l + m - 1) / 2;
    const Real w = exp(-eig * t);
    const Real coef = w * (2 * l + m - 1) / ((m - 1) * area);
    const Real tp = coef * c_cur;
    const Real tz = l == 0 ? Real(0) : Real(w * (2 * l + m - 1) / area * d_cur);
    const Real tt = -eig * tp;
    r.p += tp;
    r.dz += tz;
    r.dt += tt;
    r.abs_p += abs(tp);
    r.abs_dz += abs(tz);
    r.abs_dt += abs(tt);
    r.terms = l + 1;

    const Real bound_p = coef * b_cur;
    const Real bound_z = l == 0 ? Real(0) : Real(w * (2 * l + m - 1) / area * e_cur);
    const Real bound = bound_p * (1 + eig) + bound_z;
    const Real scale = Real(abs(r.p));
    if (l > 1 && bound < last_bound && bound_p < tol * scale && bound_z < tol * std::max(Real(abs(r.dz)), scale) &&
        eig * bound_p < tol * scale) {
      r.converged = true;
      break;
    }
    last_bound = bound;
  }
  return r;
}

template <class Real>
bool precise_enough(const SumResult<Real>& r, double eps) {
  using std::abs;
  if (!(r.p > 0)) return false;
  const Real target = 1e-11;
  auto lost = [&](const Real& value, const Real& magnitude, const Real& floor) {
    Real denom = std::max(Real(abs(value)), floor);
    return Real(eps) * magnitude / denom;
  };
  return lost(r.p, r.abs_p, r.p) < target && lost(r.dz, r.abs_dz, r.p) < target &&
         lost(r.dt, r.abs_dt, r.p) < target;
}

template <class Real>
SphereSeries to_result(const SumResult<Real>& r, int bits) {
  return SphereSeries{static_cast<double>(r.p), static_cast<double>(r.dz),
                      static_cast<double>(r.dt), r.terms, bits};
}

void check_sphere_args(int m, double t) {
  if (m < 2) throw DomainError("the sphere series needs m >= 2");
  require_positive_time(t);
  if (t < kSphereMinTime) {
    throw DomainError("sphere heat kernel series is not evaluated below t = 0.05; use t >= 0.05");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

double euclid_log_p(const Vec& x, const Vec& y, double t) {
  require_positive_time(t);
  const double m = static_cast<double>(x.size());
  return -(x - y).squaredNorm() / (2.0 * t) - 0.5 * m * std::log(2.0 * std::numbers::pi * t);
}

Vec euclid_score(const Vec& x, const Vec& y, double t) {
  require_positive_time(t);
  return (x - y) / t;
}

double euclid_dt_log_p(const Vec& x, const Vec& y, double t) {
  require_positive_time(t);
  const double m = static_cast<double>(x.size());
  return (x - y).squaredNorm() / (2.0 * t * t) - m / (2.0 * t);
}

double circle_log_p(double x, double y, double t, const SeriesTruncation& trunc) {
  CircleSums s = circle_sums(x, y, t, trunc);
  return -0.5 * std::log(2.0 * std::numbers::pi * t) + s.log_norm;
}

double circle_score(double x, double y, double t, const SeriesTruncation& trunc) {
  return circle_sums(x, y, t, trunc).mean_disp / t;
}

double circle_dt_log_p(double x, double y, double t, const SeriesTruncation& trunc) {
  return circle_sums(x, y, t, trunc).mean_sq / (2.0 * t * t) - 1.0 / (2.0 * t);
}

std::vector<double> gegenbauer_sequence(int L, double alpha, double z) {
  std::vector<double> c(static_cast<std::size_t>(std::max(L, 0)) + 1);
  c[0] = 1.0;
  if (L >= 1) c[1] = 2.0 * alpha * z;
  for (int l = 2; l <= L; ++l) {
    c[l] = (2.0 * (l - 1 + alpha) * z * c[l - 1] - (l + 2.0 * alpha - 2.0) * c[l - 2]) / l;
  }
  return c;
}

double gegenbauer(int l, double alpha, double z) {
  if (l < 0) return 0.0;
  return gegenbauer_sequence(l, alpha, z).back();
}

double sphere_area(int m) {
  const double h = 0.5 * (m + 1);
  return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

SphereSeries sphere_series(int m, double z, double t, const SeriesTruncation& trunc) {
  check_sphere_args(m, t);
  z = std::clamp(z, -1.0, 1.0);
  auto r53 = sphere_sum<double>(m, z, t, trunc);
  if (precise_enough(r53, 2.2e-16)) return to_result(r53, 53);
  auto r50 = sphere_sum<Float50>(m, z, t, trunc);
  if (precise_enough(r50, 1e-49)) return to_result(r50, 166);
  auto r100 = sphere_sum<Float100>(m, z, t, trunc);
  if (precise_enough(r100, 1e-99)) return to_result(r100, 332);
  throw NumericalError("sphere heat kernel series lost all precision; increase t");
}

double sphere_log_p(const Vec& x, const Vec& y, double t, const SeriesTruncation& trunc) {
  const int m = static_cast<int>(x.size()) - 1;
  return std::log(sphere_series(m, x.dot(y), t, trunc).p);
}

Vec sphere_score(const Vec& x, const Vec& y, double t, const SeriesTruncation& trunc) {
  const int m = static_cast<int>(x.size()) - 1;
  const double z = x.dot(y);
  SphereSeries s = sphere_series(m, z, t, trunc);
  return (s.dp_dz / s.p) * (x - z * y);
}

double sphere_dt_log_p(const Vec& x, const Vec& y, double t, const SeriesTruncation& trunc) {
  const int m = static_cast<int>(x.size()) - 1;
  SphereSeries s = sphere_series(m, x.dot(y), t, trunc);
  return s.dp_dt / s.p;
}

}  // namespace scoremean::heat_kernel

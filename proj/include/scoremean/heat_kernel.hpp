#pragma once

#include <vector>

#include "scoremean/manifold.hpp"

namespace scoremean {

struct SeriesTruncation {
  int circle_K = 10;
  int sphere_L = 200;
  double tail_tol = 1e-12;
};

/// Below this diffusion time the sphere series is refused.
inline constexpr double kSphereMinTime = 0.05;

namespace heat_kernel {

// Euclidean R^m: p = (2πt)^{-m/2} exp(-|x-y|²/2t).
double euclid_log_p(const Vec& x, const Vec& y, double t);
Vec euclid_score(const Vec& x, const Vec& y, double t);
double euclid_dt_log_p(const Vec& x, const Vec& y, double t);

// Circle, angles in R/2πZ. The score is ∂/∂y.
double circle_log_p(double x, double y, double t, const SeriesTruncation& trunc = {});
double circle_score(double x, double y, double t, const SeriesTruncation& trunc = {});
double circle_dt_log_p(double x, double y, double t, const SeriesTruncation& trunc = {});

/// C_l^{(α)}(z) by the three-term recurrence.
double gegenbauer(int l, double alpha, double z);
/// C_0^{(α)}(z), ..., C_L^{(α)}(z).
std::vector<double> gegenbauer_sequence(int L, double alpha, double z);
/// Surface area of the unit m-sphere in R^{m+1}.
double sphere_area(int m);

struct SphereSeries {
  double p = 0.0;      // heat kernel value
  double dp_dz = 0.0;  // derivative in z = <x, y>
  double dp_dt = 0.0;
  int terms = 0;
  int precision_bits = 53;  // 53 when double sufficed, more after escalation
};

/// Series in z = <x,y> for S^m (m ≥ 2). Falls back to extended precision when
/// cancellation between terms would cost more than ~5 significant digits.
SphereSeries sphere_series(int m, double z, double t, const SeriesTruncation& trunc = {});

// S^m embedded in R^{m+1}; x, y unit vectors. The score is the ambient
// gradient in y, already projected onto T_y.
double sphere_log_p(const Vec& x, const Vec& y, double t, const SeriesTruncation& trunc = {});
Vec sphere_score(const Vec& x, const Vec& y, double t, const SeriesTruncation& trunc = {});
double sphere_dt_log_p(const Vec& x, const Vec& y, double t, const SeriesTruncation& trunc = {});

}  // namespace heat_kernel
}  // namespace scoremean

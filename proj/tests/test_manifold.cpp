#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "scoremean/error.hpp"
#include "scoremean/manifold.hpp"
#include "scoremean/rng.hpp"

using namespace scoremean;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

Manifold make(const char* name) { return Manifold(ManifoldId::parse(name)); }

// A random valid point near the family's origin.
Point random_point(const Manifold& m, Rng& rng) {
  Point p = m.origin();
  switch (m.id().family) {
    case Family::Sphere:
      return m.point_from_embedded(rng.normal_vector(m.id().embedding_dim()));
    case Family::SPD:
    case Family::Landmarks:
      p.coords += 0.3 * rng.normal_vector(m.dim());
      return p;
    default:
      p.coords += rng.normal_vector(m.dim());
      return p;
  }
}

TangentVector random_tangent(const Manifold& m, const Point& x, double length, Rng& rng) {
  Vec z = rng.normal_vector(m.dim()).normalized();
  return TangentVector{x, length * (m.metric_at(x).sqrt_g_inv * z)};
}

}  // namespace

TEST_CASE("manifold ids parse and report dimensions") {
  CHECK(ManifoldId::parse("r3").dim() == 3);
  CHECK(ManifoldId::parse("s2").dim() == 2);
  CHECK(ManifoldId::parse("s2").embedding_dim() == 3);
  CHECK(ManifoldId::parse("sym3").dim() == 6);
  CHECK(ManifoldId::parse("spd2").dim() == 3);
  CHECK(ManifoldId::parse("lm4x2").dim() == 8);
  for (const char* name : {"r3", "s2", "sym3", "spd2", "lm4x2"}) CHECK(ManifoldId::parse(name).name() == name);
  CHECK_THROWS_AS(ManifoldId::parse("q3"), ValidationError);
  CHECK_THROWS_AS(ManifoldId::parse("lm4"), ValidationError);
  CHECK_THROWS_AS(ManifoldId::parse("r0"), ValidationError);
}

TEST_CASE("metric examples") {
  SUBCASE("flat plane") {
    const Manifold m = make("r2");
    const MetricData md = m.metric_at(Point{Vec::Constant(2, 3.0), Vec()});
    CHECK(md.g.isApprox(Mat::Identity(2, 2)));
    for (double c : md.christoffel.data()) CHECK(c == 0.0);
  }
  SUBCASE("stereographic sphere") {
    const Manifold m = make("s2");
    CHECK(m.metric_tensor(m.origin()).isApprox(4.0 * Mat::Identity(2, 2), 1e-14));
    // Pullback JᵀJ of the round metric through a finite-difference embedding Jacobian.
    Point x = m.origin();
    x.coords << 0.3, -0.4;
    const double lambda = 2.0 / (1.0 + x.coords.squaredNorm());
    Mat jac(3, 2);
    for (int i = 0; i < 2; ++i) {
      Point up = x, down = x;
      up.coords[i] += 1e-6;
      down.coords[i] -= 1e-6;
      jac.col(i) = (m.embed(up) - m.embed(down)) / 2e-6;
    }
    CHECK((m.metric_tensor(x) - lambda * lambda * Mat::Identity(2, 2)).norm() < 1e-12);
    CHECK((m.metric_tensor(x) - jac.transpose() * jac).norm() < 1e-8);
  }
  SUBCASE("well-separated landmarks") {
    const Manifold m = make("lm2x1");
    Point x{Vec(2), Vec()};
    x.coords << 0.0, 10.0;
    const Mat g = m.metric_tensor(x);
    CHECK(std::abs(g(0, 1)) < 1e-20);
    CHECK(g(0, 0) == Approx(1.0).epsilon(1e-15));
    CHECK(g(1, 1) == Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("coincident landmarks are rejected") {
    const Manifold m = make("lm2x1");
    Point x{Vec::Zero(2), Vec()};
    CHECK_THROWS_AS(m.metric_tensor(x), DegenerateMetricError);
  }
  SUBCASE("symmetric matrices") {
    const Manifold m = make("sym2");
    const Mat g = m.metric_tensor(m.origin());
    // Coordinates (a, b, c) ↦ [[a, b], [b, c]] in some order: diagonal 1, off-diagonal 2.
    CHECK(g.isDiagonal());
    CHECK(g.trace() == Approx(4.0));
    CHECK(g.maxCoeff() == Approx(2.0));
  }
}

TEST_CASE("metric consistency on random points") {
  Rng rng(11);
  for (const char* name : {"r3", "s2", "s3", "sym3", "spd2", "lm3x2"}) {
    const Manifold m = make(name);
    for (int i = 0; i < 100; ++i) {
      const MetricData md = m.metric_at(random_point(m, rng));
      CAPTURE(name);
      CHECK((md.g - md.g.transpose()).norm() == 0.0);
      CHECK((md.g * md.g_inv - Mat::Identity(m.dim(), m.dim())).norm() < 1e-8);
      CHECK((md.sqrt_g_inv * md.sqrt_g_inv.transpose() - md.g_inv).norm() < 1e-8 * md.g_inv.norm());
      CHECK(Eigen::SelfAdjointEigenSolver<Mat>(md.g).eigenvalues().minCoeff() > 0.0);
    }
  }
}

TEST_CASE("Christoffel symbols") {
  SUBCASE("flat families vanish") {
    Rng rng(3);
    for (const char* name : {"r4", "sym3"}) {
      const Manifold m = make(name);
      const Christoffel gamma = m.christoffel_at(random_point(m, rng));
      for (double c : gamma.data()) CHECK(c == 0.0);
    }
  }
  SUBCASE("sphere matches the conformal formula") {
    // g = e^{2φ}δ with φ = log 2 − log(1+|u|²): Γ^k_ij = δ_ik ∂_jφ + δ_jk ∂_iφ − δ_ij ∂_kφ.
    const Manifold m = make("s2");
    Point x = m.origin();
    x.coords << 0.2, -0.7;
    const Vec dphi = -2.0 * x.coords / (1.0 + x.coords.squaredNorm());
    const Christoffel G = m.christoffel_at(x);
    for (int k = 0; k < 2; ++k) {
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const double expect = (i == k) * dphi[j] + (j == k) * dphi[i] - (i == j) * dphi[k];
          CHECK(G(k, i, j) == Approx(expect).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("symmetric and consistent with finite differences") {
    Rng rng(5);
    for (const char* name : {"s2", "s3", "spd2", "lm3x2"}) {
      const Manifold m = make(name);
      for (int n = 0; n < 10; ++n) {
        const Point x = random_point(m, rng);
        const Christoffel a = m.christoffel_at(x);
        const Christoffel b = m.christoffel_fd(x);
        const int d = m.dim();
        for (int k = 0; k < d; ++k) {
          for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
              CHECK(a(k, i, j) == a(k, j, i));
              CHECK(std::abs(a(k, i, j) - b(k, i, j)) < 1e-4);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("exponential map examples") {
  SUBCASE("plane") {
    const Manifold m = make("r2");
    Vec v(2);
    v << 1.0, 2.0;
    CHECK(m.exp(TangentVector{m.origin(), v}).coords.isApprox(v));
  }
  SUBCASE("half and quarter great circles from the north pole") {
    const Manifold m = make("s2");
    const Point north = m.origin();
    // Metric 4I at the chart center: components (π/4, 0) have length π/2.
    const TangentVector quarter{north, Vec::Unit(2, 0) * (kPi / 4)};
    const Vec dir = m.pushforward(quarter).normalized();
    const Vec q = m.embed(m.exp(quarter));
    CHECK((q - dir).norm() < 1e-12);
    CHECK((q - Vec::Unit(3, 0)).norm() < 1e-12);
    const Vec half = m.embed(m.exp(TangentVector{north, Vec::Unit(2, 1) * (kPi / 2)}));
    CHECK((half + Vec::Unit(3, 2)).norm() < 1e-12);
  }
  SUBCASE("sphere exp agrees with RK4 in the chart") {
    const Manifold m = make("s2");
    Rng rng(8);
    for (int i = 0; i < 10; ++i) {
      Point x = m.origin();
      x.coords = 0.3 * rng.normal_vector(2);
      const TangentVector v = random_tangent(m, x, 0.4, rng);
      CHECK((m.embed(m.exp(v)) - m.embed(m.integrate_geodesic(v))).norm() < 1e-8);
    }
  }
}

TEST_CASE("logarithmic map examples") {
  SUBCASE("R3") {
    const Manifold m = make("r3");
    Vec x(3), y(3), expect(3);
    x << 1, 1, 1;
    y << 2, 0, 1;
    expect << 1, -1, 0;
    CHECK(m.log(Point{x, Vec()}, Point{y, Vec()}).components.isApprox(expect));
    CHECK(m.distance(Point{x, Vec()}, Point{y, Vec()}) == Approx(std::sqrt(2.0)));
  }
  SUBCASE("sphere north to equator") {
    const Manifold m = make("s2");
    const Point eq = m.point_from_embedded(Vec::Unit(3, 0));
    const TangentVector v = m.log(m.origin(), eq);
    CHECK(m.norm(v) == Approx(kPi / 2).epsilon(1e-12));
    CHECK((m.pushforward(v).normalized() - Vec::Unit(3, 0)).norm() < 1e-12);
    CHECK(m.distance(m.origin(), eq) == Approx(kPi / 2).epsilon(1e-12));
  }
  SUBCASE("identical symmetric matrices") {
    const Manifold m = make("sym2");
    CHECK(m.log(m.origin(), m.origin()).components.norm() == 0.0);
  }
  SUBCASE("errors") {
    const Manifold s = make("s2");
    const Point south = s.point_from_embedded(-Vec::Unit(3, 2));
    CHECK_THROWS_AS(s.log(s.origin(), south), CutLocusError);
    CHECK_THROWS_AS(s.distance(s.origin(), south), CutLocusError);
    for (const char* name : {"spd2", "lm2x2"}) {
      const Manifold m = make(name);
      CHECK_FALSE(m.has_closed_form_log());
      CHECK_THROWS_AS(m.log(m.origin(), m.origin()), UnsupportedOperation);
    }
  }
}

TEST_CASE("Exp and Log round trip") {
  Rng rng(13);
  for (const char* name : {"r3", "s2", "s3", "sym2"}) {
    const Manifold m = make(name);
    for (int i = 0; i < 50; ++i) {
      const Point x = random_point(m, rng);
      const TangentVector v = random_tangent(m, x, rng.uniform(0.0, 0.5), rng);
      const TangentVector back = m.log(x, m.exp(v));
      CAPTURE(name);
      CHECK((back.components - v.components).norm() < 1e-6);
      if (m.has_embedding() && m.id().family == Family::Sphere) {
        CHECK((m.embed(m.exp(m.log(x, m.exp(v)))) - m.embed(m.exp(v))).norm() < 1e-8);
      }
    }
  }
}

TEST_CASE("RK4 geodesics conserve speed") {
  Rng rng(17);
  for (const char* name : {"s2", "spd2", "lm2x2"}) {
    const Manifold m = make(name);
    for (int i = 0; i < 5; ++i) {
      const Point x = random_point(m, rng);
      const TangentVector v = random_tangent(m, x, 0.5, rng);
      std::vector<double> speeds;
      m.integrate_geodesic(v, Manifold::kGeodesicSteps, &speeds);
      const double v0 = m.inner(x, v.components, v.components);
      for (double s : speeds) CHECK(std::abs(s - v0) / v0 < 1e-6);
    }
  }
}

TEST_CASE("chart re-centering") {
  const Manifold m = make("s2");
  SUBCASE("the chart center is a fixed point") {
    const Point r = m.recenter(m.origin());
    CHECK(r.coords.norm() == 0.0);
    CHECK((r.anchor - m.origin().anchor).norm() < 1e-15);
  }
  SUBCASE("an equator point moves to its own chart") {
    const Point eq = m.in_chart(m.point_from_embedded(Vec::Unit(3, 1)), Vec::Unit(3, 2));
    CHECK(eq.coords.norm() == Approx(1.0));
    CHECK(m.needs_recenter(Point{eq.coords * 1.01, eq.anchor}));
    const Point r = m.recenter(eq);
    CHECK(r.coords.norm() == 0.0);
    CHECK((r.anchor - Vec::Unit(3, 1)).norm() < 1e-12);
    CHECK((m.embed(r) - m.embed(eq)).norm() < 1e-12);
  }
  SUBCASE("flat points are unchanged") {
    const Manifold r = make("r2");
    Point x{Vec::Constant(2, 5.0), Vec()};
    CHECK_FALSE(r.needs_recenter(x));
    CHECK(r.maybe_recenter(x).coords == x.coords);
  }
  SUBCASE("re-centering is an isometry") {
    Rng rng(19);
    for (int i = 0; i < 50; ++i) {
      Point x = m.origin();
      x.coords = 0.8 * rng.normal_vector(2);
      Point y = m.origin();
      y.coords = 0.8 * rng.normal_vector(2);
      CHECK(std::abs(m.distance(m.recenter(x), y) - m.distance(x, y)) < 1e-10);
    }
  }
}

TEST_CASE("tangent projection") {
  const Manifold m = make("s2");
  Vec w(3);
  w << 1, 2, 3;
  Vec expect(3);
  expect << 1, 2, 0;
  CHECK((m.project_ambient(m.origin(), w) - expect).norm() < 1e-14);
  CHECK((m.pushforward(m.project_to_tangent(m.origin(), w)) - expect).norm() < 1e-12);
  CHECK(m.project_ambient(m.origin(), Vec::Unit(3, 2) * 7.0).norm() < 1e-14);
  Rng rng(23);
  for (int i = 0; i < 20; ++i) {
    Point x = m.origin();
    x.coords = 0.5 * rng.normal_vector(2);
    const Vec a = rng.normal_vector(3);
    const Vec once = m.project_ambient(x, a);
    CHECK((m.project_ambient(x, once) - once).norm() < 1e-12);
    CHECK(std::abs(once.dot(m.embed(x))) < 1e-10);
  }
  const Manifold r = make("r3");
  CHECK(r.project_ambient(r.origin(), w) == w);
}

TEST_CASE("Riemannian divergence") {
  const Manifold r = make("r2");
  CHECK(r.divergence([](const Point& p) { return p.coords; }, Point{Vec::Constant(2, 0.3), Vec()}) ==
        Approx(2.0).epsilon(1e-8));
  CHECK(std::abs(r.divergence([](const Point&) { return Vec::Constant(2, 4.0); }, r.origin())) < 1e-8);

  // Divergence theorem on a small chart disc of radius ρ around u = 0:
  // flux of V = u through the boundary over the enclosed Riemannian area.
  const Manifold s = make("s2");
  const double rho = 1e-3;
  auto lambda = [](double r) { return 2.0 / (1.0 + r * r); };
  const double flux = 2 * kPi * lambda(rho) * lambda(rho) * rho * rho;
  double area = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double r = (i + 0.5) * rho / n;
    area += lambda(r) * lambda(r) * 2 * kPi * r * (rho / n);
  }
  const double div = s.divergence([](const Point& p) { return p.coords; }, s.origin());
  CHECK(div == Approx(flux / area).epsilon(1e-5));
}

TEST_CASE("brownian drift is minus half the contracted Christoffels") {
  const Manifold m = make("s2");
  Point x = m.origin();
  x.coords << 0.4, 0.1;
  const MetricData md = m.metric_at(x);
  CHECK((m.brownian_drift(x) + 0.5 * md.christoffel.contract(md.g_inv)).norm() < 1e-14);
  // For the stereographic sphere, -½ g^{jk}Γ^i_jk = 0 in two dimensions (conformal, d = 2).
  CHECK(m.brownian_drift(x).norm() < 1e-14);
}

#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "scoremean/error.hpp"
#include "scoremean/estimators.hpp"
#include "scoremean/rng.hpp"

using namespace scoremean;
using doctest::Approx;

namespace {

std::vector<Point> gaussian_cloud(int n, int d, double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point> pts;
  Vec shift = Vec::LinSpaced(d, 0.5, -0.5);
  for (int i = 0; i < n; ++i) pts.push_back(Point{shift + sd * rng.normal_vector(d), {}});
  return pts;
}

Vec arithmetic_mean(const std::vector<Point>& pts) {
  Vec m = Vec::Zero(pts.front().coords.size());
  for (const Point& p : pts) m += p.coords / static_cast<double>(pts.size());
  return m;
}

double mean_squared_radius(const std::vector<Point>& pts, const Vec& mu) {
  double s = 0.0;
  for (const Point& p : pts) s += (p.coords - mu).squaredNorm() / static_cast<double>(pts.size());
  return s;
}

std::vector<Point> sphere_cap(const Manifold& m, int n, double spread, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point> pts;
  const Vec centre = Vec(Eigen::Vector3d(0.3, -0.2, 1.0)).normalized();
  for (int i = 0; i < n; ++i) {
    Vec v = centre + spread * rng.normal_vector(3);
    pts.push_back(m.point_from_embedded(v.normalized()));
  }
  return pts;
}

}  // namespace

TEST_CASE("optimizer names") {
  CHECK(parse_optim_method("adam") == OptimMethod::Adam);
  CHECK(parse_optim_method(to_string(OptimMethod::Plain)) == OptimMethod::Plain);
  CHECK(default_method(ManifoldId::parse("s2")) == OptimMethod::Plain);
  CHECK(default_method(ManifoldId::parse("r2")) == OptimMethod::Adam);
  CHECK_THROWS_AS(parse_optim_method("sgd"), ValidationError);
}

TEST_CASE("Euclidean diffusion mean is the sample mean and variance") {
  const auto oracle = oracle_provider(ManifoldId::parse("r2"));
  const std::vector<Point> pts = gaussian_cloud(200, 2, 0.6, 1);
  OptimizerConfig cfg;
  cfg.iters = 5000;
  cfg.grad_tol = 1e-8;
  const MeanEstimate est = diffusion_mean(*oracle, pts, cfg);
  const Vec mean = arithmetic_mean(pts);
  CHECK(est.converged);
  CHECK((est.mu.coords - mean).norm() < 1e-6);
  REQUIRE(est.t.has_value());
  CHECK(*est.t == Approx(mean_squared_radius(pts, mean) / 2).epsilon(1e-6));
  CHECK(est.trace.size() == static_cast<std::size_t>(est.iters_used + 1));
}

TEST_CASE("the two-point example") {
  const auto oracle = oracle_provider(ManifoldId::parse("r2"));
  const std::vector<Point> pts{{Vec(Eigen::Vector2d(1, 0)), {}}, {Vec(Eigen::Vector2d(-1, 0)), {}}};
  OptimizerConfig cfg;
  cfg.iters = 5000;
  const MeanEstimate est = diffusion_mean(*oracle, pts, cfg);
  CHECK(est.mu.coords.norm() < 1e-5);
  CHECK(*est.t == Approx(0.5).epsilon(1e-5));
}

TEST_CASE("plain steps ascend the likelihood") {
  const auto oracle = oracle_provider(ManifoldId::parse("s2"));
  const Manifold& m = oracle->manifold();
  const std::vector<Point> pts = sphere_cap(m, 60, 0.4, 2);
  OptimizerConfig cfg;
  cfg.method = OptimMethod::Plain;
  cfg.alpha = 0.02;
  cfg.iters = 150;
  cfg.t0 = 0.3;
  const MeanEstimate est = diffusion_mean(*oracle, pts, cfg);
  double prev = -1e300;
  int drops = 0;
  for (const TraceEntry& e : est.trace) {
    const double ll = *mean_log_likelihood(*oracle, pts, e.mu, e.t);
    if (ll < prev - 1e-12) ++drops;
    prev = ll;
  }
  CHECK(drops == 0);
  CHECK(est.trace.back().grad_mu_norm < est.trace.front().grad_mu_norm);
}

TEST_CASE("diffusion mean on the sphere matches a grid search") {
  const auto oracle = oracle_provider(ManifoldId::parse("s2"));
  const Manifold& m = oracle->manifold();
  const std::vector<Point> pts = sphere_cap(m, 80, 0.5, 3);
  OptimizerConfig cfg;
  cfg.iters = 3000;
  cfg.alpha = 0.2;
  cfg.grad_tol = 1e-8;
  const MeanEstimate est = diffusion_mean(*oracle, pts, cfg);
  CAPTURE(est.iters_used);
  CAPTURE(*est.t);
  CHECK(est.converged);
  // At the optimum t maximizes the mean log-likelihood at fixed mu.
  const auto ll = [&](double t) { return *mean_log_likelihood(*oracle, pts, est.mu, t); };
  const double t_best = oracles::grid_argmax(ll, 0.05, 0.99, 200);
  CHECK(*est.t == Approx(t_best).epsilon(1e-3));
  // And mu is a stationary point of the likelihood.
  const double here = ll(*est.t);
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    Vec dir = rng.normal_vector(2);
    dir /= m.norm(TangentVector{est.mu, dir});
    CHECK(*mean_log_likelihood(*oracle, pts, m.exp(TangentVector{est.mu, 1e-3 * dir}), *est.t) <= here + 1e-9);
  }
}

TEST_CASE("Euclidean estimates are equivariant under scaling") {
  const auto oracle = oracle_provider(ManifoldId::parse("r2"));
  const std::vector<Point> pts = gaussian_cloud(50, 2, 0.3, 5);
  std::vector<Point> scaled;
  for (const Point& p : pts) scaled.push_back(Point{1.5 * p.coords, {}});
  OptimizerConfig cfg;
  cfg.iters = 8000;
  cfg.grad_tol = 1e-9;
  const MeanEstimate a = diffusion_mean(*oracle, pts, cfg);
  const MeanEstimate b = diffusion_mean(*oracle, scaled, cfg);
  CHECK((1.5 * a.mu.coords - b.mu.coords).norm() < 1e-6);
  CHECK(*b.t == Approx(2.25 * *a.t).epsilon(1e-5));
}

TEST_CASE("diffusion mean input validation and warnings") {
  const auto oracle = oracle_provider(ManifoldId::parse("r2"));
  const std::vector<Point> none;
  CHECK_THROWS_AS(diffusion_mean(*oracle, none, {}), ValidationError);
  const std::vector<Point> pts = gaussian_cloud(5, 2, 0.3, 6);
  OptimizerConfig bad;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(diffusion_mean(*oracle, pts, bad), ValidationError);
  OptimizerConfig big;
  big.t0 = 3.0;
  big.iters = 2;
  const MeanEstimate est = diffusion_mean(*oracle, pts, big);
  REQUIRE(!est.warnings.empty());
  CHECK(est.warnings.front().find("initial t clamped") != std::string::npos);
  const std::vector<Point> wrong{{Vec::Zero(3), {}}};
  CHECK_THROWS_AS(diffusion_mean(*oracle, wrong, {}), DomainError);
}

TEST_CASE("score log map") {
  SUBCASE("exact on flat space") {
    const auto oracle = oracle_provider(ManifoldId::parse("r3"));
    Rng rng(7);
    for (int i = 0; i < 10; ++i) {
      const Point x{rng.normal_vector(3), {}}, y{rng.normal_vector(3), {}};
      const TangentVector v = log_map_score(*oracle, x, y, rng.uniform(0.01, 1.0));
      CHECK((v.components - (x.coords - y.coords)).norm() < 1e-12);
    }
  }
  SUBCASE("close to the exact log on the sphere") {
    const auto oracle = oracle_provider(ManifoldId::parse("s2"));
    const Manifold& m = oracle->manifold();
    const Point y = m.point_from_embedded(Vec::Unit(3, 2));
    for (double angle : {0.3, 0.8, 1.5}) {
      const Point x = m.point_from_embedded(Vec(Eigen::Vector3d(std::sin(angle), 0.0, std::cos(angle))));
      const Vec got = m.pushforward(log_map_score(*oracle, x, y, 0.05));
      const Vec want = oracles::sphere_log(m.embed(y), m.embed(x));
      CHECK((got - want).norm() < 0.05 * want.norm());
    }
  }
}

TEST_CASE("Fréchet mean") {
  SUBCASE("arithmetic mean on flat space") {
    const auto oracle = oracle_provider(ManifoldId::parse("r3"));
    const std::vector<Point> pts = gaussian_cloud(40, 3, 1.0, 8);
    FrechetConfig cfg;
    cfg.iters = 2000;
    cfg.grad_tol = 1e-10;
    const MeanEstimate est = frechet_mean(*oracle, pts, cfg, 0.1);
    CHECK(est.converged);
    CHECK((est.mu.coords - arithmetic_mean(pts)).norm() < 1e-9);
    CHECK(!est.t.has_value());
  }
  SUBCASE("a symmetric pair on the sphere is a fixed point at its midpoint") {
    const auto oracle = oracle_provider(ManifoldId::parse("s2"));
    const Manifold& m = oracle->manifold();
    const std::vector<Point> pts{m.point_from_embedded(Vec(Eigen::Vector3d(std::sin(0.5), 0, std::cos(0.5)))),
                                 m.point_from_embedded(Vec(Eigen::Vector3d(-std::sin(0.5), 0, std::cos(0.5))))};
    FrechetConfig cfg;
    cfg.mu0 = m.point_from_embedded(Vec::Unit(3, 2));
    cfg.iters = 5;
    const MeanEstimate est = frechet_mean(*oracle, pts, cfg, 0.05);
    CHECK(est.converged);
    CHECK(est.iters_used == 0);
    CHECK((m.embed(est.mu) - Vec::Unit(3, 2)).norm() < 1e-12);
  }
  SUBCASE("agrees with the exact-distance Fréchet mean on the sphere") {
    const auto oracle = oracle_provider(ManifoldId::parse("s2"));
    const Manifold& m = oracle->manifold();
    const std::vector<Point> pts = sphere_cap(m, 50, 0.3, 9);
    std::vector<Vec> amb;
    for (const Point& p : pts) amb.push_back(m.embed(p));
    FrechetConfig cfg;
    cfg.iters = 3000;
    const MeanEstimate est = frechet_mean(*oracle, pts, cfg, 0.05);
    CHECK(oracles::sphere_distance(m.embed(est.mu), oracles::sphere_frechet_mean(amb, amb.front())) < 0.03);
  }
}

TEST_CASE("Varadhan distance") {
  SUBCASE("exact on flat space") {
    const auto oracle = oracle_provider(ManifoldId::parse("r3"));
    Rng rng(10);
    for (int i = 0; i < 10; ++i) {
      const Point x{rng.normal_vector(3), {}}, y{rng.normal_vector(3), {}};
      const VaradhanDistance d = varadhan_distance(*oracle, x, y, rng.uniform(0.01, 1.0));
      CHECK(d.value == Approx((x.coords - y.coords).norm()).epsilon(1e-10));
      CHECK(!d.clamped);
    }
  }
  SUBCASE("approaches the geodesic distance on the sphere") {
    const auto oracle = oracle_provider(ManifoldId::parse("s2"));
    const Manifold& m = oracle->manifold();
    const Point y = m.point_from_embedded(Vec::Unit(3, 2));
    std::vector<Point> xs;
    for (double angle : {0.2, 0.7, 1.2, 2.0}) {
      xs.push_back(m.point_from_embedded(Vec(Eigen::Vector3d(std::sin(angle), 0.0, std::cos(angle)))));
    }
    const std::vector<VaradhanDistance> many = varadhan_distances(*oracle, xs, y, 0.05);
    double prev_gap = 1e300;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double exact = oracles::sphere_distance(m.embed(xs[i]), m.embed(y));
      CHECK(many[i].value == Approx(exact).epsilon(0.05));
      CHECK(many[i].value == Approx(varadhan_distance(*oracle, xs[i], y, 0.05).value).epsilon(1e-12));
    }
    for (double t : {0.5, 0.2, 0.05}) {
      const double gap = std::abs(varadhan_distance(*oracle, xs[2], y, t).value - 1.2);
      CHECK(gap < prev_gap);
      prev_gap = gap;
    }
  }
}

TEST_CASE("mean log-likelihood") {
  const auto oracle = oracle_provider(ManifoldId::parse("r2"));
  const std::vector<Point> pts = gaussian_cloud(30, 2, 0.5, 11);
  const Vec mu = arithmetic_mean(pts);
  const double got = *mean_log_likelihood(*oracle, pts, Point{mu, {}}, 0.3);
  std::vector<Vec> raw;
  for (const Point& p : pts) raw.push_back(p.coords);
  CHECK(got == Approx(oracles::gaussian_mean_log_likelihood(raw, mu, 0.3)).epsilon(1e-12));
}

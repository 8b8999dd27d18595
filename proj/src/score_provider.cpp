#include "scoremean/score_provider.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "scoremean/error.hpp"

namespace scoremean {

double TimeInterval::clamp(double t) const {
  double low = lo_inclusive ? lo : std::nextafter(lo, std::numeric_limits<double>::infinity());
  return std::min(std::max(t, low), hi);
}

void ScoreProvider::check_time(double t) const {
  TimeInterval dom = domain();
  if (!dom.contains(t)) {
    throw DomainError("diffusion time " + std::to_string(t) + " outside the " + kind() +
                      " provider's interval for " + manifold().id().name());
  }
}

std::vector<Vec> ScoreProvider::score_many(std::span<const Point> xs, const Point& y, double t) const {
  std::vector<Vec> out;
  out.reserve(xs.size());
  for (const Point& x : xs) out.push_back(score(x, y, t));
  return out;
}

std::vector<double> ScoreProvider::dt_log_p_many(std::span<const Point> xs, const Point& y, double t) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const Point& x : xs) out.push_back(dt_log_p(x, y, t));
  return out;
}

ScoresAndDts ScoreProvider::score_and_dt_many(std::span<const Point> xs, const Point& y, double t) const {
  return {score_many(xs, y, t), dt_log_p_many(xs, y, t)};
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gaussian with covariance t·G⁻¹ for a constant metric G. Relative to the
// Riemannian volume this is exactly the heat kernel of the flat manifold.
class FlatOracle final : public ScoreProvider {
 public:
  explicit FlatOracle(const ManifoldId& id)
      : manifold_(id), metric_(manifold_.metric_tensor(manifold_.origin())) {}

  const Manifold& manifold() const override { return manifold_; }
  TimeInterval domain() const override { return {0.0, kInf, false}; }
  std::string kind() const override { return "oracle"; }

  Vec score(const Point& x, const Point& y, double t) const override {
    check_time(t);
    return metric_ * (x.coords - y.coords) / t;
  }
  double dt_log_p(const Point& x, const Point& y, double t) const override {
    check_time(t);
    const double d = manifold_.dim();
    return quad(x, y) / (2.0 * t * t) - d / (2.0 * t);
  }
  std::optional<double> log_p(const Point& x, const Point& y, double t) const override {
    check_time(t);
    const double d = manifold_.dim();
    return -quad(x, y) / (2.0 * t) - 0.5 * d * std::log(2.0 * std::numbers::pi * t);
  }
  std::optional<Mat> score_jacobian(const Point&, const Point&, double t) const override {
    check_time(t);
    return Mat(-metric_ / t);
  }

 private:
  double quad(const Point& x, const Point& y) const {
    Vec diff = y.coords - x.coords;
    return diff.dot(metric_ * diff);
  }

  Manifold manifold_;
  Mat metric_;
};

class CircleOracle final : public ScoreProvider {
 public:
  CircleOracle(const ManifoldId& id, const SeriesTruncation& trunc) : manifold_(id), trunc_(trunc) {}

  const Manifold& manifold() const override { return manifold_; }
  TimeInterval domain() const override { return {0.0, kInf, false}; }
  std::string kind() const override { return "oracle"; }

  Vec score(const Point& x, const Point& y, double t) const override {
    check_time(t);
    Vec py = manifold_.embed(y);
    double dy = heat_kernel::circle_score(angle(x), std::atan2(py[1], py[0]), t, trunc_);
    Vec e_theta(2);
    e_theta << -py[1], py[0];
    return manifold_.pullback_covector(y, dy * e_theta);
  }
  double dt_log_p(const Point& x, const Point& y, double t) const override {
    check_time(t);
    return heat_kernel::circle_dt_log_p(angle(x), angle(y), t, trunc_);
  }
  std::optional<double> log_p(const Point& x, const Point& y, double t) const override {
    check_time(t);
    return heat_kernel::circle_log_p(angle(x), angle(y), t, trunc_);
  }

 private:
  double angle(const Point& x) const {
    Vec p = manifold_.embed(x);
    return std::atan2(p[1], p[0]);
  }

  Manifold manifold_;
  SeriesTruncation trunc_;
};

class SphereOracle final : public ScoreProvider {
 public:
  SphereOracle(const ManifoldId& id, const SeriesTruncation& trunc) : manifold_(id), trunc_(trunc) {}

  const Manifold& manifold() const override { return manifold_; }
  TimeInterval domain() const override { return {kSphereMinTime, kInf, true}; }
  std::string kind() const override { return "oracle"; }

  Vec score(const Point& x, const Point& y, double t) const override {
    check_time(t);
    Vec grad = heat_kernel::sphere_score(manifold_.embed(x), manifold_.embed(y), t, trunc_);
    return manifold_.pullback_covector(y, grad);
  }
  double dt_log_p(const Point& x, const Point& y, double t) const override {
    check_time(t);
    return heat_kernel::sphere_dt_log_p(manifold_.embed(x), manifold_.embed(y), t, trunc_);
  }
  std::optional<double> log_p(const Point& x, const Point& y, double t) const override {
    check_time(t);
    return heat_kernel::sphere_log_p(manifold_.embed(x), manifold_.embed(y), t, trunc_);
  }

 private:
  Manifold manifold_;
  SeriesTruncation trunc_;
};

}  // namespace

std::unique_ptr<ScoreProvider> oracle_provider(const ManifoldId& id, const SeriesTruncation& trunc) {
  switch (id.family) {
    case Family::Euclidean:
    case Family::Sym:
      return std::make_unique<FlatOracle>(id);
    case Family::Sphere:
      if (id.n == 1) return std::make_unique<CircleOracle>(id, trunc);
      return std::make_unique<SphereOracle>(id, trunc);
    default:
      throw NoOracleError("no closed-form heat kernel for " + id.name());
  }
}

}  // namespace scoremean

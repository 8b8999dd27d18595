#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scoremean/heat_kernel.hpp"
#include "scoremean/manifold.hpp"

namespace scoremean {

/// Diffusion times a provider accepts: (lo, hi] or [lo, hi].
struct TimeInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_inclusive = false;

  bool contains(double t) const {
    return (lo_inclusive ? t >= lo : t > lo) && t <= hi;
  }
  /// Nearest admissible time (the open lower end maps to a hair above lo).
  double clamp(double t) const;
};

/// Uniform access to ∇_y log p_t(x, y) and ∂_t log p_t(x, y), whether they come
/// from a closed-form heat kernel or a trained network.
///
/// Scores are chart covectors at y: the partial derivatives ∂ log p / ∂y^i.
/// Raise the index with g⁻¹(y) to obtain the Riemannian gradient.
struct ScoresAndDts {
  std::vector<Vec> scores;
  std::vector<double> dts;
};

class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;

  virtual const Manifold& manifold() const = 0;
  virtual TimeInterval domain() const = 0;
  virtual std::string kind() const = 0;

  virtual Vec score(const Point& x, const Point& y, double t) const = 0;
  virtual double dt_log_p(const Point& x, const Point& y, double t) const = 0;

  /// Log density when the provider can evaluate it (analytic kernels, and
  /// potential networks up to a constant).
  virtual std::optional<double> log_p(const Point&, const Point&, double) const {
    return std::nullopt;
  }
  /// Exact chart Jacobian of score(x, ·, t) at y, when available.
  virtual std::optional<Mat> score_jacobian(const Point&, const Point&, double) const {
    return std::nullopt;
  }

  /// Batched forms, one result per x. The defaults loop over score/dt_log_p.
  virtual std::vector<Vec> score_many(std::span<const Point> xs, const Point& y, double t) const;
  virtual std::vector<double> dt_log_p_many(std::span<const Point> xs, const Point& y, double t) const;
  /// Both at once; networks share the forward pass.
  virtual ScoresAndDts score_and_dt_many(std::span<const Point> xs, const Point& y, double t) const;

  /// Throws DomainError when t lies outside domain().
  void check_time(double t) const;
};

/// Closed-form providers: R^n, Sym(n) (flat, covariance t·g⁻¹), S^1, S^m.
/// Throws NoOracleError for SPD and landmark spaces.
std::unique_ptr<ScoreProvider> oracle_provider(const ManifoldId& id,
                                               const SeriesTruncation& trunc = {});

}  // namespace scoremean

#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scoremean/error.hpp"
#include "scoremean/score_provider.hpp"

namespace scoremean {

enum class OptimMethod { Plain, Adam };

std::string to_string(OptimMethod m);
OptimMethod parse_optim_method(std::string_view text);
/// Plain gradient steps on spheres, Adam elsewhere.
OptimMethod default_method(const ManifoldId& id);

struct OptimizerConfig {
  double alpha = 0.1;
  std::optional<double> alpha_t;  // defaults to alpha
  double t0 = 0.2;
  int iters = 1000;
  std::optional<OptimMethod> method;  // defaults per manifold family
  double grad_tol = 1e-6;
  double t_min = 0.01;
  std::optional<Point> mu0;  // defaults to the first observation
  int threads = 1;
};

struct TraceEntry {
  Point mu;
  double t = 0.0;            // NaN for Fréchet iterations
  double grad_mu_norm = 0.0;  // Riemannian norm at mu
  double grad_t = 0.0;
};

struct MeanEstimate {
  Point mu;
  std::optional<double> t;
  std::vector<TraceEntry> trace;
  bool converged = false;
  int iters_used = 0;
  std::vector<std::string> warnings;
};

/// Raised when an iterate becomes non-finite; carries the trace so far.
class EstimationFailure : public NumericalError {
 public:
  EstimationFailure(const std::string& what, MeanEstimate partial)
      : NumericalError(what), partial_(std::make_shared<MeanEstimate>(std::move(partial))) {}
  const MeanEstimate& partial() const { return *partial_; }

 private:
  std::shared_ptr<MeanEstimate> partial_;
};

/// Joint ascent of the mean log-likelihood in (μ, t):
///   μ ← Exp_μ(α · g⁻¹ mean_i s(x_i, μ, t)),  t ← clamp(t + α_t · mean_i ∂_t log p).
MeanEstimate diffusion_mean(const ScoreProvider& provider, std::span<const Point> data,
                            const OptimizerConfig& cfg);

/// t · g⁻¹ s(x, y, t): estimate of Log_y(x) at small t.
TangentVector log_map_score(const ScoreProvider& provider, const Point& x, const Point& y, double t_small);

struct FrechetConfig {
  std::optional<double> alpha;  // 0.01 on spheres, 0.1 elsewhere
  int iters = 1000;
  double grad_tol = 1e-6;
  std::optional<Point> mu0;
  int threads = 1;
};

/// Normalized gradient steps of length α along the mean score log map; once
/// the mean log map is shorter than α the full step is taken.
MeanEstimate frechet_mean(const ScoreProvider& provider, std::span<const Point> data, const FrechetConfig& cfg,
                          double t_small);

struct VaradhanDistance {
  double value = 0.0;
  bool clamped = false;  // the radicand was negative
};

/// sqrt(max(0, 2t² ∂_t log p_t(x, y) + d·t)).
VaradhanDistance varadhan_distance(const ScoreProvider& provider, const Point& x, const Point& y, double t_small);
/// Same for many x at once.
std::vector<VaradhanDistance> varadhan_distances(const ScoreProvider& provider, std::span<const Point> xs,
                                                 const Point& y, double t_small);

/// Mean of log p_t(x_i, μ) when the provider can evaluate it.
std::optional<double> mean_log_likelihood(const ScoreProvider& provider, std::span<const Point> data,
                                          const Point& mu, double t);

}  // namespace scoremean

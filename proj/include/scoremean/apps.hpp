#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scoremean/mlp.hpp"
#include "scoremean/score_provider.hpp"

namespace scoremean {

// ---------------------------------------------------------------------------
// Riemannian k-means

struct KMeansConfig {
  int k = 3;
  int iters = 10;
  double t_rank = 0.1;   // time for the Varadhan ranking distance
  double t_small = 0.1;  // time for the score log map in centroid updates
  int frechet_iters = 100;
  double frechet_step = 0.1;
  std::vector<Point> init_centroids;  // farthest-point seeding when empty
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
};

struct KMeansResult {
  std::vector<Point> centroids;
  std::vector<int> labels;
  std::vector<double> inertia;  // after every assignment step
  int iters_used = 0;
  std::vector<std::string> warnings;

  /// N × K indicator matrix z_nk.
  Mat one_hot() const;
};

/// Farthest-point seeding on the ranking distance: a random first centroid,
/// then repeatedly the observation farthest from all chosen centroids.
std::vector<Point> farthest_point_seeds(const ScoreProvider& provider, std::span<const Point> data, int k,
                                        double t_rank, std::uint64_t seed);

KMeansResult riemannian_kmeans(const ScoreProvider& provider, std::span<const Point> data, const KMeansConfig& cfg);

/// Adjusted Rand index between two labelings.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// ---------------------------------------------------------------------------
// Maximum-likelihood geodesic regression

enum class SigmaMode { Constant, Learned };

std::string to_string(SigmaMode m);
SigmaMode parse_sigma_mode(std::string_view text);

struct RegressionConfig {
  int iters = 1000;
  double lr = 0.01;
  double grad_tol = 1e-9;
  SigmaMode sigma_mode = SigmaMode::Constant;
  double sigma0 = 0.5;
  std::vector<int> sigma_hidden{32, 32};
  std::optional<Point> mu0;
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
};

struct RegressionTraceEntry {
  std::optional<double> log_likelihood;  // mean over observations
  double mean_sigma = 0.0;
  double grad_norm = 0.0;
};

struct RegressionModel {
  ManifoldId manifold;
  Point mu;
  Mat v;  // d × (number of covariates), chart components at mu
  SigmaMode sigma_mode = SigmaMode::Constant;
  double rho = 0.0;  // σ = softplus(rho) in constant mode
  Mlp sigma_net;     // σ(x) = softplus(net(x)) in learned mode
  std::vector<RegressionTraceEntry> trace;
  bool converged = false;
  int iters_used = 0;
  std::vector<std::string> warnings;
};

struct RegressionPrediction {
  Point point;
  double sigma = 0.0;
};

/// Ascends the mean log-likelihood of y_i ~ p_{σ(x_i)²}(f(x_i), ·) with
/// f(x) = Exp_μ(Σ_c x^c v_c). When the provider evaluates log p, steps that
/// would lower the likelihood are shortened until they do not.
RegressionModel mlrr_fit(const ScoreProvider& provider, std::span<const Vec> covariates,
                         std::span<const Point> responses, const RegressionConfig& cfg);

RegressionPrediction mlrr_predict(const RegressionModel& model, const Vec& x);

double softplus(double x);

}  // namespace scoremean

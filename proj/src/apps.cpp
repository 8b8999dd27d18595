#include "scoremean/apps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "scoremean/error.hpp"
#include "scoremean/estimators.hpp"
#include "scoremean/parallel.hpp"

namespace scoremean {

Mat KMeansResult::one_hot() const {
  Mat z = Mat::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(centroids.size()));
  for (std::size_t n = 0; n < labels.size(); ++n) z(static_cast<Eigen::Index>(n), labels[n]) = 1.0;
  return z;
}

namespace {

std::vector<double> ranking_to(const ScoreProvider& p, std::span<const Point> data, const Point& centroid,
                               double t_rank) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const VaradhanDistance& d : varadhan_distances(p, data, centroid, t_rank)) out.push_back(d.value);
  return out;
}

}  // namespace

std::vector<Point> farthest_point_seeds(const ScoreProvider& provider, std::span<const Point> data, int k,
                                        double t_rank, std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > data.size()) throw ValidationError("k must lie in [1, N]");
  Rng rng(seed);
  std::vector<Point> seeds{data[rng.index(data.size())]};
  std::vector<double> nearest = ranking_to(provider, data, seeds.back(), t_rank);
  while (static_cast<int>(seeds.size()) < k) {
    const auto far = std::max_element(nearest.begin(), nearest.end());
    seeds.push_back(data[static_cast<std::size_t>(far - nearest.begin())]);
    std::vector<double> d = ranking_to(provider, data, seeds.back(), t_rank);
    for (std::size_t n = 0; n < d.size(); ++n) nearest[n] = std::min(nearest[n], d[n]);
  }
  return seeds;
}

KMeansResult riemannian_kmeans(const ScoreProvider& provider, std::span<const Point> data, const KMeansConfig& cfg) {
  if (data.empty()) throw ValidationError("no observations");
  if (cfg.k < 1 || static_cast<std::size_t>(cfg.k) > data.size()) throw ValidationError("k must lie in [1, N]");
  if (cfg.iters < 1) throw ValidationError("k-means needs at least one iteration");
  const Manifold& m = provider.manifold();
  for (const Point& x : data) m.validate(x);

  KMeansResult res;
  if (cfg.init_centroids.empty()) {
    res.centroids = farthest_point_seeds(provider, data, cfg.k, cfg.t_rank, cfg.seed);
  } else {
    if (static_cast<int>(cfg.init_centroids.size()) != cfg.k) {
      throw ValidationError("expected " + std::to_string(cfg.k) + " initial centroids");
    }
    for (const Point& c : cfg.init_centroids) m.validate(c);
    res.centroids = cfg.init_centroids;
  }

  const std::size_t N = data.size();
  const int K = cfg.k;
  std::vector<std::vector<double>> dist(K);
  auto assign = [&]() {
    parallel_for(static_cast<std::size_t>(K), cfg.threads,
                 [&](std::size_t j) { dist[j] = ranking_to(provider, data, res.centroids[j], cfg.t_rank); });
    res.labels.assign(N, 0);
    std::vector<double> best(N);
    for (std::size_t n = 0; n < N; ++n) {
      int arg = 0;
      for (int j = 1; j < K; ++j) {
        if (dist[j][n] < dist[arg][n]) arg = j;
      }
      res.labels[n] = arg;
      best[n] = dist[arg][n];
    }
    for (int j = 0; j < K; ++j) {
      if (std::find(res.labels.begin(), res.labels.end(), j) != res.labels.end()) continue;
      const std::size_t far = static_cast<std::size_t>(std::max_element(best.begin(), best.end()) - best.begin());
      res.centroids[j] = data[far];
      res.labels[far] = j;
      best[far] = 0.0;
      dist[j][far] = 0.0;
      res.warnings.push_back("cluster " + std::to_string(j) + " was empty and was re-seeded");
    }
    double inertia = 0.0;
    for (double b : best) inertia += b * b;
    res.inertia.push_back(inertia);
  };
  auto cluster_inertia = [&](int j, const std::vector<double>& d) {
    double s = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      if (res.labels[n] == j) s += d[n] * d[n];
    }
    return s;
  };

  assign();
  for (int it = 0; it < cfg.iters; ++it) {
    const std::vector<int> before = res.labels;
    std::vector<Point> updated(res.centroids);
    parallel_for(static_cast<std::size_t>(K), cfg.threads, [&](std::size_t j) {
      std::vector<Point> members;
      for (std::size_t n = 0; n < N; ++n) {
        if (res.labels[n] == static_cast<int>(j)) members.push_back(data[n]);
      }
      FrechetConfig fc;
      fc.alpha = cfg.frechet_step;
      fc.iters = cfg.frechet_iters;
      fc.mu0 = res.centroids[j];
      Point candidate = frechet_mean(provider, members, fc, cfg.t_small).mu;
      // Keep the update only if it does not raise this cluster's ranking inertia.
      std::vector<double> d = ranking_to(provider, data, candidate, cfg.t_rank);
      if (cluster_inertia(static_cast<int>(j), d) <= cluster_inertia(static_cast<int>(j), dist[j])) {
        updated[j] = std::move(candidate);
      }
    });
    res.centroids = std::move(updated);
    assign();
    res.iters_used = it + 1;
    if (res.labels == before && res.inertia[res.inertia.size() - 2] == res.inertia.back()) break;
  }
  return res;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ValidationError("labelings differ in length");
  auto pairs = [](double n) { return n * (n - 1.0) / 2.0; };
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, n] : joint) sum_joint += pairs(n);
  for (const auto& [key, n] : ca) sum_a += pairs(n);
  for (const auto& [key, n] : cb) sum_b += pairs(n);
  const double expected = sum_a * sum_b / pairs(static_cast<double>(a.size()));
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 1.0;
  return (sum_joint - expected) / (maximum - expected);
}

// ---------------------------------------------------------------------------

std::string to_string(SigmaMode m) { return m == SigmaMode::Learned ? "learned_sigma" : "constant_sigma"; }

SigmaMode parse_sigma_mode(std::string_view text) {
  if (text == "constant_sigma" || text == "constant") return SigmaMode::Constant;
  if (text == "learned_sigma" || text == "learned") return SigmaMode::Learned;
  throw ValidationError("unknown sigma mode '" + std::string(text) + "'");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace {

constexpr double kMinSigma = 1e-4;
constexpr double kJacobianStep = 1e-5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

Point regression_point(const Manifold& m, const Point& mu, const Mat& v, const Vec& x) {
  return m.exp(TangentVector{mu, v * x});
}

// Everything the optimizer changes, flattened: μ coordinates, v column-major,
// then the σ parameters.
struct Params {
  Point mu;
  Mat v;
  double rho = 0.0;
  std::vector<double> net;
};

struct Evaluation {
  std::vector<Point> f;       // regression points, each in its own chart
  std::vector<double> sigma;  // raw σ(x_i) before clamping
  std::vector<double> dsig;   // ∂σ/∂(output pre-activation)
  std::vector<double> t;      // clamped σ²
};

class Fitter {
 public:
  Fitter(const ScoreProvider& p, std::span<const Vec> xs, std::span<const Point> ys, const RegressionConfig& cfg)
      : p_(p), m_(p.manifold()), xs_(xs), ys_(ys), cfg_(cfg), dom_(p.domain()) {
    t_lo_ = std::max(dom_.clamp(0.0), kMinSigma * kMinSigma);
  }

  Evaluation evaluate(const Params& q, const Mlp& net) const {
    Evaluation e;
    const std::size_t N = xs_.size();
    e.f.resize(N);
    e.sigma.resize(N);
    e.dsig.resize(N);
    e.t.resize(N);
    parallel_for(N, cfg_.threads, [&](std::size_t i) { e.f[i] = regression_point(m_, q.mu, q.v, xs_[i]); });
    if (cfg_.sigma_mode == SigmaMode::Constant) {
      std::fill(e.sigma.begin(), e.sigma.end(), softplus(q.rho));
      std::fill(e.dsig.begin(), e.dsig.end(), sigmoid(q.rho));
    } else {
      std::vector<double> in = stack_covariates();
      MlpWorkspace ws;
      net.forward(in.data(), static_cast<int>(N), ws);
      for (std::size_t i = 0; i < N; ++i) {
        e.sigma[i] = softplus(ws.act.back()[i]);
        e.dsig[i] = sigmoid(ws.act.back()[i]);
      }
    }
    for (std::size_t i = 0; i < N; ++i) {
      e.t[i] = std::min(std::max(e.sigma[i] * e.sigma[i], t_lo_), dom_.hi);
    }
    return e;
  }

  std::optional<double> log_likelihood(const Evaluation& e) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < ys_.size(); ++i) {
      std::optional<double> lp = p_.log_p(ys_[i], e.f[i], e.t[i]);
      if (!lp) return std::nullopt;
      sum += *lp;
    }
    return sum / static_cast<double>(ys_.size());
  }

  std::vector<double> stack_covariates() const {
    const std::size_t N = xs_.size();
    const int c = static_cast<int>(xs_.front().size());
    std::vector<double> in(static_cast<std::size_t>(c) * N);
    for (std::size_t i = 0; i < N; ++i) {
      for (int r = 0; r < c; ++r) in[r * N + i] = xs_[i][r];
    }
    return in;
  }

  // Gradient of the mean log-likelihood in the flattened parameter order.
  Vec gradient(const Params& q, const Mlp& net, const Evaluation& e, bool& sigma_pinned) const {
    const int d = m_.dim();
    const int c = static_cast<int>(q.v.cols());
    const int geo = d + d * c;
    const std::size_t N = xs_.size();
    const int n_sigma = cfg_.sigma_mode == SigmaMode::Constant ? 1 : static_cast<int>(net.param_count());
    std::vector<Vec> per_point(N);
    std::vector<double> dt(N);
    parallel_for(N, cfg_.threads, [&](std::size_t i) {
      const Vec s = p_.score(ys_[i], e.f[i], e.t[i]);
      Vec g = Vec::Zero(geo);
      for (int k = 0; k < geo; ++k) {
        Params plus = q, minus = q;
        bump(plus, k, kJacobianStep);
        bump(minus, k, -kJacobianStep);
        const Vec fp = in_chart_of(regression_point(m_, plus.mu, plus.v, xs_[i]), e.f[i]);
        const Vec fm = in_chart_of(regression_point(m_, minus.mu, minus.v, xs_[i]), e.f[i]);
        g[k] = s.dot(fp - fm) / (2.0 * kJacobianStep);
      }
      per_point[i] = std::move(g);
      dt[i] = p_.dt_log_p(ys_[i], e.f[i], e.t[i]);
    });

    Vec grad = Vec::Zero(geo + n_sigma);
    for (const Vec& g : per_point) grad.head(geo) += g;
    // ∂/∂σ log p_{σ²} = 2σ ∂_t log p; zero where σ² sits on the clamp.
    std::vector<double> dsigma_out(N, 0.0);
    sigma_pinned = false;
    for (std::size_t i = 0; i < N; ++i) {
      const double raw_t = e.sigma[i] * e.sigma[i];
      if (raw_t < t_lo_ || raw_t > dom_.hi) {
        const bool outward = (raw_t < t_lo_ && dt[i] < 0.0) || (raw_t > dom_.hi && dt[i] > 0.0);
        if (outward) {
          sigma_pinned = true;
          continue;
        }
      }
      dsigma_out[i] = dt[i] * 2.0 * e.sigma[i] * e.dsig[i];
    }
    if (cfg_.sigma_mode == SigmaMode::Constant) {
      for (double v : dsigma_out) grad[geo] += v;
    } else {
      std::vector<double> in = stack_covariates();
      MlpWorkspace ws;
      net.forward(in.data(), static_cast<int>(N), ws);
      std::vector<double> g(net.param_count(), 0.0);
      net.backward(ws, dsigma_out.data(), g.data(), nullptr);
      for (int k = 0; k < n_sigma; ++k) grad[geo + k] = g[k];
    }
    return grad / static_cast<double>(N);
  }

  void bump(Params& q, int k, double h) const {
    const int d = m_.dim();
    if (k < d) {
      q.mu.coords[k] += h;
    } else {
      q.v(( k - d) % d, (k - d) / d) += h;
    }
  }

  Vec in_chart_of(const Point& x, const Point& ref) const {
    return m_.id().anchored() ? m_.in_chart(x, ref.anchor).coords : x.coords;
  }

 private:
  const ScoreProvider& p_;
  const Manifold& m_;
  std::span<const Vec> xs_;
  std::span<const Point> ys_;
  const RegressionConfig& cfg_;
  TimeInterval dom_;
  double t_lo_;
};

}  // namespace

RegressionModel mlrr_fit(const ScoreProvider& provider, std::span<const Vec> covariates,
                         std::span<const Point> responses, const RegressionConfig& cfg) {
  if (covariates.empty() || covariates.size() != responses.size()) {
    throw ValidationError("need equally many covariates and responses");
  }
  if (cfg.iters < 1 || !(cfg.lr > 0.0) || !(cfg.sigma0 > 0.0)) throw ValidationError("regression settings must be positive");
  const Manifold& m = provider.manifold();
  const int c = static_cast<int>(covariates.front().size());
  if (c < 1) throw ValidationError("covariates must have at least one column");
  for (const Vec& x : covariates) {
    if (x.size() != c || !x.allFinite()) throw ValidationError("covariate rows must be finite and of equal length");
  }
  for (const Point& y : responses) m.validate(y);

  Params q;
  if (cfg.mu0) {
    q.mu = *cfg.mu0;
  } else {
    std::size_t closest = 0;
    for (std::size_t i = 1; i < covariates.size(); ++i) {
      if (covariates[i].norm() < covariates[closest].norm()) closest = i;
    }
    q.mu = responses[closest];
  }
  m.validate(q.mu);
  q.mu = m.maybe_recenter(q.mu);
  q.v = Mat::Zero(m.dim(), c);
  q.rho = softplus_inverse(cfg.sigma0);

  RegressionModel model;
  model.manifold = m.id();
  model.sigma_mode = cfg.sigma_mode;
  Mlp net;
  if (cfg.sigma_mode == SigmaMode::Learned) {
    std::vector<int> dims{c};
    dims.insert(dims.end(), cfg.sigma_hidden.begin(), cfg.sigma_hidden.end());
    dims.push_back(1);
    Rng rng(cfg.seed);
    net = Mlp::glorot(std::move(dims), rng);
    // Start from σ(x) ≈ sigma0 everywhere.
    net.params()[net.bias_offset(net.layers() - 1)] = softplus_inverse(cfg.sigma0);
  }

  Fitter fit(provider, covariates, responses, cfg);
  const int d = m.dim();
  const int geo = d + d * c;
  Vec adam_m, adam_v;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  auto apply = [&](const Params& base, const Mlp& base_net, const Vec& step, Params& out, Mlp& out_net) {
    out = base;
    out_net = base_net;
    for (int k = 0; k < d; ++k) out.mu.coords[k] += step[k];
    for (int k = d; k < geo; ++k) out.v((k - d) % d, (k - d) / d) += step[k];
    if (cfg.sigma_mode == SigmaMode::Constant) {
      out.rho += step[geo];
    } else {
      for (std::size_t k = 0; k < out_net.param_count(); ++k) out_net.params()[k] += step[geo + static_cast<int>(k)];
    }
    if (m.needs_recenter(out.mu)) {
      const Point moved = m.recenter(out.mu);
      for (int col = 0; col < c; ++col) {
        out.v.col(col) = m.rechart(TangentVector{out.mu, out.v.col(col)}, moved).components;
      }
      out.mu = moved;
    }
  };

  Evaluation e = fit.evaluate(q, net);
  std::optional<double> ll = fit.log_likelihood(e);
  for (int it = 0; it < cfg.iters; ++it) {
    bool pinned = false;
    const Vec grad = fit.gradient(q, net, e, pinned);
    const double gnorm = grad.norm();
    double mean_sigma = 0.0;
    for (double s : e.sigma) mean_sigma += s;
    model.trace.push_back({ll, mean_sigma / static_cast<double>(e.sigma.size()), gnorm});
    if (!std::isfinite(gnorm)) throw NumericalError("regression gradient became non-finite");
    if (pinned && model.warnings.empty()) {
      model.warnings.push_back("sigma^2 reached the provider's time limit and was clamped");
    }
    if (gnorm < cfg.grad_tol) {
      model.converged = true;
      break;
    }
    if (adam_m.size() == 0) {
      adam_m = Vec::Zero(grad.size());
      adam_v = Vec::Zero(grad.size());
    }
    adam_m = beta1 * adam_m + (1.0 - beta1) * grad;
    adam_v = beta2 * adam_v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const Vec mhat = adam_m / (1.0 - std::pow(beta1, it + 1));
    const Vec vhat = adam_v / (1.0 - std::pow(beta2, it + 1));
    const Vec direction = cfg.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());

    Params next;
    Mlp next_net;
    Evaluation next_e;
    std::optional<double> next_ll;
    bool accepted = false;
    double scale = 1.0;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      apply(q, net, scale * direction, next, next_net);
      next_e = fit.evaluate(next, next_net);
      next_ll = fit.log_likelihood(next_e);
      if (!ll || !next_ll || *next_ll >= *ll) {
        accepted = true;
        break;
      }
    }
    model.iters_used = it + 1;
    if (!accepted) {
      model.converged = true;
      break;
    }
    q = std::move(next);
    net = std::move(next_net);
    e = std::move(next_e);
    ll = next_ll;
  }
  if (std::any_of(e.sigma.begin(), e.sigma.end(), [](double s) { return s < kMinSigma; })) {
    model.warnings.push_back("sigma collapsed below 1e-4 and is clamped");
  }
  model.mu = q.mu;
  model.v = q.v;
  model.rho = q.rho;
  model.sigma_net = std::move(net);
  return model;
}

RegressionPrediction mlrr_predict(const RegressionModel& model, const Vec& x) {
  if (x.size() != model.v.cols()) throw ValidationError("covariate has the wrong length");
  const Manifold m(model.manifold);
  RegressionPrediction out;
  out.point = regression_point(m, model.mu, model.v, x);
  if (model.sigma_mode == SigmaMode::Constant) {
    out.sigma = softplus(model.rho);
  } else {
    std::vector<double> in(x.data(), x.data() + x.size());
    out.sigma = softplus(model.sigma_net(in).front());
  }
  out.sigma = std::max(out.sigma, kMinSigma);
  return out;
}

}  // namespace scoremean

#include "scoremean/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scoremean/parallel.hpp"

namespace scoremean {

std::string to_string(OptimMethod m) { return m == OptimMethod::Adam ? "adam" : "plain"; }

OptimMethod parse_optim_method(std::string_view text) {
  if (text == "plain") return OptimMethod::Plain;
  if (text == "adam") return OptimMethod::Adam;
  throw ValidationError("unknown optimizer method '" + std::string(text) + "'");
}

OptimMethod default_method(const ManifoldId& id) {
  return id.family == Family::Sphere ? OptimMethod::Plain : OptimMethod::Adam;
}

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<Vec> scores_at(const ScoreProvider& p, std::span<const Point> data, const Point& mu, double t,
                           int threads) {
  const std::size_t chunks = (data.size() + kEvalChunk - 1) / kEvalChunk;
  std::vector<std::vector<Vec>> parts(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kEvalChunk;
    parts[c] = p.score_many(data.subspan(lo, std::min(kEvalChunk, data.size() - lo)), mu, t);
  });
  std::vector<Vec> out;
  out.reserve(data.size());
  for (auto& part : parts) {
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

ScoresAndDts gradients_at(const ScoreProvider& p, std::span<const Point> data, const Point& mu, double t,
                          int threads) {
  const std::size_t chunks = (data.size() + kEvalChunk - 1) / kEvalChunk;
  std::vector<ScoresAndDts> parts(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kEvalChunk;
    parts[c] = p.score_and_dt_many(data.subspan(lo, std::min(kEvalChunk, data.size() - lo)), mu, t);
  });
  ScoresAndDts out;
  out.scores.reserve(data.size());
  out.dts.reserve(data.size());
  for (auto& part : parts) {
    for (auto& v : part.scores) out.scores.push_back(std::move(v));
    out.dts.insert(out.dts.end(), part.dts.begin(), part.dts.end());
  }
  return out;
}

Vec mean_of(const std::vector<Vec>& vs) {
  Vec m = Vec::Zero(vs.front().size());
  for (const Vec& v : vs) m += v;
  return m / static_cast<double>(vs.size());
}

void check_data(const ScoreProvider& p, std::span<const Point> data) {
  if (data.empty()) throw ValidationError("no observations");
  for (const Point& x : data) p.manifold().validate(x);
}

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vec m, v;
  int k = 0;

  Vec step(const Vec& grad, double lr) {
    if (m.size() == 0) {
      m = Vec::Zero(grad.size());
      v = Vec::Zero(grad.size());
    }
    ++k;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const Vec mhat = m / (1.0 - std::pow(beta1, k));
    const Vec vhat = v / (1.0 - std::pow(beta2, k));
    return lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());
  }
};

}  // namespace

MeanEstimate diffusion_mean(const ScoreProvider& provider, std::span<const Point> data, const OptimizerConfig& cfg) {
  check_data(provider, data);
  if (!(cfg.alpha > 0.0) || cfg.iters < 1 || !(cfg.t0 > 0.0) || !(cfg.t_min > 0.0) || !(cfg.grad_tol > 0.0)) {
    throw ValidationError("optimizer settings must be positive");
  }
  const Manifold& m = provider.manifold();
  const OptimMethod method = cfg.method.value_or(default_method(m.id()));
  const double alpha_t = cfg.alpha_t.value_or(cfg.alpha);

  MeanEstimate est;
  const TimeInterval dom = provider.domain();
  const double t_lo = std::max(cfg.t_min, dom.clamp(cfg.t_min));
  const double t_hi = std::min(std::nextafter(1.0, 0.0), dom.hi);
  if (t_lo > cfg.t_min) {
    est.warnings.push_back("t is held at or above " + std::to_string(t_lo) + ", the provider's lower time limit");
  }
  auto clamp_t = [&](double t) { return std::clamp(t, t_lo, t_hi); };

  Point mu = cfg.mu0.value_or(data.front());
  m.validate(mu);
  mu = m.maybe_recenter(mu);
  double t = clamp_t(cfg.t0);
  if (t != cfg.t0) est.warnings.push_back("initial t clamped to " + std::to_string(t));

  Adam adam_mu, adam_t;
  for (int k = 0; k < cfg.iters; ++k) {
    const ScoresAndDts grads = gradients_at(provider, data, mu, t, cfg.threads);
    const Vec cov = mean_of(grads.scores);
    const std::vector<double>& dts = grads.dts;
    double grad_t = 0.0;
    for (double v : dts) grad_t += v;
    grad_t /= static_cast<double>(dts.size());
    const MetricData md = m.metric_at(mu);
    const Vec grad_mu = md.g_inv * cov;
    const double norm_mu = std::sqrt(std::max(0.0, cov.dot(grad_mu)));

    est.trace.push_back(TraceEntry{mu, t, norm_mu, grad_t});
    if (!std::isfinite(norm_mu) || !std::isfinite(grad_t)) {
      est.mu = mu;
      est.t = t;
      est.iters_used = k;
      throw EstimationFailure("diffusion mean gradient became non-finite", est);
    }
    const bool t_pinned = (t <= t_lo && grad_t < 0.0) || (t >= t_hi && grad_t > 0.0);
    if (norm_mu < cfg.grad_tol && (std::abs(grad_t) < cfg.grad_tol || t_pinned)) {
      est.converged = true;
      break;
    }

    Vec step_mu;
    double step_t;
    if (method == OptimMethod::Adam) {
      step_mu = adam_mu.step(grad_mu, cfg.alpha);
      step_t = adam_t.step(Vec::Constant(1, grad_t), alpha_t)[0];
    } else {
      step_mu = cfg.alpha * grad_mu;
      step_t = alpha_t * grad_t;
    }
    Point next = m.exp(TangentVector{mu, step_mu});
    if (m.needs_recenter(next)) {
      next = m.recenter(next);
      if (adam_mu.m.size() > 0) adam_mu.m = m.rechart(TangentVector{mu, adam_mu.m}, next).components;
    }
    mu = std::move(next);
    const double t_next = clamp_t(t + step_t);
    if (t_next != t + step_t && est.warnings.size() < 8) {
      est.warnings.push_back("t clamped to " + std::to_string(t_next) + " at iteration " + std::to_string(k));
    }
    t = t_next;
    est.iters_used = k + 1;
  }
  est.mu = mu;
  est.t = t;
  return est;
}

TangentVector log_map_score(const ScoreProvider& provider, const Point& x, const Point& y, double t_small) {
  const Manifold& m = provider.manifold();
  const Vec s = provider.score(x, y, t_small);
  return TangentVector{y, t_small * m.metric_at(y).g_inv * s};
}

MeanEstimate frechet_mean(const ScoreProvider& provider, std::span<const Point> data, const FrechetConfig& cfg,
                          double t_small) {
  check_data(provider, data);
  provider.check_time(t_small);
  const Manifold& m = provider.manifold();
  const double alpha = cfg.alpha.value_or(m.id().family == Family::Sphere ? 0.01 : 0.1);
  if (!(alpha > 0.0) || cfg.iters < 1 || !(cfg.grad_tol > 0.0)) {
    throw ValidationError("optimizer settings must be positive");
  }

  MeanEstimate est;
  Point mu = m.maybe_recenter(cfg.mu0.value_or(data.front()));
  m.validate(mu);
  for (int k = 0; k < cfg.iters; ++k) {
    const Vec cov = mean_of(scores_at(provider, data, mu, t_small, cfg.threads));
    const Vec v = t_small * m.metric_at(mu).g_inv * cov;
    const double norm = m.norm(TangentVector{mu, v});
    est.trace.push_back(TraceEntry{mu, std::numeric_limits<double>::quiet_NaN(), norm, 0.0});
    if (!std::isfinite(norm)) {
      est.mu = mu;
      est.iters_used = k;
      throw EstimationFailure("Fréchet mean gradient became non-finite", est);
    }
    if (norm < cfg.grad_tol) {
      est.converged = true;
      break;
    }
    const Vec step = norm > alpha ? Vec(alpha / norm * v) : v;
    mu = m.maybe_recenter(m.exp(TangentVector{mu, step}));
    est.iters_used = k + 1;
  }
  est.mu = mu;
  return est;
}

namespace {

VaradhanDistance varadhan_from_dt(double dt, double t, int d) {
  const double radicand = 2.0 * t * t * dt + d * t;
  if (radicand < 0.0) return {0.0, true};
  return {std::sqrt(radicand), false};
}

}  // namespace

VaradhanDistance varadhan_distance(const ScoreProvider& provider, const Point& x, const Point& y, double t_small) {
  return varadhan_from_dt(provider.dt_log_p(x, y, t_small), t_small, provider.manifold().dim());
}

std::vector<VaradhanDistance> varadhan_distances(const ScoreProvider& provider, std::span<const Point> xs,
                                                 const Point& y, double t_small) {
  std::vector<double> dts = provider.dt_log_p_many(xs, y, t_small);
  std::vector<VaradhanDistance> out;
  out.reserve(dts.size());
  for (double dt : dts) out.push_back(varadhan_from_dt(dt, t_small, provider.manifold().dim()));
  return out;
}

std::optional<double> mean_log_likelihood(const ScoreProvider& provider, std::span<const Point> data,
                                          const Point& mu, double t) {
  double sum = 0.0;
  for (const Point& x : data) {
    std::optional<double> lp = provider.log_p(x, mu, t);
    if (!lp) return std::nullopt;
    sum += *lp;
  }
  return sum / static_cast<double>(data.size());
}

}  // namespace scoremean

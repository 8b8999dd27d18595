#include "scoremean/sampler.hpp"

#include <cmath>

#include "scoremean/error.hpp"
#include "scoremean/parallel.hpp"

namespace scoremean {

namespace {

void check_horizon(double T, int n_steps) {
  if (!(T > 0.0)) throw ValidationError("path horizon T must be positive");
  if (n_steps < 1) throw ValidationError("paths need at least one step");
}

BrownianPath start_path(const Manifold& m, const Point& x0, int n_steps) {
  m.validate(x0);
  BrownianPath path;
  path.start = x0;
  path.times.reserve(n_steps + 1);
  path.points.reserve(n_steps + 1);
  path.noises.reserve(n_steps);
  path.times.push_back(0.0);
  path.points.push_back(x0);
  return path;
}

}  // namespace

BrownianPath sample_path_tangent(const Manifold& m, const Point& x0, double T, int n_steps, Rng& rng) {
  check_horizon(T, n_steps);
  BrownianPath path = start_path(m, x0, n_steps);
  const double delta = T / n_steps;
  const double sq = std::sqrt(delta);
  Point cur = x0;
  for (int k = 1; k <= n_steps; ++k) {
    Vec v = rng.normal_vector(m.dim());
    MetricData md = m.metric_at(cur);
    cur = m.maybe_recenter(m.exp(TangentVector{cur, sq * (md.sqrt_g_inv * v)}));
    path.noises.push_back(std::move(v));
    path.points.push_back(cur);
    path.times.push_back(k * delta);
  }
  return path;
}

BrownianPath sample_path_coords(const Manifold& m, const Point& x0, double T, int n_steps, Rng& rng) {
  check_horizon(T, n_steps);
  BrownianPath path = start_path(m, x0, n_steps);
  const double delta = T / n_steps;
  const double sq = std::sqrt(delta);
  Point cur = x0;
  for (int k = 1; k <= n_steps; ++k) {
    Vec v = rng.normal_vector(m.dim());
    MetricData md = m.metric_at(cur);
    Vec drift = -0.5 * md.christoffel.contract(md.g_inv);
    cur.coords += delta * drift + sq * (md.sqrt_g_inv * v);
    if (!cur.coords.allFinite()) throw NumericalError("Brownian step produced non-finite coordinates");
    cur = m.maybe_recenter(cur);
    path.noises.push_back(std::move(v));
    path.points.push_back(cur);
    path.times.push_back(k * delta);
  }
  return path;
}

BrownianPath sample_path(SamplerKind kind, const Manifold& m, const Point& x0, double T,
                         int n_steps, Rng& rng) {
  return kind == SamplerKind::Tangent ? sample_path_tangent(m, x0, T, n_steps, rng)
                                      : sample_path_coords(m, x0, T, n_steps, rng);
}

std::vector<Point> sample_endpoints(const Manifold& m, const Point& x0, double T, int n_steps,
                                    int n_paths, std::uint64_t seed, SamplerKind kind, int threads) {
  if (n_paths < 1) throw ValidationError("need at least one path");
  std::vector<Point> out(n_paths);
  parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t i) {
    Rng rng = Rng::stream(seed, i);
    out[i] = sample_path(kind, m, x0, T, n_steps, rng).points.back();
  });
  return out;
}

PathDataset build_dataset(const Manifold& m, const Point& x0, const SamplingConfig& cfg,
                          std::uint64_t seed, int threads) {
  if (cfg.n_starts < 1 || cfg.paths_per_start < 1 || cfg.n_batches < 1)
    throw ValidationError("sampling configuration counts must be positive");
  check_horizon(cfg.T, cfg.n_steps);
  m.validate(x0);

  PathDataset data;
  data.manifold = m.id();
  data.seed = seed;
  data.records.reserve(static_cast<std::size_t>(cfg.n_batches) * cfg.n_starts *
                       cfg.paths_per_start * cfg.n_steps);

  const std::size_t paths_per_batch = static_cast<std::size_t>(cfg.n_starts) * cfg.paths_per_start;
  std::vector<Point> starts(cfg.n_starts, x0);
  std::vector<BrownianPath> paths(paths_per_batch);
  for (int b = 0; b < cfg.n_batches; ++b) {
    parallel_for(paths_per_batch, threads, [&](std::size_t i) {
      Rng rng = Rng::stream(seed, b * paths_per_batch + i);
      paths[i] = sample_path(cfg.kind, m, starts[i / cfg.paths_per_start], cfg.T, cfg.n_steps, rng);
    });
    for (const BrownianPath& path : paths) {
      for (int k = 1; k <= cfg.n_steps; ++k) {
        data.records.push_back(DatasetRecord{path.start, path.points[k], path.points[k - 1],
                                             path.times[k], cfg.T / cfg.n_steps});
      }
    }
    for (int j = 0; j < cfg.n_starts; ++j) starts[j] = paths[j * cfg.paths_per_start].points.back();
  }
  return data;
}

}  // namespace scoremean

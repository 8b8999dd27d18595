#pragma once

#include <cstdint>
#include <vector>

#include "scoremean/manifold.hpp"
#include "scoremean/rng.hpp"

namespace scoremean {

struct BrownianPath {
  Point start;
  std::vector<double> times;   // 0, δ, ..., T
  std::vector<Point> points;   // points[0] == start
  std::vector<Vec> noises;     // standard-normal draws, one per step
};

enum class SamplerKind { Tangent, Coords };

/// Geodesic random walk: W_k = Exp_{W_{k-1}}(√δ · S v_k) with S Sᵀ = g⁻¹.
BrownianPath sample_path_tangent(const Manifold& m, const Point& x0, double T, int n_steps, Rng& rng);

/// Euler-Maruyama in the chart: dx = -½ g^{jk}Γ^i_{jk} dt + S dW.
BrownianPath sample_path_coords(const Manifold& m, const Point& x0, double T, int n_steps, Rng& rng);

BrownianPath sample_path(SamplerKind kind, const Manifold& m, const Point& x0, double T,
                         int n_steps, Rng& rng);

/// Endpoints of `n_paths` independent paths from x0; path i uses stream (seed, i).
std::vector<Point> sample_endpoints(const Manifold& m, const Point& x0, double T, int n_steps,
                                    int n_paths, std::uint64_t seed,
                                    SamplerKind kind = SamplerKind::Coords, int threads = 1);

struct SamplingConfig {
  int n_starts = 1024;        // "number of x0" per batch
  int paths_per_start = 1;    // "samples per x0"
  int n_batches = 1;
  double T = 1.0;
  int n_steps = 100;
  SamplerKind kind = SamplerKind::Coords;
};

struct DatasetRecord {
  Point x0;
  Point y;
  Point prev;
  double t = 0.0;
  double dt = 0.0;
};

struct PathDataset {
  ManifoldId manifold;
  std::uint64_t seed = kDefaultSeed;
  std::vector<DatasetRecord> records;
};

/// Training corpus. The first batch starts every path at x0; each later batch
/// starts from the previous batch's endpoints. Records are ordered by
/// (batch, path, step) regardless of the thread count.
PathDataset build_dataset(const Manifold& m, const Point& x0, const SamplingConfig& cfg,
                          std::uint64_t seed, int threads = 1);

}  // namespace scoremean

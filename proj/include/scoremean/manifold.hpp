#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace scoremean {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Family { Euclidean, Sphere, Sym, SPD, Landmarks };

/// Manifold identifier. Textual form: "r<n>", "s<n>", "sym<n>", "spd<n>",
/// "lm<k>x<a>" (k landmarks in R^a).
struct ManifoldId {
  Family family = Family::Euclidean;
  int n = 1;
  int ambient = 0;  // landmarks only

  static ManifoldId parse(std::string_view text);
  std::string name() const;

  /// Intrinsic dimension d.
  int dim() const;
  /// Length of the ambient representative returned by Manifold::embed.
  int embedding_dim() const;
  /// Sphere charts carry an anchor (the chart center).
  bool anchored() const { return family == Family::Sphere; }

  friend bool operator==(const ManifoldId&, const ManifoldId&) = default;
};

/// Chart coordinates. `anchor` is empty for globally charted families and holds
/// the embedded chart center for spheres (stereographic projection from -anchor).
struct Point {
  Vec coords;
  Vec anchor;
};

/// Components in the chart of `base`.
struct TangentVector {
  Point base;
  Vec components;
};

/// Γ^k_{ij}, stored k-major.
class Christoffel {
 public:
  Christoffel() = default;
  explicit Christoffel(int d) : d_(d), data_(static_cast<std::size_t>(d) * d * d, 0.0) {}

  int dim() const { return d_; }
  double& operator()(int k, int i, int j) { return data_[index(k, i, j)]; }
  double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }
  const std::vector<double>& data() const { return data_; }

  /// g^{jk} Γ^i_{jk}, indexed by i.
  Vec contract(const Mat& g_inv) const;
  /// Γ^m_{mk} = ∂_k log sqrt|g|, indexed by k.
  Vec trace() const;
  /// Γ^k_{ij} v^i v^j, indexed by k.
  Vec quadratic(const Vec& v) const;

 private:
  std::size_t index(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * d_ + i) * d_ + j;
  }
  int d_ = 0;
  std::vector<double> data_;
};

struct MetricData {
  Mat g;
  Mat g_inv;
  Mat sqrt_g_inv;  // lower-triangular S with S Sᵀ = g_inv
  Christoffel christoffel;
  double log_det_g = 0.0;
};

/// Riemannian geometry for one manifold family. All members are const and
/// free of shared state, so a Manifold may be used from several threads.
class Manifold {
 public:
  /// Charts whose coordinates exceed this norm are re-centered by samplers
  /// and optimizers.
  static constexpr double kRecenterRadius = 1.0;
  static constexpr int kGeodesicSteps = 100;

  explicit Manifold(ManifoldId id);

  const ManifoldId& id() const { return id_; }
  int dim() const { return dim_; }

  void validate(const Point& x) const;

  /// Canonical starting point: origin, north pole, identity matrix, 10·I
  /// factor for SPD, evenly spaced landmarks on [-5, 5].
  Point origin() const;
  /// Sphere: point with the given embedded coordinates, charted at itself.
  Point point_from_embedded(const Vec& ambient) const;

  Mat metric_tensor(const Point& x) const;
  MetricData metric_at(const Point& x) const;
  /// Exact derivatives for closed-form metrics, central differences otherwise.
  Christoffel christoffel_at(const Point& x) const;
  Christoffel christoffel_fd(const Point& x, double rel_step = 1e-5) const;
  /// -½ g^{jk} Γ^i_{jk}: drift of Brownian motion in the chart.
  Vec brownian_drift(const Point& x) const;

  double inner(const Point& x, const Vec& a, const Vec& b) const;
  double norm(const TangentVector& v) const;

  Point exp(const TangentVector& v) const;
  /// RK4 on the geodesic equation in the chart of the base point. Records
  /// ⟨γ̇, γ̇⟩ after every step when `speeds` is non-null.
  Point integrate_geodesic(const TangentVector& v, int steps = kGeodesicSteps,
                           std::vector<double>* speeds = nullptr) const;
  TangentVector log(const Point& x, const Point& y) const;
  double distance(const Point& x, const Point& y) const;
  bool has_closed_form_log() const;

  bool needs_recenter(const Point& x) const;
  Point recenter(const Point& x) const;
  Point maybe_recenter(const Point& x) const {
    return needs_recenter(x) ? recenter(x) : x;
  }
  /// Same manifold point expressed in the chart centered at `anchor`.
  Point in_chart(const Point& x, const Vec& anchor) const;
  /// Same tangent vector expressed at `base`, which must be the same point as
  /// v.base in a (possibly) different chart.
  TangentVector rechart(const TangentVector& v, const Point& base) const;

  bool has_embedding() const;
  Vec embed(const Point& x) const;
  Mat embedding_jacobian(const Point& x) const;
  Vec pushforward(const TangentVector& v) const;
  /// Chart components of the orthogonal projection of an ambient vector.
  TangentVector project_to_tangent(const Point& x, const Vec& ambient) const;
  Vec project_ambient(const Point& x, const Vec& ambient) const;
  /// Chart covector of an ambient gradient: Jᵀ w.
  Vec pullback_covector(const Point& x, const Vec& ambient_gradient) const;

  double divergence(const std::function<Vec(const Point&)>& field, const Point& x,
                    double step = 1e-5) const;

 private:
  ManifoldId id_;
  int dim_;
};

namespace sphere_chart {
/// Orthonormal basis of anchor^⊥ (columns), deterministic in the anchor.
Mat frame(const Vec& anchor);
Vec embed(const Vec& u, const Vec& anchor);
Vec chart(const Vec& p, const Vec& anchor);
Mat jacobian(const Vec& u, const Vec& anchor);
Vec north(int n);
}  // namespace sphere_chart

}  // namespace scoremean

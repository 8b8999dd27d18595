#include "scoremean/manifold.hpp"

#include <charconv>
#include <cmath>
#include <numbers>

#include "scoremean/error.hpp"

namespace scoremean {

namespace {

// Forward-mode scalar for exact metric derivatives.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}
inline Dual operator*(double a, Dual b) { return {a * b.v, a * b.d}; }

template <class T>
T constant(double c) {
  if constexpr (std::is_same_v<T, Dual>) {
    return Dual{c, 0.0};
  } else {
    return c;
  }
}

// Lower-triangle, row-major coordinate layout shared by Sym(n) and SPD(n):
// (0,0), (1,0), (1,1), (2,0), ...
std::pair<int, int> tri_index(int k) {
  int row = 0;
  while ((row + 1) * (row + 2) / 2 <= k) ++row;
  return {row, k - row * (row + 1) / 2};
}

int tri_coord(int row, int col) { return row * (row + 1) / 2 + col; }

// Metric entries for the closed-form families (row-major d×d).
template <class T>
void closed_form_metric(const ManifoldId& id, const std::vector<T>& x, std::vector<T>& g) {
  const int d = static_cast<int>(x.size());
  g.assign(static_cast<std::size_t>(d) * d, constant<T>(0.0));
  switch (id.family) {
    case Family::Euclidean:
      for (int i = 0; i < d; ++i) g[i * d + i] = constant<T>(1.0);
      break;
    case Family::Sym:
      for (int k = 0; k < d; ++k) {
        auto [r, c] = tri_index(k);
        g[k * d + k] = constant<T>(r == c ? 1.0 : 2.0);
      }
      break;
    case Family::Sphere: {
      T s = constant<T>(1.0);
      for (const T& xi : x) s = s + xi * xi;
      T f = constant<T>(4.0) / (s * s);
      for (int i = 0; i < d; ++i) g[i * d + i] = f;
      break;
    }
    case Family::SPD: {
      // g_kl = <dF_k, dF_l>_F with F = L Lᵀ and dF_k = E_k Lᵀ + L E_kᵀ.
      const int n = id.n;
      std::vector<T> L(static_cast<std::size_t>(n) * n, constant<T>(0.0));
      for (int k = 0; k < d; ++k) {
        auto [r, c] = tri_index(k);
        L[r * n + c] = x[k];
      }
      std::vector<std::vector<T>> dF(d, std::vector<T>(static_cast<std::size_t>(n) * n,
                                                       constant<T>(0.0)));
      for (int k = 0; k < d; ++k) {
        auto [a, b] = tri_index(k);
        for (int j = 0; j < n; ++j) dF[k][a * n + j] = dF[k][a * n + j] + L[j * n + b];
        for (int i = 0; i < n; ++i) dF[k][i * n + a] = dF[k][i * n + a] + L[i * n + b];
      }
      for (int k = 0; k < d; ++k) {
        for (int l = k; l < d; ++l) {
          T acc = constant<T>(0.0);
          for (int e = 0; e < n * n; ++e) acc = acc + dF[k][e] * dF[l][e];
          g[k * d + l] = acc;
          g[l * d + k] = acc;
        }
      }
      break;
    }
    case Family::Landmarks:
      break;
  }
}

Mat landmark_kernel(const ManifoldId& id, const Vec& q) {
  const int k = id.n;
  const int a = id.ambient;
  Mat K = Mat::Zero(k * a, k * a);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double sq = (q.segment(i * a, a) - q.segment(j * a, a)).squaredNorm();
      double kij = std::exp(-0.5 * sq);
      for (int c = 0; c < a; ++c) K(i * a + c, j * a + c) = kij;
    }
  }
  return K;
}

Christoffel christoffel_from(const Mat& g_inv, const std::vector<Mat>& dg) {
  const int d = static_cast<int>(g_inv.rows());
  Christoffel gamma(d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      for (int k = 0; k < d; ++k) {
        double acc = 0.0;
        for (int l = 0; l < d; ++l) {
          acc += g_inv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
        }
        gamma(k, i, j) = 0.5 * acc;
        gamma(k, j, i) = 0.5 * acc;
      }
    }
  }
  return gamma;
}

Mat inverse_spd(const Mat& g) {
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success) throw DegenerateMetricError("metric is not positive definite");
  Mat inv = llt.solve(Mat::Identity(g.rows(), g.cols()));
  return 0.5 * (inv + inv.transpose());
}

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------

ManifoldId ManifoldId::parse(std::string_view text) {
  auto to_int = [&](std::string_view s) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || value < 1) {
      throw ValidationError("unknown manifold '" + std::string(text) + "'");
    }
    return value;
  };
  ManifoldId id;
  if (text.starts_with("sym")) {
    id.family = Family::Sym;
    id.n = to_int(text.substr(3));
  } else if (text.starts_with("spd")) {
    id.family = Family::SPD;
    id.n = to_int(text.substr(3));
  } else if (text.starts_with("lm")) {
    auto rest = text.substr(2);
    auto x = rest.find('x');
    if (x == std::string_view::npos) throw ValidationError("unknown manifold '" + std::string(text) + "'");
    id.family = Family::Landmarks;
    id.n = to_int(rest.substr(0, x));
    id.ambient = to_int(rest.substr(x + 1));
  } else if (text.starts_with("s")) {
    id.family = Family::Sphere;
    id.n = to_int(text.substr(1));
  } else if (text.starts_with("r")) {
    id.family = Family::Euclidean;
    id.n = to_int(text.substr(1));
  } else {
    throw ValidationError("unknown manifold '" + std::string(text) + "'");
  }
  return id;
}

std::string ManifoldId::name() const {
  switch (family) {
    case Family::Euclidean: return "r" + std::to_string(n);
    case Family::Sphere: return "s" + std::to_string(n);
    case Family::Sym: return "sym" + std::to_string(n);
    case Family::SPD: return "spd" + std::to_string(n);
    case Family::Landmarks: return "lm" + std::to_string(n) + "x" + std::to_string(ambient);
  }
  return {};
}

int ManifoldId::dim() const {
  switch (family) {
    case Family::Euclidean:
    case Family::Sphere: return n;
    case Family::Sym:
    case Family::SPD: return n * (n + 1) / 2;
    case Family::Landmarks: return n * ambient;
  }
  return 0;
}

int ManifoldId::embedding_dim() const {
  switch (family) {
    case Family::Sphere: return n + 1;
    case Family::Sym:
    case Family::SPD: return n * n;
    default: return dim();
  }
}

// ---------------------------------------------------------------------------

Vec Christoffel::contract(const Mat& g_inv) const {
  Vec out = Vec::Zero(d_);
  for (int i = 0; i < d_; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d_; ++j)
      for (int k = 0; k < d_; ++k) acc += g_inv(j, k) * (*this)(i, j, k);
    out[i] = acc;
  }
  return out;
}

Vec Christoffel::trace() const {
  Vec out = Vec::Zero(d_);
  for (int k = 0; k < d_; ++k)
    for (int m = 0; m < d_; ++m) out[k] += (*this)(m, m, k);
  return out;
}

Vec Christoffel::quadratic(const Vec& v) const {
  Vec out = Vec::Zero(d_);
  for (int k = 0; k < d_; ++k) {
    double acc = 0.0;
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) acc += (*this)(k, i, j) * v[i] * v[j];
    out[k] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace sphere_chart {

Vec north(int n) {
  Vec a = Vec::Zero(n + 1);
  a[n] = 1.0;
  return a;
}

Mat frame(const Vec& anchor) {
  // Householder reflection H with H e_last = anchor; its first n columns span
  // anchor^⊥. The north pole gets the standard basis.
  const Eigen::Index N = anchor.size();
  Vec v = -anchor;
  v[N - 1] += 1.0;
  Mat H = Mat::Identity(N, N);
  double vv = v.squaredNorm();
  if (vv > 1e-300) H -= (2.0 / vv) * v * v.transpose();
  return H.leftCols(N - 1);
}

Vec embed(const Vec& u, const Vec& anchor) {
  double r2 = u.squaredNorm();
  Vec p = (2.0 * (frame(anchor) * u) + (1.0 - r2) * anchor) / (1.0 + r2);
  return p / p.norm();
}

Vec chart(const Vec& p, const Vec& anchor) {
  double h = anchor.dot(p);
  if (1.0 + h <= 1e-300) throw DomainError("point is the projection pole of the chart");
  return frame(anchor).transpose() * p / (1.0 + h);
}

Mat jacobian(const Vec& u, const Vec& anchor) {
  const Mat E = frame(anchor);
  const double s = 1.0 + u.squaredNorm();
  const Vec p = (2.0 * (E * u) + (2.0 - s) * anchor) / s;
  Mat J(anchor.size(), u.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    J.col(k) = (2.0 * E.col(k) - 2.0 * u[k] * anchor) / s - (2.0 * u[k] / s) * p;
  }
  return J;
}

}  // namespace sphere_chart

// ---------------------------------------------------------------------------

Manifold::Manifold(ManifoldId id) : id_(id), dim_(id.dim()) {
  if (id_.n < 1 || dim_ < 1) throw ValidationError("manifold dimension must be positive");
  if (id_.family == Family::Landmarks && id_.ambient < 1)
    throw ValidationError("landmark ambient dimension must be positive");
}

void Manifold::validate(const Point& x) const {
  if (x.coords.size() != dim_) {
    throw ValidationError("point has " + std::to_string(x.coords.size()) +
                          " coordinates, manifold " + id_.name() + " needs " +
                          std::to_string(dim_));
  }
  if (!all_finite(x.coords)) throw ValidationError("point coordinates must be finite");
  if (id_.anchored()) {
    if (x.anchor.size() != id_.n + 1) throw ValidationError("sphere point needs an anchor of length n+1");
    if (std::abs(x.anchor.norm() - 1.0) > 1e-10) throw ValidationError("sphere anchor must be a unit vector");
  } else if (x.anchor.size() != 0) {
    throw ValidationError("anchor given for a globally charted manifold");
  }
}

Point Manifold::origin() const {
  Point x{Vec::Zero(dim_), Vec()};
  switch (id_.family) {
    case Family::Euclidean: break;
    case Family::Sphere: x.anchor = sphere_chart::north(id_.n); break;
    case Family::Sym:
      for (int i = 0; i < id_.n; ++i) x.coords[tri_coord(i, i)] = 1.0;
      break;
    case Family::SPD:
      for (int i = 0; i < id_.n; ++i) x.coords[tri_coord(i, i)] = 10.0;
      break;
    case Family::Landmarks:
      for (int i = 0; i < id_.n; ++i) {
        x.coords[i * id_.ambient] = id_.n == 1 ? 0.0 : -5.0 + 10.0 * i / (id_.n - 1);
      }
      break;
  }
  return x;
}

Point Manifold::point_from_embedded(const Vec& ambient) const {
  if (!id_.anchored()) throw UnsupportedOperation("point_from_embedded is only defined for spheres");
  Vec a = ambient / ambient.norm();
  return Point{Vec::Zero(dim_), a};
}

Mat Manifold::metric_tensor(const Point& x) const {
  if (id_.family == Family::Landmarks) {
    const int k = id_.n;
    const int a = id_.ambient;
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j)
        if ((x.coords.segment(i * a, a) - x.coords.segment(j * a, a)).norm() < 1e-12)
          throw DegenerateMetricError("coincident landmarks give a singular kernel matrix");
    Mat K = landmark_kernel(id_, x.coords);
    Eigen::LLT<Mat> llt(K);
    if (llt.info() != Eigen::Success) throw DegenerateMetricError("singular landmark kernel matrix");
    Mat g = llt.solve(Mat::Identity(dim_, dim_));
    return 0.5 * (g + g.transpose());
  }
  std::vector<double> xs(x.coords.data(), x.coords.data() + dim_);
  std::vector<double> g;
  closed_form_metric(id_, xs, g);
  return Eigen::Map<const Mat>(g.data(), dim_, dim_);
}

MetricData Manifold::metric_at(const Point& x) const {
  MetricData md;
  md.g = metric_tensor(x);
  Eigen::LLT<Mat> llt(md.g);
  if (llt.info() != Eigen::Success) throw DegenerateMetricError("metric is not positive definite");
  md.log_det_g = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  md.g_inv = llt.solve(Mat::Identity(dim_, dim_));
  md.g_inv = 0.5 * (md.g_inv + md.g_inv.transpose());
  Eigen::LLT<Mat> llt_inv(md.g_inv);
  if (llt_inv.info() != Eigen::Success) throw DegenerateMetricError("inverse metric is not positive definite");
  md.sqrt_g_inv = llt_inv.matrixL();
  md.christoffel = christoffel_at(x);
  return md;
}

Christoffel Manifold::christoffel_at(const Point& x) const {
  if (id_.family == Family::Landmarks) return christoffel_fd(x);
  if (id_.family == Family::Euclidean || id_.family == Family::Sym) return Christoffel(dim_);

  Mat g_inv = inverse_spd(metric_tensor(x));
  std::vector<Mat> dg(dim_);
  std::vector<Dual> xs(dim_);
  std::vector<Dual> g;
  for (int m = 0; m < dim_; ++m) {
    for (int i = 0; i < dim_; ++i) xs[i] = Dual{x.coords[i], i == m ? 1.0 : 0.0};
    closed_form_metric(id_, xs, g);
    dg[m].resize(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) dg[m](i, j) = g[i * dim_ + j].d;
  }
  return christoffel_from(g_inv, dg);
}

Christoffel Manifold::christoffel_fd(const Point& x, double rel_step) const {
  Mat g_inv = inverse_spd(metric_tensor(x));
  std::vector<Mat> dg(dim_);
  for (int m = 0; m < dim_; ++m) {
    double h = rel_step * std::max(1.0, std::abs(x.coords[m]));
    Point plus = x;
    Point minus = x;
    plus.coords[m] += h;
    minus.coords[m] -= h;
    dg[m] = (metric_tensor(plus) - metric_tensor(minus)) / (2.0 * h);
    if (!dg[m].allFinite()) throw NumericalError("non-finite metric derivative");
  }
  return christoffel_from(g_inv, dg);
}

Vec Manifold::brownian_drift(const Point& x) const {
  if (id_.family == Family::Euclidean || id_.family == Family::Sym) return Vec::Zero(dim_);
  Mat g_inv = inverse_spd(metric_tensor(x));
  return -0.5 * christoffel_at(x).contract(g_inv);
}

double Manifold::inner(const Point& x, const Vec& a, const Vec& b) const {
  return a.dot(metric_tensor(x) * b);
}

double Manifold::norm(const TangentVector& v) const {
  return std::sqrt(std::max(0.0, inner(v.base, v.components, v.components)));
}

// ---------------------------------------------------------------------------

bool Manifold::has_closed_form_log() const {
  return id_.family == Family::Euclidean || id_.family == Family::Sphere ||
         id_.family == Family::Sym;
}

Point Manifold::exp(const TangentVector& v) const {
  validate(v.base);
  if (v.components.size() != dim_ || !all_finite(v.components))
    throw ValidationError("tangent vector must have d finite components");
  switch (id_.family) {
    case Family::Euclidean:
    case Family::Sym:
      return Point{v.base.coords + v.components, Vec()};
    case Family::Sphere: {
      const Vec& a = v.base.anchor;
      Vec p = sphere_chart::embed(v.base.coords, a);
      Vec w = sphere_chart::jacobian(v.base.coords, a) * v.components;
      w -= w.dot(p) * p;
      double theta = w.norm();
      Vec q = theta < 1e-300 ? p : Vec(std::cos(theta) * p + (std::sin(theta) / theta) * w);
      q /= q.norm();
      if (1.0 + a.dot(q) < 1e-8) return point_from_embedded(q);
      return maybe_recenter(Point{sphere_chart::chart(q, a), a});
    }
    default:
      return integrate_geodesic(v);
  }
}

Point Manifold::integrate_geodesic(const TangentVector& v, int steps,
                                   std::vector<double>* speeds) const {
  validate(v.base);
  if (steps < 1) throw ValidationError("geodesic integration needs at least one step");
  const double h = 1.0 / steps;
  Point cur = v.base;
  Vec vel = v.components;
  auto accel = [&](const Vec& xc, const Vec& vc) {
    Point p{xc, v.base.anchor};
    return Vec(-christoffel_at(p).quadratic(vc));
  };
  for (int s = 0; s < steps; ++s) {
    const Vec& x0 = cur.coords;
    Vec k1x = vel;
    Vec k1v = accel(x0, vel);
    Vec k2x = vel + 0.5 * h * k1v;
    Vec k2v = accel(x0 + 0.5 * h * k1x, k2x);
    Vec k3x = vel + 0.5 * h * k2v;
    Vec k3v = accel(x0 + 0.5 * h * k2x, k3x);
    Vec k4x = vel + h * k3v;
    Vec k4v = accel(x0 + h * k3x, k4x);
    cur.coords = x0 + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    vel = vel + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (!all_finite(cur.coords) || !all_finite(vel))
      throw IntegrationError("geodesic integration produced non-finite coordinates");
    if (speeds) speeds->push_back(inner(cur, vel, vel));
  }
  return cur;
}

TangentVector Manifold::log(const Point& x, const Point& y) const {
  validate(x);
  validate(y);
  switch (id_.family) {
    case Family::Euclidean:
    case Family::Sym:
      return TangentVector{x, y.coords - x.coords};
    case Family::Sphere: {
      Vec p = embed(x);
      Vec q = embed(y);
      double c = p.dot(q);
      if (c <= -1.0 + 1e-12) throw CutLocusError("log map undefined at the antipode");
      Vec w = q - c * p;
      double nw = w.norm();
      Vec amb = Vec::Zero(p.size());
      if (nw > 0.0) amb = (std::atan2(nw, c) / nw) * w;
      return project_to_tangent(x, amb);
    }
    default:
      throw UnsupportedOperation("no closed-form logarithmic map for " + id_.name() +
                                 "; use the score-based estimator");
  }
}

double Manifold::distance(const Point& x, const Point& y) const {
  return norm(log(x, y));
}

// ---------------------------------------------------------------------------

bool Manifold::needs_recenter(const Point& x) const {
  return id_.anchored() && x.coords.norm() > kRecenterRadius;
}

Point Manifold::recenter(const Point& x) const {
  if (!id_.anchored()) return x;
  return point_from_embedded(embed(x));
}

Point Manifold::in_chart(const Point& x, const Vec& anchor) const {
  if (!id_.anchored()) return x;
  return Point{sphere_chart::chart(embed(x), anchor), anchor};
}

TangentVector Manifold::rechart(const TangentVector& v, const Point& base) const {
  if (!id_.anchored()) return TangentVector{base, v.components};
  return project_to_tangent(base, pushforward(v));
}

bool Manifold::has_embedding() const {
  return id_.family != Family::Landmarks;
}

Vec Manifold::embed(const Point& x) const {
  switch (id_.family) {
    case Family::Sphere:
      return sphere_chart::embed(x.coords, x.anchor);
    case Family::Sym: {
      const int n = id_.n;
      Vec m(n * n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c <= r; ++c) {
          m[r * n + c] = x.coords[tri_coord(r, c)];
          m[c * n + r] = x.coords[tri_coord(r, c)];
        }
      return m;
    }
    case Family::SPD: {
      const int n = id_.n;
      Mat L = Mat::Zero(n, n);
      for (int k = 0; k < dim_; ++k) {
        auto [r, c] = tri_index(k);
        L(r, c) = x.coords[k];
      }
      Mat F = L * L.transpose();
      Vec m(n * n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) m[r * n + c] = F(r, c);
      return m;
    }
    default:
      return x.coords;
  }
}

Mat Manifold::embedding_jacobian(const Point& x) const {
  switch (id_.family) {
    case Family::Sphere:
      return sphere_chart::jacobian(x.coords, x.anchor);
    case Family::Sym: {
      const int n = id_.n;
      Mat J = Mat::Zero(n * n, dim_);
      for (int k = 0; k < dim_; ++k) {
        auto [r, c] = tri_index(k);
        J(r * n + c, k) = 1.0;
        J(c * n + r, k) = 1.0;
      }
      return J;
    }
    case Family::SPD: {
      const int n = id_.n;
      Mat L = Mat::Zero(n, n);
      for (int k = 0; k < dim_; ++k) {
        auto [r, c] = tri_index(k);
        L(r, c) = x.coords[k];
      }
      Mat J = Mat::Zero(n * n, dim_);
      for (int k = 0; k < dim_; ++k) {
        auto [a, b] = tri_index(k);
        for (int j = 0; j < n; ++j) J(a * n + j, k) += L(j, b);
        for (int i = 0; i < n; ++i) J(i * n + a, k) += L(i, b);
      }
      return J;
    }
    default:
      return Mat::Identity(dim_, dim_);
  }
}

Vec Manifold::pushforward(const TangentVector& v) const {
  return embedding_jacobian(v.base) * v.components;
}

TangentVector Manifold::project_to_tangent(const Point& x, const Vec& ambient) const {
  if (ambient.size() != id_.embedding_dim())
    throw ValidationError("ambient vector has the wrong length for " + id_.name());
  Mat J = embedding_jacobian(x);
  Mat g = J.transpose() * J;
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success) throw DegenerateMetricError("embedding Jacobian is rank deficient");
  return TangentVector{x, llt.solve(J.transpose() * ambient)};
}

Vec Manifold::project_ambient(const Point& x, const Vec& ambient) const {
  return pushforward(project_to_tangent(x, ambient));
}

Vec Manifold::pullback_covector(const Point& x, const Vec& ambient_gradient) const {
  return embedding_jacobian(x).transpose() * ambient_gradient;
}

double Manifold::divergence(const std::function<Vec(const Point&)>& field, const Point& x,
                            double step) const {
  validate(x);
  double partials = 0.0;
  for (int m = 0; m < dim_; ++m) {
    double h = step * std::max(1.0, std::abs(x.coords[m]));
    Point plus = x;
    Point minus = x;
    plus.coords[m] += h;
    minus.coords[m] -= h;
    partials += (field(plus)[m] - field(minus)[m]) / (2.0 * h);
  }
  double value = partials + field(x).dot(christoffel_at(x).trace());
  if (!std::isfinite(value)) throw NumericalError("non-finite divergence");
  return value;
}

}  // namespace scoremean

#include "scoremean/time_derivative.hpp"

#include "scoremean/error.hpp"

namespace scoremean {

Mat score_jacobian_fd(const ScoreProvider& provider, const Point& x, const Point& y, double t, double h) {
  const int d = provider.manifold().dim();
  Mat J(d, d);
  for (int l = 0; l < d; ++l) {
    Point plus = y;
    Point minus = y;
    plus.coords[l] += h;
    minus.coords[l] -= h;
    J.col(l) = (provider.score(x, plus, t) - provider.score(x, minus, t)) / (2.0 * h);
  }
  if (!J.allFinite()) throw NumericalError("score Jacobian is not finite");
  return J;
}

double heat_equation_rhs(const MetricData& md, const Vec& s, const Mat& J) {
  const double laplacian = (md.g_inv.cwiseProduct(J)).sum() - md.christoffel.contract(md.g_inv).dot(s);
  return 0.5 * (laplacian + s.dot(md.g_inv * s));
}

double dt_log_p_from_score(const ScoreProvider& provider, const Point& x, const Point& y, double t,
                           JacobianMode mode) {
  provider.check_time(t);
  const Manifold& m = provider.manifold();
  MetricData md = m.metric_at(y);
  Vec s = provider.score(x, y, t);
  Mat J;
  if (mode != JacobianMode::FiniteDifference) {
    if (auto exact = provider.score_jacobian(x, y, t)) {
      J = std::move(*exact);
    } else if (mode == JacobianMode::Exact) {
      throw UnsupportedOperation("this provider has no exact score Jacobian");
    }
  }
  if (J.size() == 0) J = score_jacobian_fd(provider, x, y, t);
  return heat_equation_rhs(md, s, J);
}

}  // namespace scoremean

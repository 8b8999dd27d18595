#pragma once

#include "scoremean/score_provider.hpp"

namespace scoremean {

enum class JacobianMode { Auto, Exact, FiniteDifference };

inline constexpr double kScoreJacobianStep = 1e-4;

/// Chart Jacobian J_kl = ∂ s_k / ∂ y^l of the score covector by central
/// differences in the chart of y.
Mat score_jacobian_fd(const ScoreProvider& provider, const Point& x, const Point& y, double t,
                      double h = kScoreJacobianStep);

/// ½(Δ_y log p + ‖∇_y log p‖²_g) from the covector s, its chart Jacobian J and
/// the metric at y:  ½(tr(g⁻¹J) - g^{jk}Γ^l_{jk} s_l + sᵀ g⁻¹ s).
double heat_equation_rhs(const MetricData& md, const Vec& s, const Mat& J);

/// ∂_t log p_t(x, y) from the score alone. Auto uses the provider's exact
/// Jacobian when it has one.
double dt_log_p_from_score(const ScoreProvider& provider, const Point& x, const Point& y, double t,
                           JacobianMode mode = JacobianMode::Auto);

}  // namespace scoremean

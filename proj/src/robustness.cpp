#include "sdelab/robustness.hpp"

#include <cmath>
#include <limits>

#include "sdelab/errors.hpp"

namespace sdelab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_positive(double M, double alpha) {
  if (!(M > 0.0) || !(alpha > 0.0)) throw ArgumentError("M and alpha must be positive");
}

void require_nonnegative(std::initializer_list<double> xs) {
  for (double x : xs)
    if (!(x >= 0.0)) throw ArgumentError("perturbation sizes and eps must be nonnegative");
}

double alpha_tilde_of(double M, double alpha, double mt) { return alpha / 2.0 - 10.0 * M * mt / alpha; }

bool dichotomy_gate(double M, double alpha, double eps, double mt) {
  return mt < alpha * alpha / (20.0 * M) && eps < alpha;
}

}  // namespace

double m_tilde(double b, double g, double h, double alpha) {
  require_nonnegative({b, g, h});
  if (!(alpha > 0.0)) throw ArgumentError("alpha must be positive");
  return 8.0 * b * b + 8.0 * g * g * h * h + alpha * h * h;
}

RobustnessReport check_contraction_condition(double M, double alpha, double eps, double b, double g, double h) {
  require_positive(M, alpha);
  require_nonnegative({eps});
  RobustnessReport r;
  r.which = RobustnessCase::Contraction;
  r.m_tilde = m_tilde(b, g, h, alpha);
  r.threshold = alpha * alpha / (6.0 * M);
  r.compared = r.m_tilde;
  r.smallness_ok = r.m_tilde < r.threshold;
  r.condition_ok = r.smallness_ok;
  r.predicted = {3.0 * M, alpha / 2.0 - 3.0 * M * r.m_tilde / alpha, eps, DichotomyKind::Contraction};
  r.alpha_tilde = r.predicted.alpha;
  r.theta = std::sqrt(3.0 * M * r.m_tilde / (alpha * alpha));
  r.proj_distance_coeff = {kInf, false};
  r.sol_distance_coeff = {kInf, false};
  r.inconsistent = r.condition_ok && !(r.predicted.alpha > 0.0);
  r.note = "exponent reported as a decay rate alpha/2 - 3 M Mt / alpha";
  return r;
}

RobustnessReport check_drift_only(double M, double alpha, double eps, double b) {
  require_positive(M, alpha);
  require_nonnegative({eps, b});
  RobustnessReport r;
  r.which = RobustnessCase::DriftOnly;
  r.m_tilde = m_tilde(b, 0.0, 0.0, alpha);
  r.threshold = alpha / (2.0 * std::sqrt(2.0 * M));
  r.compared = b;
  r.smallness_ok = b < r.threshold;
  r.condition_ok = r.smallness_ok;
  r.predicted = {2.0 * M, alpha / 2.0 - 4.0 * M * b * b / alpha, eps, DichotomyKind::Contraction};
  r.alpha_tilde = r.predicted.alpha;
  r.theta = std::sqrt(8.0 * M) * b / alpha;
  r.proj_distance_coeff = {kInf, false};
  r.sol_distance_coeff = {kInf, false};
  r.inconsistent = r.condition_ok && !(r.predicted.alpha > 0.0);
  r.note = "exponent reported as a decay rate alpha/2 - 4 M b^2 / alpha";
  return r;
}

RobustnessReport check_dichotomy_condition(double M, double alpha, double eps, double b, double g, double h) {
  require_positive(M, alpha);
  require_nonnegative({eps});
  RobustnessReport r;
  r.which = RobustnessCase::Dichotomy;
  r.m_tilde = m_tilde(b, g, h, alpha);
  r.threshold = alpha * alpha / (20.0 * M);
  r.compared = r.m_tilde;
  r.smallness_ok = r.m_tilde < r.threshold;
  r.hypothesis_ok = eps < alpha;
  r.condition_ok = r.smallness_ok && r.hypothesis_ok;
  r.alpha_tilde = alpha_tilde_of(M, alpha, r.m_tilde);
  r.predicted = {40.0 * M, r.alpha_tilde, 2.0 * eps, DichotomyKind::Dichotomy};
  r.theta = std::sqrt(10.0 * M * r.m_tilde / (alpha * alpha));
  r.proj_distance_coeff = projection_distance_bound(M, alpha, eps, b, g, h, 0.0);
  r.sol_distance_coeff = solution_distance_bound(M, alpha, eps, b, g, h, 0.0, 0.0, Direction::Stable);
  r.inconsistent = r.condition_ok && !(r.predicted.alpha > 0.0);
  return r;
}

Bound projection_distance_bound(double M, double alpha, double eps, double b, double g, double h, double t) {
  require_positive(M, alpha);
  require_nonnegative({eps});
  const double mt = m_tilde(b, g, h, alpha);
  const double denom = alpha * (alpha + alpha_tilde_of(M, alpha, mt) - eps);
  if (!dichotomy_gate(M, alpha, eps, mt) || !(denom > 0.0)) return {kInf, false};
  return {320.0 * M * M * M * mt / denom * std::exp(eps * std::abs(t)), true};
}

Bound solution_distance_bound(double M, double alpha, double eps, double b, double g, double h, double t, double s,
                              Direction dir) {
  require_positive(M, alpha);
  require_nonnegative({eps});
  const double gap = dir == Direction::Stable ? t - s : s - t;
  if (gap < 0.0) throw ArgumentError("solution distance bound: gap is negative for the requested direction");
  const double mt = m_tilde(b, g, h, alpha);
  const double a_hat = alpha_tilde_of(M, alpha, mt);
  if (!(alpha > a_hat)) return {kInf, false};
  return {720.0 * M * mt / (alpha - a_hat) * std::exp(-a_hat * gap + 2.0 * eps * std::abs(s)), true};
}

Bound s_invertibility_bound(double M, double alpha, double eps, double b, double g, double h) {
  require_positive(M, alpha);
  require_nonnegative({eps});
  const double mt = m_tilde(b, g, h, alpha);
  const double at = alpha_tilde_of(M, alpha, mt);
  const double denom = alpha * (alpha + at - eps);
  if (!dichotomy_gate(M, alpha, eps, mt) || !(denom > 0.0)) return {kInf, false};
  return {20.0 * M * M * mt / denom, true};
}

const char* to_string(RobustnessCase c) noexcept {
  switch (c) {
    case RobustnessCase::Contraction: return "contraction";
    case RobustnessCase::DriftOnly: return "drift-only";
    case RobustnessCase::Dichotomy: return "dichotomy";
  }
  return "?";
}

}  // namespace sdelab

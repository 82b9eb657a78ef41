#pragma once

#include <string>

#include "sdelab/dichotomy.hpp"

namespace sdelab {

/// A bound that may be unavailable (denominator not positive or condition
/// failed); value is +inf in that case.
struct Bound {
  double value = 0.0;
  bool available = true;
};

enum class RobustnessCase { Contraction, DriftOnly, Dichotomy };

struct RobustnessReport {
  RobustnessCase which = RobustnessCase::Dichotomy;
  double m_tilde = 0.0;
  double threshold = 0.0;
  double compared = 0.0;          // quantity tested against threshold (m_tilde, or b in the drift-only case)
  bool smallness_ok = false;      // compared < threshold
  bool hypothesis_ok = true;      // eps < alpha (dichotomy case only)
  bool condition_ok = false;      // smallness_ok && hypothesis_ok
  DichotomyParams predicted;
  double alpha_tilde = 0.0;
  double theta = 0.0;
  Bound proj_distance_coeff;      // projection distance bound at t = 0
  Bound sol_distance_coeff;       // solution distance bound at gap 0, s = 0
  bool inconsistent = false;      // condition holds but predicted alpha <= 0
  std::string note;
};

/// 8 b^2 + 8 g^2 h^2 + alpha h^2. Throws ArgumentError on negative input or alpha <= 0.
double m_tilde(double b, double g, double h, double alpha);

/// P = Id case: threshold alpha^2/(6M), predicted (3M, alpha/2 - 3 M Mt / alpha, eps).
RobustnessReport check_contraction_condition(double M, double alpha, double eps, double b, double g, double h);

/// H = 0 case: b < alpha/(2 sqrt(2M)), predicted (2M, alpha/2 - 4 M b^2 / alpha, eps).
RobustnessReport check_drift_only(double M, double alpha, double eps, double b);

/// threshold alpha^2/(20M) and eps < alpha; predicted (40M, alpha/2 - 10 M Mt / alpha, 2 eps).
RobustnessReport check_dichotomy_condition(double M, double alpha, double eps, double b, double g, double h);

/// 320 M^3 Mt / (alpha (alpha + alpha_tilde - eps)) e^{eps |t|}.
Bound projection_distance_bound(double M, double alpha, double eps, double b, double g, double h, double t);

/// 720 M Mt / (alpha - alpha_hat) e^{-alpha_hat gap + 2 eps |s|}. ArgumentError if the gap is negative.
Bound solution_distance_bound(double M, double alpha, double eps, double b, double g, double h, double t, double s,
                              Direction dir);

/// 20 M^2 Mt / (alpha (alpha + alpha_tilde - eps)).
Bound s_invertibility_bound(double M, double alpha, double eps, double b, double g, double h);

const char* to_string(RobustnessCase c) noexcept;

}  // namespace sdelab

#pragma once

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "sdelab/linalg.hpp"
#include "sdelab/sde_engine.hpp"

namespace sdelab {

enum class Direction { Stable, Unstable };
enum class DichotomyKind { Dichotomy, Contraction };

/// Envelope M e^{-alpha * gap + eps |s|}.
struct DichotomyParams {
  double M = 1.0;
  double alpha = 1.0;
  double eps = 0.0;
  DichotomyKind kind = DichotomyKind::Dichotomy;

  /// Throws ArgumentError unless M > 0, alpha > 0, eps >= 0.
  void validate() const;
  double envelope(double t, double s, Direction dir) const;
};

/// Projections P(t) = T P(t0) T^-1 with T = Phi(t, t0) taken from an ensemble.
/// The base is either shared by all paths or given per path (the perturbed
/// constructions produce a random base).
struct ProjectionFamily {
  double t0 = 0.0;
  Matrix base_projection;  // shared base, or the mean of path bases for display
  std::size_t rank = 0;
  std::vector<Matrix> path_bases;  // empty for a shared base
  std::vector<char> path_valid;

  /// Validates idempotence (1e-9) and records the numerical rank.
  static ProjectionFamily shared(const Matrix& p0, double t0);

  bool per_path() const noexcept { return !path_bases.empty(); }
  std::size_t dim() const noexcept { return base_projection.rows(); }
  /// nullptr when the path's base is invalid.
  const Matrix* base(std::size_t path) const;
};

PathMatrices projection_at(const ProjectionFamily& fam, const TransitionEnsemble& ens, double t);

/// P(t) Phi(t,s) for t >= s and -(Id - P(t)) Phi(t,s) for t < s.
PathMatrices green_function(const ProjectionFamily& fam, const TransitionEnsemble& ens, double t, double s);

/// E||Phi(t,s) P(s)||^2 (Stable, t >= s) or E||Phi(t,s) Q(s)||^2 (Unstable, t <= s)
/// with the family's per-path projections.
MsNormCurve projected_curve(const ProjectionFamily& fam, const TransitionEnsemble& ens,
                            const std::vector<std::pair<double, double>>& pairs, Direction dir);

/// All node pairs with t >= s (Stable) or t <= s (Unstable).
std::vector<std::pair<double, double>> node_pairs(const SimGrid& grid, Direction dir);

struct Violation {
  double t = 0.0;
  double s = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double envelope = 0.0;
  double slack = 0.0;
  Direction direction = Direction::Stable;
};

struct ViolationReport {
  std::vector<Violation> checked;     // every available pair
  std::vector<Violation> violations;  // slack < 0
  double min_slack = std::numeric_limits<double>::infinity();
  double buffer = 3.0;

  bool ok() const noexcept { return violations.empty(); }
};

/// slack = envelope - (estimate - buffer * stderr); negative slack is a violation.
ViolationReport verify_dichotomy(const MsNormCurve& stable, const MsNormCurve& unstable,
                                 const DichotomyParams& params, double buffer = 3.0);

/// Lexicographic LP fit on log data: minimise log M, then maximise alpha, then
/// minimise eps, subject to log estimate <= log M - alpha * gap + eps |s|.
/// Zero and unavailable estimates impose no constraint.
DichotomyParams fit_envelope(const MsNormCurve& curve, Direction dir);

/// Smallest M making M e^{-alpha gap + eps |s|} dominate the curve, for fixed alpha, eps.
/// Throws FitError on +inf data and UnderdeterminedError when no pair carries data.
double fit_constant(const MsNormCurve& curve, Direction dir, double alpha, double eps);

}  // namespace sdelab

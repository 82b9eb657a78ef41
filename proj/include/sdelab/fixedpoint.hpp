#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <utility>
#include <vector>

#include "sdelab/coefficients.hpp"
#include "sdelab/dichotomy.hpp"
#include "sdelab/robustness.hpp"
#include "sdelab/sde_engine.hpp"

namespace sdelab {

enum class FieldKind { Contraction, URight, VLeft, UGreen, VGreen };

const char* to_string(FieldKind k) noexcept;

struct PicardOptions {
  std::size_t max_iter = 50;
  double tol = 1e-4;
  /// U: upper truncation time (>= grid.t_max). V: lower truncation time
  /// (<= grid.s). Green: upper time; the lower one mirrors it around the grid.
  double t_trunc = std::numeric_limits<double>::quiet_NaN();
  /// Base times s; each must be an output node. Empty selects
  /// {t0, t0+1, t0+2} (U) or {t0, t0-1, t0-2} (V), restricted to the nodes.
  std::vector<double> bases;
  std::size_t threads = 0;
};

struct ConvergenceEntry {
  std::size_t iterate = 0;
  double diff_norm = 0.0;      // weighted norm of U_k - U_{k-1}
  double ratio = 0.0;          // diff_norm(k) / diff_norm(k-1), NaN when undefined
  double weighted_norm = 0.0;  // weighted norm of U_k
};

/// Converged (or last) Picard iterate on output nodes x base times, per path.
struct KernelField {
  FieldKind which = FieldKind::URight;
  SimGrid grid;  // output nodes
  std::vector<double> bases;
  std::size_t dim = 0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  double t0 = 0.0;  // anchor of the projection family
  std::vector<double> values;  // [path][base][node][n*n]; NaN where undefined
  std::vector<char> path_valid;
  std::size_t n_degenerate = 0;
  std::size_t iterate_index = 0;
  double weighted_norm = 0.0;
  bool converged = false;
  bool divergent = false;
  double tol = 0.0;
  double tail_bound = 0.0;
  double t_lower = 0.0;  // integration lattice actually used
  double t_upper = 0.0;
  std::vector<ConvergenceEntry> log;  // iterates 0..iterate_index

  /// U kinds are defined for node >= base, V kinds for node <= base.
  bool defined(std::size_t base, std::size_t node) const;
  std::size_t base_index(double s) const;
  Matrix value(std::size_t path, std::size_t base, std::size_t node) const;
  const double* ptr(std::size_t path, std::size_t base, std::size_t node) const {
    return values.data() + ((path * bases.size() + base) * grid.nodes.size() + node) * dim * dim;
  }
};

/// P = Id integral equation for the perturbed fundamental matrix.
/// Throws ConditionError when the contraction condition fails.
KernelField picard_solve_contraction(const CoefficientSpec& spec, const DichotomyParams& params,
                                     const SimGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                     const PicardOptions& opts);

/// Decaying solution U(t, s), t >= s, of the half-line equation with the
/// improper integral truncated at opts.t_trunc. Throws ConditionError when the
/// dichotomy condition fails and TruncationError when the tail bound exceeds tol/2.
KernelField picard_solve_U(const CoefficientSpec& spec, const DichotomyParams& params, const ProjectionFamily& fam,
                           const SimGrid& grid, std::size_t n_paths, std::uint64_t seed, const PicardOptions& opts);

/// Growing complement V(t, s), t <= s, on the left half line.
KernelField picard_solve_V(const CoefficientSpec& spec, const DichotomyParams& params, const ProjectionFamily& fam,
                           const SimGrid& grid, std::size_t n_paths, std::uint64_t seed, const PicardOptions& opts);

/// Whole-line U and V with Green-function kernels, from one shared simulation.
/// opts.bases applies to U; V uses its defaults unless v_bases is given.
std::pair<KernelField, KernelField> picard_solve_green(const CoefficientSpec& spec, const DichotomyParams& params,
                                                       const ProjectionFamily& fam, const SimGrid& grid,
                                                       std::size_t n_paths, std::uint64_t seed,
                                                       const PicardOptions& opts,
                                                       const std::vector<double>& v_bases = {});

/// P_hat(t0) := U(t0, t0) per path; conjugated by the perturbed ensemble.
/// Throws ConstructionError if E||P^2 - P||^2 > 1e-4.
ProjectionFamily build_projection_right(const KernelField& U, const TransitionEnsemble& ens_perturbed);

/// Q_hat(t0) := V(t0, t0); the returned family holds P_hat = Id - Q_hat.
ProjectionFamily build_projection_left(const KernelField& V, const TransitionEnsemble& ens_perturbed);

struct GluedProjections {
  double t0 = 0.0;
  std::vector<Matrix> S;
  std::vector<Matrix> S_inverse;  // empty where singular
  std::vector<Matrix> P_tilde_base;
  std::vector<char> valid;
  std::size_t n_singular = 0;
  double ms_distance_to_Id = 0.0;
  double ms_distance_stderr = 0.0;
  double s1t1_max_error = 0.0;  // max over paths of max |S1 T1 - Id|
  double s2t2_max_error = 0.0;
  double idempotence_ms = 0.0;  // E||P~^2 - P~||^2
  double consistency_ms = 0.0;  // E||P~ P_hat+ - P_hat+||^2
  Bound bound;                  // s_invertibility_bound, when supplied
  bool within_bound = true;     // ms distance <= bound + 3 stderr
};

/// right: family of P_hat+ (t0); left: family of P_hat- = Id - Q_hat-(t0).
/// Throws GluingError if S is singular (cond > 1e12) on more than 1% of paths.
GluedProjections glue_projections(const ProjectionFamily& right, const ProjectionFamily& left,
                                  const ProjectionFamily& fam_unperturbed, const TransitionEnsemble& ens_perturbed,
                                  const Bound& bound = {std::numeric_limits<double>::infinity(), false});

/// Family with per-path base S P(t0) S^-1.
ProjectionFamily glued_family(const GluedProjections& g);

/// Mean and standard error of ||P_path - p||^2 over the family's valid paths.
std::pair<double, double> ms_distance(const ProjectionFamily& fam, const Matrix& p);

void write_field_csv(std::ostream& os, const KernelField& f);
void write_convergence_csv(std::ostream& os, const KernelField& f);

}  // namespace sdelab

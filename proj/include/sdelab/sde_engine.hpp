#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "sdelab/coefficients.hpp"
#include "sdelab/linalg.hpp"

namespace sdelab {

/// Integration lattice {s + k dt} with a sorted set of output nodes on it.
struct SimGrid {
  double s = 0.0;
  double t_max = 0.0;
  double dt = 1e-3;
  std::vector<double> nodes;

  /// Throws ArgumentError on an empty node list, dt <= 0, nodes off the
  /// lattice (tolerance 1e-9 dt), unsorted nodes or nodes outside [s, t_max].
  void validate() const;

  /// Number of whole steps that fit in [s, t_max].
  std::size_t steps() const;
  std::size_t node_step(std::size_t node) const;
  std::optional<std::size_t> node_index(double t) const;
  std::size_t node_index_or_throw(double t) const;
  double time_at_step(std::size_t k) const { return s + static_cast<double>(k) * dt; }

  /// Nodes s, s + spacing, ... up to t_max (spacing a multiple of dt).
  static SimGrid uniform(double s, double t_max, double dt, double spacing);
};

enum class System { Unperturbed, Perturbed };

/// Realisations of Phi(node, s) per path. Storage is [path][node][n*n], row-major.
struct TransitionEnsemble {
  SimGrid grid;
  std::size_t dim = 0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  System system = System::Unperturbed;
  std::vector<double> samples;
  bool blown_up = false;
  double first_blowup_time = 0.0;  // meaningful when blown_up

  Matrix sample(std::size_t path, std::size_t node) const;
  const double* sample_ptr(std::size_t path, std::size_t node) const {
    return samples.data() + (path * grid.nodes.size() + node) * dim * dim;
  }
};

/// Euler-Maruyama for dPhi = A Phi dt + G Phi dw (A+B, G+H when perturbed),
/// Phi(s) = Id. The Brownian increment of path p over step k is
/// sqrt(dt) * standard_normal(seed, p, round(s/dt) + k), so grids on the same
/// lattice share increments. threads = 0 uses default_threads().
TransitionEnsemble simulate_forward(const CoefficientSpec& spec, System system, const SimGrid& grid,
                                    std::size_t n_paths, std::uint64_t seed, std::size_t threads = 0);

/// One matrix per path plus a validity mask.
struct PathMatrices {
  std::vector<Matrix> values;  // empty Matrix where invalid
  std::vector<char> valid;
  std::size_t n_degenerate = 0;

  std::size_t size() const noexcept { return values.size(); }
};

/// Condition number above which a sample is treated as singular.
inline constexpr double kDegenerateCondition = 1e12;

/// Phi(t, s_query) = sample(t) * sample(s_query)^-1 per path. t == s_query
/// returns the identity on every path.
PathMatrices transition(const TransitionEnsemble& ens, double t, double s_query);

struct CurvePoint {
  double t = 0.0;
  double s = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_effective = 0;
  bool available = true;
};

struct MsNormCurve {
  std::vector<CurvePoint> points;
};

/// Post-factor R for pair (t, s) on one path; nullopt excludes the path.
using PathPostFactor = std::function<std::optional<Matrix>(std::size_t path, double s)>;
using PostFactor = std::function<Matrix(double s)>;

/// Mean and standard error of ||Phi(t,s) R||^2 (squared spectral norm) over
/// non-degenerate paths.
MsNormCurve ms_norm_curve(const TransitionEnsemble& ens, const std::vector<std::pair<double, double>>& pairs,
                          const PostFactor& post_factor = {});
MsNormCurve ms_norm_curve(const TransitionEnsemble& ens, const std::vector<std::pair<double, double>>& pairs,
                          const PathPostFactor& post_factor);

/// Mean and standard error of a sample, reduced in index order. Identical
/// samples give exactly that value with zero error.
std::pair<double, double> mean_and_stderr(const std::vector<double>& xs);

/// Scalar affine SDE dx = lambda(t) x dt + c(t) dw with x(s) = x0.
struct ScalarEnsemble {
  SimGrid grid;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;  // [path][node]
};

ScalarEnsemble simulate_affine_scalar(const std::function<double(double)>& lambda,
                                      const std::function<double(double)>& c, double x0, const SimGrid& grid,
                                      std::size_t n_paths, std::uint64_t seed, std::size_t threads = 0);

/// (node time, mean of x^2, standard error) per node.
struct MomentPoint {
  double t = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
};
std::vector<MomentPoint> second_moment(const ScalarEnsemble& ens);

void write_ensemble_csv(std::ostream& os, const TransitionEnsemble& ens);
void write_scalar_ensemble_csv(std::ostream& os, const ScalarEnsemble& ens);
void write_curve_csv(std::ostream& os, const MsNormCurve& curve);

}  // namespace sdelab

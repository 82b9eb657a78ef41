#include "sdelab/sde_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "engine_detail.hpp"
#include "sdelab/csv.hpp"
#include "sdelab/errors.hpp"
#include "sdelab/kernels.hpp"
#include "sdelab/parallel.hpp"
#include "sdelab/rng.hpp"

namespace sdelab {

// ---- SimGrid ---------------------------------------------------------------

void SimGrid::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ArgumentError("grid dt must be positive and finite");
  if (!std::isfinite(s) || !std::isfinite(t_max)) throw ArgumentError("grid bounds must be finite");
  if (nodes.empty()) throw ArgumentError("grid has no output nodes");
  if (t_max < s) throw ArgumentError("grid t_max < s");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double t = nodes[i];
    if (i && !(t > nodes[i - 1])) throw ArgumentError("grid nodes must be strictly increasing");
    if (t < s - 1e-9 * dt || t > t_max + 1e-9 * dt) throw ArgumentError("grid node outside [s, t_max]");
    const double k = (t - s) / dt;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, std::abs(k)))
      throw ArgumentError("grid node " + fmt_full(t) + " is not on the dt lattice");
  }
}

std::size_t SimGrid::steps() const {
  return static_cast<std::size_t>(std::floor((t_max - s) / dt + 1e-9));
}

std::size_t SimGrid::node_step(std::size_t node) const {
  return static_cast<std::size_t>(std::llround((nodes.at(node) - s) / dt));
}

std::optional<std::size_t> SimGrid::node_index(double t) const {
  const double tol = 1e-9 * dt;
  auto it = std::lower_bound(nodes.begin(), nodes.end(), t - tol);
  if (it != nodes.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - nodes.begin());
  return std::nullopt;
}

std::size_t SimGrid::node_index_or_throw(double t) const {
  auto idx = node_index(t);
  if (!idx) throw ArgumentError("time " + fmt_full(t) + " is not a grid node");
  return *idx;
}

SimGrid SimGrid::uniform(double s, double t_max, double dt, double spacing) {
  if (!(spacing > 0.0)) throw ArgumentError("node spacing must be positive");
  SimGrid g;
  g.s = s;
  g.t_max = t_max;
  g.dt = dt;
  const double per = spacing / dt;
  const long long stride = std::llround(per);
  if (stride < 1 || std::abs(per - static_cast<double>(stride)) > 1e-9 * per)
    throw ArgumentError("node spacing must be a multiple of dt");
  const std::size_t k_max = g.steps();
  for (std::size_t k = 0; k <= k_max; k += static_cast<std::size_t>(stride)) g.nodes.push_back(g.time_at_step(k));
  g.validate();
  return g;
}

// ---- batch helpers ---------------------------------------------------------

namespace detail {

std::int64_t step_key0(double s, double dt) { return std::llround(s / dt); }

StepCoefficients step_coefficients(const CoefficientSpec& spec, bool perturbed, double s, double dt,
                                   std::size_t steps) {
  StepCoefficients sc;
  sc.n = spec.dim;
  sc.steps = steps;
  sc.s = s;
  sc.dt = dt;
  sc.key0 = step_key0(s, dt);
  const std::size_t nn = sc.n * sc.n;
  sc.a_dt.resize(steps * nn);
  sc.g.resize(steps * nn);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = s + static_cast<double>(k) * dt;
    const Matrix a = drift(spec, perturbed, t);
    const Matrix g = diffusion(spec, perturbed, t);
    for (std::size_t e = 0; e < nn; ++e) {
      sc.a_dt[k * nn + e] = a.data()[e] * dt;
      sc.g[k * nn + e] = g.data()[e];
    }
  }
  return sc;
}

void brownian_increments(std::uint64_t seed, std::int64_t key, std::size_t first_path, double sqrt_dt, double* dw) {
  const auto step = static_cast<std::uint64_t>(key);
  for (std::size_t p = 0; p < kLanes; ++p) dw[p] = sqrt_dt * standard_normal(seed, first_path + p, step);
}

}  // namespace detail

// ---- forward simulation ----------------------------------------------------

Matrix TransitionEnsemble::sample(std::size_t path, std::size_t node) const {
  Matrix m(dim, dim);
  const double* src = sample_ptr(path, node);
  std::copy(src, src + dim * dim, m.data().begin());
  return m;
}

TransitionEnsemble simulate_forward(const CoefficientSpec& spec, System system, const SimGrid& grid,
                                    std::size_t n_paths, std::uint64_t seed, std::size_t threads) {
  grid.validate();
  if (n_paths == 0) throw ArgumentError("n_paths must be >= 1");
  if (!spec.interval.contains(grid.s) || !spec.interval.contains(grid.nodes.back()))
    throw DomainError("simulation grid leaves the coefficient interval");

  TransitionEnsemble ens;
  ens.grid = grid;
  ens.dim = spec.dim;
  ens.n_paths = n_paths;
  ens.seed = seed;
  ens.system = system;

  const std::size_t n = spec.dim;
  const std::size_t nn = n * n;
  const std::size_t n_nodes = grid.nodes.size();
  const std::size_t last_step = grid.node_step(n_nodes - 1);
  const auto sc = detail::step_coefficients(spec, system == System::Perturbed, grid.s, grid.dt, last_step);
  ens.samples.assign(n_paths * n_nodes * nn, 0.0);

  const std::size_t L = detail::kLanes;
  const std::size_t n_batches = (n_paths + L - 1) / L;
  std::vector<std::size_t> blow_node(n_batches, n_nodes);

  parallel_for_batches(n_batches, threads, [&](std::size_t b) {
    const std::size_t first = b * L;
    const std::size_t live = std::min(L, n_paths - first);
    std::size_t node = 0;
    detail::simulate_batch(sc, seed, first, [&](std::size_t k, const double* block) {
      while (node < n_nodes && grid.node_step(node) == k) {
        for (std::size_t p = 0; p < live; ++p) {
          double* dst = ens.samples.data() + ((first + p) * n_nodes + node) * nn;
          for (std::size_t e = 0; e < nn; ++e) {
            dst[e] = block[e * L + p];
            if (!std::isfinite(dst[e]) && blow_node[b] > node) blow_node[b] = node;
          }
        }
        ++node;
      }
    });
  });

  const std::size_t first_bad = *std::min_element(blow_node.begin(), blow_node.end());
  if (first_bad < n_nodes) {
    ens.blown_up = true;
    ens.first_blowup_time = grid.nodes[first_bad];
  }
  return ens;
}

// ---- transitions and curves -----------------------------------------------

namespace {

bool usable(const Matrix& m) {
  if (!m.all_finite()) return false;
  return condition_number(m) <= kDegenerateCondition;
}

}  // namespace

PathMatrices transition(const TransitionEnsemble& ens, double t, double s_query) {
  const std::size_t it = ens.grid.node_index_or_throw(t);
  const std::size_t is = ens.grid.node_index_or_throw(s_query);
  PathMatrices out;
  out.values.resize(ens.n_paths);
  out.valid.assign(ens.n_paths, 1);
  if (it == is) {
    for (auto& v : out.values) v = Matrix::identity(ens.dim);
    return out;
  }
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    const Matrix ms = ens.sample(p, is);
    const Matrix mt = ens.sample(p, it);
    std::optional<Matrix> inv;
    if (usable(ms) && mt.all_finite()) inv = inverse(ms);
    if (!inv) {
      out.valid[p] = 0;
      ++out.n_degenerate;
      continue;
    }
    out.values[p] = mt * *inv;
  }
  return out;
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs.front(); })) return {xs.front(), 0.0};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double n = static_cast<double>(xs.size());
  const double mean = sum / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

MsNormCurve ms_norm_curve(const TransitionEnsemble& ens, const std::vector<std::pair<double, double>>& pairs,
                          const PathPostFactor& post_factor) {
  MsNormCurve curve;
  curve.points.reserve(pairs.size());
  for (const auto& [t, s] : pairs) {
    const PathMatrices tr = transition(ens, t, s);
    std::vector<double> vals;
    vals.reserve(ens.n_paths);
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
      if (!tr.valid[p]) continue;
      double v;
      if (post_factor) {
        auto r = post_factor(p, s);
        if (!r) continue;
        v = op_norm_sq(tr.values[p] * *r);
      } else {
        v = op_norm_sq(tr.values[p]);
      }
      if (!std::isfinite(v)) continue;
      vals.push_back(v);
    }
    CurvePoint pt;
    pt.t = t;
    pt.s = s;
    pt.n_effective = vals.size();
    if (vals.empty()) {
      pt.available = false;
      pt.estimate = std::numeric_limits<double>::quiet_NaN();
      pt.std_error = std::numeric_limits<double>::quiet_NaN();
    } else {
      std::tie(pt.estimate, pt.std_error) = mean_and_stderr(vals);
    }
    curve.points.push_back(pt);
  }
  return curve;
}

MsNormCurve ms_norm_curve(const TransitionEnsemble& ens, const std::vector<std::pair<double, double>>& pairs,
                          const PostFactor& post_factor) {
  if (!post_factor) return ms_norm_curve(ens, pairs, PathPostFactor{});
  return ms_norm_curve(ens, pairs, PathPostFactor([&](std::size_t, double s) -> std::optional<Matrix> {
                         return post_factor(s);
                       }));
}

// ---- scalar affine ---------------------------------------------------------

ScalarEnsemble simulate_affine_scalar(const std::function<double(double)>& lambda,
                                      const std::function<double(double)>& c, double x0, const SimGrid& grid,
                                      std::size_t n_paths, std::uint64_t seed, std::size_t threads) {
  grid.validate();
  if (n_paths == 0) throw ArgumentError("n_paths must be >= 1");
  ScalarEnsemble ens;
  ens.grid = grid;
  ens.n_paths = n_paths;
  ens.seed = seed;
  const std::size_t n_nodes = grid.nodes.size();
  const std::size_t steps = grid.node_step(n_nodes - 1);
  std::vector<double> lam_dt(steps), cs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = grid.time_at_step(k);
    lam_dt[k] = lambda(t) * grid.dt;
    cs[k] = c(t);
  }
  ens.values.assign(n_paths * n_nodes, 0.0);

  const std::size_t L = detail::kLanes;
  const std::int64_t key0 = detail::step_key0(grid.s, grid.dt);
  const double sqrt_dt = std::sqrt(grid.dt);
  const std::size_t n_batches = (n_paths + L - 1) / L;
  parallel_for_batches(n_batches, threads, [&](std::size_t b) {
    const std::size_t first = b * L;
    const std::size_t live = std::min(L, n_paths - first);
    const auto& kt = kernels::active();
    double x[detail::kLanes], dw[detail::kLanes];
    std::fill(std::begin(x), std::end(x), x0);
    std::size_t node = 0;
    auto record = [&](std::size_t k) {
      while (node < n_nodes && grid.node_step(node) == k) {
        for (std::size_t p = 0; p < live; ++p) ens.values[(first + p) * n_nodes + node] = x[p];
        ++node;
      }
    };
    record(0);
    for (std::size_t k = 0; k < steps; ++k) {
      detail::brownian_increments(seed, key0 + static_cast<std::int64_t>(k), first, sqrt_dt, dw);
      kt.affine_scalar_step(L, lam_dt[k], cs[k], dw, x);
      record(k + 1);
    }
  });
  return ens;
}

std::vector<MomentPoint> second_moment(const ScalarEnsemble& ens) {
  const std::size_t n_nodes = ens.grid.nodes.size();
  std::vector<MomentPoint> out;
  std::vector<double> sq(ens.n_paths);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
      const double x = ens.values[p * n_nodes + i];
      sq[p] = x * x;
    }
    auto [m, se] = mean_and_stderr(sq);
    out.push_back({ens.grid.nodes[i], m, se});
  }
  return out;
}

// ---- CSV -------------------------------------------------------------------

void write_ensemble_csv(std::ostream& os, const TransitionEnsemble& ens) {
  write_row(os, {"path", "node_time", "row", "col", "value"});
  const std::size_t n = ens.dim;
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    const std::string ps = std::to_string(p);
    for (std::size_t i = 0; i < ens.grid.nodes.size(); ++i) {
      const std::string ts = fmt_full(ens.grid.nodes[i]);
      const double* m = ens.sample_ptr(p, i);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
          write_row(os, {ps, ts, std::to_string(r), std::to_string(c), fmt_full(m[r * n + c])});
    }
  }
}

void write_scalar_ensemble_csv(std::ostream& os, const ScalarEnsemble& ens) {
  write_row(os, {"path", "node_time", "row", "col", "value"});
  const std::size_t n_nodes = ens.grid.nodes.size();
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    const std::string ps = std::to_string(p);
    for (std::size_t i = 0; i < n_nodes; ++i)
      write_row(os, {ps, fmt_full(ens.grid.nodes[i]), "0", "0", fmt_full(ens.values[p * n_nodes + i])});
  }
}

void write_curve_csv(std::ostream& os, const MsNormCurve& curve) {
  write_row(os, {"t", "s", "estimate", "stderr", "n_effective"});
  for (const auto& pt : curve.points)
    write_row(os, {fmt_full(pt.t), fmt_full(pt.s), fmt_full(pt.estimate), fmt_full(pt.std_error),
                   std::to_string(pt.n_effective)});
}

}  // namespace sdelab

#include "sdelab/dichotomy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "sdelab/errors.hpp"
#include "sdelab/simplex.hpp"

namespace sdelab {

void DichotomyParams::validate() const {
  if (!(M > 0.0) || !(alpha > 0.0) || !(eps >= 0.0) || !std::isfinite(M) || !std::isfinite(alpha) ||
      !std::isfinite(eps))
    throw ArgumentError("dichotomy parameters need M > 0, alpha > 0, eps >= 0");
}

double DichotomyParams::envelope(double t, double s, Direction dir) const {
  const double gap = dir == Direction::Stable ? t - s : s - t;
  return M * std::exp(-alpha * gap + eps * std::abs(s));
}

// ---- projection families ---------------------------------------------------

ProjectionFamily ProjectionFamily::shared(const Matrix& p0, double t0) {
  if (!p0.square() || p0.empty()) throw ArgumentError("projection must be a non-empty square matrix");
  if (max_abs(p0 * p0 - p0) > 1e-9) throw ArgumentError("base projection is not idempotent");
  ProjectionFamily fam;
  fam.t0 = t0;
  fam.base_projection = p0;
  fam.rank = numerical_rank(p0);
  return fam;
}

const Matrix* ProjectionFamily::base(std::size_t path) const {
  if (!per_path()) return &base_projection;
  if (path >= path_bases.size() || !path_valid[path]) return nullptr;
  return &path_bases[path];
}

PathMatrices projection_at(const ProjectionFamily& fam, const TransitionEnsemble& ens, double t) {
  if (fam.dim() != ens.dim) throw ArgumentError("projection and ensemble dimensions differ");
  if (fam.per_path() && fam.path_bases.size() != ens.n_paths)
    throw ArgumentError("per-path projection family does not match the ensemble size");
  const bool at_base = ens.grid.node_index_or_throw(t) == ens.grid.node_index_or_throw(fam.t0);
  PathMatrices out;
  out.values.resize(ens.n_paths);
  out.valid.assign(ens.n_paths, 1);
  PathMatrices tr;
  if (!at_base) tr = transition(ens, t, fam.t0);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    const Matrix* p0 = fam.base(p);
    std::optional<Matrix> tinv;
    if (p0 && !at_base && tr.valid[p]) tinv = inverse(tr.values[p]);
    if (!p0 || (!at_base && (!tr.valid[p] || !tinv))) {
      out.valid[p] = 0;
      ++out.n_degenerate;
      continue;
    }
    out.values[p] = at_base ? *p0 : tr.values[p] * *p0 * *tinv;
  }
  return out;
}

PathMatrices green_function(const ProjectionFamily& fam, const TransitionEnsemble& ens, double t, double s) {
  const PathMatrices pt = projection_at(fam, ens, t);
  const PathMatrices tr = transition(ens, t, s);
  const Matrix id = Matrix::identity(ens.dim);
  PathMatrices out;
  out.values.resize(ens.n_paths);
  out.valid.assign(ens.n_paths, 1);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    if (!pt.valid[p] || !tr.valid[p]) {
      out.valid[p] = 0;
      ++out.n_degenerate;
      continue;
    }
    if (t >= s) out.values[p] = pt.values[p] * tr.values[p];
    else out.values[p] = -1.0 * ((id - pt.values[p]) * tr.values[p]);
  }
  return out;
}

MsNormCurve projected_curve(const ProjectionFamily& fam, const TransitionEnsemble& ens,
                            const std::vector<std::pair<double, double>>& pairs, Direction dir) {
  std::map<double, PathMatrices> cache;
  const Matrix id = Matrix::identity(ens.dim);
  for (const auto& [t, s] : pairs) {
    if (dir == Direction::Stable && t < s) throw ArgumentError("stable curve needs t >= s");
    if (dir == Direction::Unstable && t > s) throw ArgumentError("unstable curve needs t <= s");
    if (!cache.contains(s)) {
      PathMatrices ps = projection_at(fam, ens, s);
      if (dir == Direction::Unstable)
        for (std::size_t p = 0; p < ps.size(); ++p)
          if (ps.valid[p]) ps.values[p] = id - ps.values[p];
      cache.emplace(s, std::move(ps));
    }
  }
  return ms_norm_curve(ens, pairs, PathPostFactor([&](std::size_t path, double s) -> std::optional<Matrix> {
                         const PathMatrices& ps = cache.at(s);
                         if (!ps.valid[path]) return std::nullopt;
                         return ps.values[path];
                       }));
}

std::vector<std::pair<double, double>> node_pairs(const SimGrid& grid, Direction dir) {
  std::vector<std::pair<double, double>> out;
  for (double s : grid.nodes)
    for (double t : grid.nodes)
      if (dir == Direction::Stable ? t >= s : t <= s) out.emplace_back(t, s);
  return out;
}

// ---- verification ----------------------------------------------------------

ViolationReport verify_dichotomy(const MsNormCurve& stable, const MsNormCurve& unstable,
                                 const DichotomyParams& params, double buffer) {
  if (!(buffer >= 0.0)) throw ArgumentError("stderr buffer must be nonnegative");
  ViolationReport rep;
  rep.buffer = buffer;
  auto scan = [&](const MsNormCurve& curve, Direction dir) {
    for (const auto& pt : curve.points) {
      if (dir == Direction::Stable && pt.t < pt.s) throw ArgumentError("stable curve has a pair with t < s");
      if (dir == Direction::Unstable && pt.t > pt.s) throw ArgumentError("unstable curve has a pair with t > s");
      if (!pt.available) continue;
      Violation v;
      v.t = pt.t;
      v.s = pt.s;
      v.estimate = pt.estimate;
      v.std_error = pt.std_error;
      v.envelope = params.envelope(pt.t, pt.s, dir);
      v.slack = v.envelope - (pt.estimate - buffer * pt.std_error);
      v.direction = dir;
      rep.min_slack = std::min(rep.min_slack, v.slack);
      rep.checked.push_back(v);
      if (v.slack < 0.0) rep.violations.push_back(v);
    }
  };
  scan(stable, Direction::Stable);
  scan(unstable, Direction::Unstable);
  return rep;
}

// ---- envelope fit ----------------------------------------------------------

namespace {

LpResult solve_or_throw(const std::vector<std::vector<double>>& rows, const std::vector<double>& rhs,
                        const std::vector<double>& c, const char* stage) {
  LpResult r = maximize_free(rows, rhs, c);
  switch (r.status) {
    case LpResult::Status::Optimal: return r;
    case LpResult::Status::Unbounded:
    case LpResult::Status::Underdetermined:
      throw UnderdeterminedError(std::string("envelope fit is not determined by the data (") + stage + ")");
    case LpResult::Status::Infeasible:
      throw FitError(std::string("envelope fit infeasible (") + stage + ")");
  }
  return r;
}

}  // namespace

DichotomyParams fit_envelope(const MsNormCurve& curve, Direction dir) {
  const double sigma = dir == Direction::Stable ? 1.0 : -1.0;
  // Primal x = (m, alpha, eps), constraint -m + gap alpha - |s| eps <= -y.
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  std::vector<double> ys, gaps, abs_s;
  std::set<double> distinct_s, distinct_gap;
  for (const auto& pt : curve.points) {
    if (!pt.available || std::isnan(pt.estimate)) continue;
    if (std::isinf(pt.estimate) && pt.estimate > 0.0) throw FitError("curve value is +inf");
    if (pt.estimate < 0.0) throw FitError("curve value is negative");
    if (pt.estimate == 0.0) continue;
    const double gap = sigma * (pt.t - pt.s);
    if (gap < 0.0) throw ArgumentError("pair direction does not match the fit direction");
    const double y = std::log(pt.estimate);
    rows.push_back({-1.0, gap, -std::abs(pt.s)});
    rhs.push_back(-y);
    ys.push_back(y);
    gaps.push_back(gap);
    abs_s.push_back(std::abs(pt.s));
    distinct_s.insert(std::abs(pt.s));
    distinct_gap.insert(gap);
  }
  if (rows.size() < 3 || distinct_s.size() < 2 || distinct_gap.size() < 2)
    throw UnderdeterminedError("envelope fit needs >= 3 pairs with two distinct |s| and two distinct gaps");
  rows.push_back({0.0, -1.0, 0.0});
  rhs.push_back(0.0);
  rows.push_back({0.0, 0.0, -1.0});
  rhs.push_back(0.0);

  const LpResult r1 = solve_or_throw(rows, rhs, {-1.0, 0.0, 0.0}, "log M");
  const double m_star = r1.x[0];
  rows.push_back({1.0, 0.0, 0.0});
  rhs.push_back(m_star + 1e-10 * std::max(1.0, std::abs(m_star)));
  const LpResult r2 = solve_or_throw(rows, rhs, {0.0, 1.0, 0.0}, "alpha");
  const double a_star = r2.x[1];
  rows.push_back({0.0, -1.0, 0.0});
  rhs.push_back(-(a_star - 1e-10 * std::max(1.0, std::abs(a_star))));
  const LpResult r3 = solve_or_throw(rows, rhs, {0.0, 0.0, -1.0}, "eps");

  DichotomyParams out;
  out.kind = DichotomyKind::Dichotomy;
  out.alpha = std::max(0.0, r3.x[1]);
  out.eps = std::max(0.0, r3.x[2]);
  // Tightest log M for the chosen (alpha, eps), so the envelope dominates every pair.
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ys.size(); ++i) m = std::max(m, ys[i] + out.alpha * gaps[i] - out.eps * abs_s[i]);
  out.M = std::exp(m) * (1.0 + 1e-13);
  return out;
}

double fit_constant(const MsNormCurve& curve, Direction dir, double alpha, double eps) {
  const double sigma = dir == Direction::Stable ? 1.0 : -1.0;
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& pt : curve.points) {
    if (!pt.available || std::isnan(pt.estimate) || pt.estimate <= 0.0) continue;
    if (std::isinf(pt.estimate)) throw FitError("curve value is +inf");
    m = std::max(m, std::log(pt.estimate) + alpha * sigma * (pt.t - pt.s) - eps * std::abs(pt.s));
  }
  if (!std::isfinite(m)) throw UnderdeterminedError("no pair carries data for the envelope constant");
  return std::exp(m) * (1.0 + 1e-13);
}

}  // namespace sdelab

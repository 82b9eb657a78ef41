#include "sdelab/fixedpoint.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "engine_detail.hpp"
#include "sdelab/csv.hpp"
#include "sdelab/errors.hpp"
#include "sdelab/kernels.hpp"
#include "sdelab/parallel.hpp"

namespace sdelab {

const char* to_string(FieldKind k) noexcept {
  switch (k) {
    case FieldKind::Contraction: return "contraction";
    case FieldKind::URight: return "U_right";
    case FieldKind::VLeft: return "V_left";
    case FieldKind::UGreen: return "U_green";
    case FieldKind::VGreen: return "V_green";
  }
  return "?";
}

bool KernelField::defined(std::size_t base, std::size_t node) const {
  const double s = bases[base];
  const double t = grid.nodes[node];
  const bool u_type = which == FieldKind::Contraction || which == FieldKind::URight || which == FieldKind::UGreen;
  const double tol = 1e-9 * grid.dt;
  return u_type ? t >= s - tol : t <= s + tol;
}

std::size_t KernelField::base_index(double s) const {
  for (std::size_t b = 0; b < bases.size(); ++b)
    if (std::abs(bases[b] - s) <= 1e-9 * grid.dt) return b;
  throw ArgumentError("time " + fmt_full(s) + " is not a base time of the field");
}

Matrix KernelField::value(std::size_t path, std::size_t base, std::size_t node) const {
  Matrix m(dim, dim);
  const double* src = ptr(path, base, node);
  std::copy(src, src + dim * dim, m.data().begin());
  return m;
}

namespace {

constexpr std::size_t L = detail::kLanes;

// One integral equation to solve on the shared lattice.
struct Job {
  FieldKind kind = FieldKind::URight;
  bool u_type = true;
  Matrix lead;  // inhomogeneous-term projection
  Matrix p0;    // kernel projection on tau < t
  Matrix q0;    // kernel projection on tau >= t
  bool has_q = true;
  std::vector<double> bases;
  std::vector<std::size_t> base_step;  // lattice index of each base
};

struct Lattice {
  double grid_s = 0.0;
  double dt = 0.0;
  std::size_t m_lo = 0;  // lattice steps below grid.s
  std::size_t K = 0;     // lattice indices 0..K
  std::size_t k0 = 0;    // lattice index of the anchor t0
  std::vector<std::size_t> node_step;

  double time(std::size_t k) const {
    return grid_s + (static_cast<double>(k) - static_cast<double>(m_lo)) * dt;
  }
};

struct Context {
  const SimGrid* grid = nullptr;
  std::size_t n = 0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::size_t max_iter = 0;
  Lattice lat;
  detail::StepCoefficients unperturbed;  // A dt, G on lattice steps
  std::vector<double> btilde_dt;         // [step][n*n]
  std::vector<double> h;                 // [step][n*n]
  std::vector<Job> jobs;
};

// Per-batch accumulators, indexed [job][(iterate * n_bases + base) * n_nodes + node].
struct BatchStats {
  std::vector<std::vector<double>> diff;
  std::vector<std::vector<double>> norm;
  std::vector<char> diverged;
  std::size_t n_valid = 0;
};

std::size_t ceil_steps(double span, double dt) {
  if (span <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
}

double lane_op_norm_sq(std::size_t n, const double* block, std::size_t lane, Matrix& scratch) {
  for (std::size_t e = 0; e < n * n; ++e) scratch.data()[e] = block[e * L + lane];
  return op_norm_sq(scratch);
}

// Runs every job on one lane batch. k_limit[j] caps the iterations of job j.
// stats receives per-iterate sums; out (if given) receives final node values.
void run_batch(const Context& ctx, std::size_t batch, const std::vector<std::size_t>& k_limit, BatchStats* stats,
               std::vector<KernelField>* out) {
  const std::size_t n = ctx.n;
  const std::size_t nn = n * n;
  const std::size_t blk = nn * L;
  const std::size_t K = ctx.lat.K;
  const std::size_t first = batch * L;
  const std::size_t live = std::min(L, ctx.n_paths - first);
  const auto& kt = kernels::active();
  const double sqrt_dt = std::sqrt(ctx.lat.dt);

  // Unperturbed fundamental matrix on the lattice, and the increments.
  std::vector<double> psi((K + 1) * blk), psi_inv((K + 1) * blk), dw(K * L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < L; ++p) psi[(i * n + i) * L + p] = 1.0;
  for (std::size_t k = 0; k < K; ++k) {
    detail::brownian_increments(ctx.seed, ctx.unperturbed.key0 + static_cast<std::int64_t>(k), first, sqrt_dt,
                                dw.data() + k * L);
    kt.affine_apply(n, L, ctx.unperturbed.a_dt.data() + k * nn, ctx.unperturbed.g.data() + k * nn,
                    dw.data() + k * L, psi.data() + k * blk, psi.data() + (k + 1) * blk, true);
  }

  // Re-anchor at t0: Psi_k = Phi_k Phi_{k0}^-1, Psi_{k0} = Id exactly.
  std::vector<char> valid(L, 0);
  for (std::size_t p = 0; p < live; ++p) valid[p] = 1;
  std::vector<double> a(nn), ainv(nn), work(nn);
  std::vector<double> inv0(blk, 0.0), tmp(blk);
  for (std::size_t p = 0; p < L; ++p) {
    for (std::size_t e = 0; e < nn; ++e) a[e] = psi[ctx.lat.k0 * blk + e * L + p];
    if (!invert_into(n, a.data(), ainv.data(), work.data())) {
      valid[p] = 0;
      continue;
    }
    for (std::size_t e = 0; e < nn; ++e) inv0[e * L + p] = ainv[e];
  }
  for (std::size_t k = 0; k <= K; ++k) {
    double* pk = psi.data() + k * blk;
    if (k == ctx.lat.k0) {
      std::fill(pk, pk + blk, 0.0);
      for (std::size_t i = 0; i < n; ++i) std::fill(pk + (i * n + i) * L, pk + (i * n + i + 1) * L, 1.0);
    } else {
      kt.gemm_lane_lane(n, L, pk, inv0.data(), tmp.data());
      std::copy(tmp.begin(), tmp.end(), pk);
    }
    double* qk = psi_inv.data() + k * blk;
    for (std::size_t p = 0; p < L; ++p) {
      for (std::size_t e = 0; e < nn; ++e) a[e] = pk[e * L + p];
      if (!invert_into(n, a.data(), ainv.data(), work.data())) {
        valid[p] = 0;
        std::fill(ainv.begin(), ainv.end(), 0.0);
      }
      for (std::size_t e = 0; e < nn; ++e) qk[e * L + p] = ainv[e];
    }
  }
  for (std::size_t p = 0; p < L; ++p) {
    if (!valid[p]) continue;
    bool finite = true;
    for (std::size_t k = 0; k <= K && finite; ++k)
      for (std::size_t e = 0; e < nn && finite; ++e)
        finite = std::isfinite(psi[k * blk + e * L + p]) && std::isfinite(psi_inv[k * blk + e * L + p]);
    if (!finite) valid[p] = 0;
  }
  std::size_t n_valid = 0;
  for (std::size_t p = 0; p < live; ++p) n_valid += valid[p] ? 1 : 0;
  if (stats) stats->n_valid = n_valid;

  const std::size_t n_nodes = ctx.grid->nodes.size();
  std::vector<double> F((K + 1) * blk), cur((K + 1) * blk), nxt((K + 1) * blk), Y(K * blk), suf((K + 1) * blk);
  std::vector<double> pre(blk), d1(blk), d2(blk), g_s(blk);
  Matrix scratch(n, n);

  for (std::size_t jb = 0; jb < ctx.jobs.size(); ++jb) {
    const Job& job = ctx.jobs[jb];
    const std::size_t nb = job.bases.size();
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t ks = job.base_step[b];
      const std::size_t r0 = job.u_type ? ks : 0;
      const std::size_t r1 = job.u_type ? K : ks;

      auto node_in_domain = [&](std::size_t o) {
        const std::size_t k = ctx.lat.node_step[o];
        return k >= r0 && k <= r1;
      };
      auto stat_at = [&](std::vector<double>& v, std::size_t it, std::size_t o) -> double& {
        return v[(it * nb + b) * n_nodes + o];
      };

      // Iterate 0: Psi_i lead Psi_s^-1.
      kt.gemm_shared_lane(n, L, job.lead.data().data(), psi_inv.data() + ks * blk, g_s.data());
      for (std::size_t i = r0; i <= r1; ++i)
        kt.gemm_lane_lane(n, L, psi.data() + i * blk, g_s.data(), F.data() + i * blk);
      std::copy(F.begin() + r0 * blk, F.begin() + (r1 + 1) * blk, cur.begin() + r0 * blk);

      auto record_norms = [&](std::size_t it) {
        if (!stats) return;
        for (std::size_t o = 0; o < n_nodes; ++o) {
          if (!node_in_domain(o)) continue;
          const double* u = cur.data() + ctx.lat.node_step[o] * blk;
          double acc = 0.0;
          for (std::size_t p = 0; p < L; ++p)
            if (valid[p]) acc += lane_op_norm_sq(n, u, p, scratch);
          stat_at(stats->norm[jb], it, o) = acc;
        }
      };
      record_norms(0);

      std::size_t it = 1;
      bool stagnant = false;
      for (; it <= k_limit[jb]; ++it) {
        // Y_j = Psi_j^-1 (Btilde_j dt + H_j dW_j) U_j
        for (std::size_t j = r0; j < r1; ++j) {
          kt.affine_apply(n, L, ctx.btilde_dt.data() + j * nn, ctx.h.data() + j * nn, dw.data() + j * L,
                          cur.data() + j * blk, tmp.data(), false);
          kt.gemm_lane_lane(n, L, psi_inv.data() + j * blk, tmp.data(), Y.data() + j * blk);
        }
        if (job.has_q) {
          std::fill(suf.begin() + r1 * blk, suf.begin() + (r1 + 1) * blk, 0.0);
          for (std::size_t j = r1; j-- > r0;)
            kt.add(blk, Y.data() + j * blk, suf.data() + (j + 1) * blk, suf.data() + j * blk);
        }
        std::fill(pre.begin(), pre.end(), 0.0);
        for (std::size_t i = r0; i <= r1; ++i) {
          kt.gemm_shared_lane(n, L, job.p0.data().data(), pre.data(), d1.data());
          if (job.has_q) {
            kt.gemm_shared_lane(n, L, job.q0.data().data(), suf.data() + i * blk, d2.data());
            kt.sub(blk, d1.data(), d2.data(), d1.data());
          }
          kt.gemm_lane_lane(n, L, psi.data() + i * blk, d1.data(), tmp.data());
          kt.add(blk, F.data() + i * blk, tmp.data(), nxt.data() + i * blk);
          if (i < r1) kt.add(blk, pre.data(), Y.data() + i * blk, pre.data());
        }

        bool same = true, finite = true;
        for (std::size_t i = r0; i <= r1 && (same || finite); ++i) {
          const double* u = nxt.data() + i * blk;
          const double* v = cur.data() + i * blk;
          for (std::size_t e = 0; e < nn; ++e)
            for (std::size_t p = 0; p < L; ++p) {
              if (!valid[p]) continue;
              const double x = u[e * L + p];
              if (x != v[e * L + p]) same = false;
              if (!std::isfinite(x)) finite = false;
            }
        }
        if (stats) {
          for (std::size_t o = 0; o < n_nodes; ++o) {
            if (!node_in_domain(o)) continue;
            const std::size_t k = ctx.lat.node_step[o];
            kt.sub(blk, nxt.data() + k * blk, cur.data() + k * blk, d2.data());
            double acc = 0.0;
            for (std::size_t p = 0; p < L; ++p)
              if (valid[p]) acc += lane_op_norm_sq(n, d2.data(), p, scratch);
            stat_at(stats->diff[jb], it, o) = acc;
          }
        }
        std::swap(cur, nxt);
        record_norms(it);
        if (!finite) {
          if (stats) stats->diverged[jb] = 1;
          break;
        }
        if (same) {
          stagnant = true;
          break;
        }
      }
      // Later iterates repeat the stagnant one.
      if (stats && stagnant) {
        for (std::size_t later = it + 1; later <= ctx.max_iter; ++later)
          for (std::size_t o = 0; o < n_nodes; ++o) {
            if (!node_in_domain(o)) continue;
            stat_at(stats->diff[jb], later, o) = 0.0;
            stat_at(stats->norm[jb], later, o) = stat_at(stats->norm[jb], it, o);
          }
      }

      if (out) {
        KernelField& f = (*out)[jb];
        for (std::size_t p = 0; p < live; ++p) {
          f.path_valid[first + p] = valid[p];
          for (std::size_t o = 0; o < n_nodes; ++o) {
            if (!node_in_domain(o)) continue;
            double* dst = f.values.data() + (((first + p) * nb + b) * n_nodes + o) * nn;
            const double* src = cur.data() + ctx.lat.node_step[o] * blk;
            for (std::size_t e = 0; e < nn; ++e) dst[e] = src[e * L + p];
          }
        }
      }
    }
  }
}

std::vector<double> default_bases(const SimGrid& grid, double t0, bool u_type) {
  std::vector<double> out;
  for (int k = 0; k < 3; ++k) {
    const double s = u_type ? t0 + k : t0 - k;
    if (auto idx = grid.node_index(s)) out.push_back(grid.nodes[*idx]);
  }
  if (out.empty()) throw ArgumentError("no default base time lies on the output nodes");
  if (!u_type) std::reverse(out.begin(), out.end());
  return out;
}

struct SolveSetup {
  FieldKind kind;
  std::vector<double> bases;
};

// Shared driver: lattice [grid.s - m_lo dt, grid.s + (K - m_lo) dt], two passes.
std::vector<KernelField> solve(const CoefficientSpec& spec, const DichotomyParams& params, const Matrix& p0,
                               double t0, const SimGrid& grid, std::size_t n_paths, std::uint64_t seed,
                               const PicardOptions& opts, std::size_t m_lo, std::size_t K,
                               const std::vector<SolveSetup>& setups, bool with_tail) {
  const std::size_t n = spec.dim;
  Context ctx;
  ctx.grid = &grid;
  ctx.n = n;
  ctx.n_paths = n_paths;
  ctx.seed = seed;
  ctx.max_iter = opts.max_iter;
  ctx.lat.grid_s = grid.s;
  ctx.lat.dt = grid.dt;
  ctx.lat.m_lo = m_lo;
  ctx.lat.K = K;
  const double k0f = (t0 - grid.s) / grid.dt + static_cast<double>(m_lo);
  const long long k0 = std::llround(k0f);
  if (k0 < 0 || static_cast<std::size_t>(k0) > K || std::abs(k0f - static_cast<double>(k0)) > 1e-9 * (1.0 + k0f))
    throw ArgumentError("anchor t0 is not on the integration lattice");
  ctx.lat.k0 = static_cast<std::size_t>(k0);
  for (std::size_t o = 0; o < grid.nodes.size(); ++o) {
    ctx.lat.node_step.push_back(grid.node_step(o) + m_lo);
    if (ctx.lat.node_step.back() > K) throw ArgumentError("output node beyond the integration lattice");
  }

  // Step times are taken from grid.s so the lattice matches simulate_forward exactly.
  const std::size_t nn = n * n;
  ctx.unperturbed.n = n;
  ctx.unperturbed.steps = K;
  ctx.unperturbed.s = ctx.lat.time(0);
  ctx.unperturbed.dt = grid.dt;
  ctx.unperturbed.a_dt.resize(K * nn);
  ctx.unperturbed.g.resize(K * nn);
  for (std::size_t k = 0; k < K; ++k) {
    const double t = ctx.lat.time(k);
    const Matrix am = drift(spec, false, t);
    const Matrix gm = diffusion(spec, false, t);
    for (std::size_t e = 0; e < nn; ++e) {
      ctx.unperturbed.a_dt[k * nn + e] = am.data()[e] * grid.dt;
      ctx.unperturbed.g[k * nn + e] = gm.data()[e];
    }
  }
  ctx.unperturbed.key0 = detail::step_key0(grid.s, grid.dt) - static_cast<std::int64_t>(m_lo);
  ctx.btilde_dt.resize(K * nn);
  ctx.h.assign(K * nn, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double t = ctx.lat.time(k);
    const Matrix bt = eval(spec, Coefficient::Btilde, t);
    for (std::size_t e = 0; e < nn; ++e) ctx.btilde_dt[k * nn + e] = bt.data()[e] * grid.dt;
    if (spec.H) {
      const Matrix hm = eval(spec, Coefficient::H, t);
      for (std::size_t e = 0; e < nn; ++e) ctx.h[k * nn + e] = hm.data()[e];
    }
  }

  const Matrix id = Matrix::identity(n);
  const Matrix q0 = id - p0;
  for (const auto& su : setups) {
    Job job;
    job.kind = su.kind;
    job.u_type = su.kind != FieldKind::VLeft && su.kind != FieldKind::VGreen;
    if (su.kind == FieldKind::Contraction) {
      job.lead = id;
      job.p0 = id;
      job.q0 = Matrix::zeros(n);
      job.has_q = false;
    } else {
      job.lead = job.u_type ? p0 : q0;
      job.p0 = p0;
      job.q0 = q0;
    }
    job.bases = su.bases;
    for (double s : job.bases) {
      const std::size_t o = grid.node_index_or_throw(s);
      job.base_step.push_back(ctx.lat.node_step[o]);
    }
    ctx.jobs.push_back(std::move(job));
  }

  const std::size_t n_batches = (n_paths + L - 1) / L;
  const std::size_t n_nodes = grid.nodes.size();

  // Pass 1: per-iterate statistics. A short cap is tried first; iterates up to
  // the cap are the same either way, so the rerun only extends the log.
  std::size_t n_iter = std::min<std::size_t>(opts.max_iter, 6);
  std::vector<KernelField> fields(ctx.jobs.size());
  std::vector<std::size_t> k_final(ctx.jobs.size());
  for (;;) {
    ctx.max_iter = n_iter;
    std::vector<BatchStats> stats(n_batches);
    for (auto& st : stats) {
      for (const auto& job : ctx.jobs) {
        st.diff.emplace_back((n_iter + 1) * job.bases.size() * n_nodes, 0.0);
        st.norm.emplace_back((n_iter + 1) * job.bases.size() * n_nodes, 0.0);
      }
      st.diverged.assign(ctx.jobs.size(), 0);
    }
    const std::vector<std::size_t> full(ctx.jobs.size(), n_iter);
    parallel_for_batches(n_batches, opts.threads,
                         [&](std::size_t b) { run_batch(ctx, b, full, &stats[b], nullptr); });

    std::size_t n_valid = 0;
    for (const auto& st : stats) n_valid += st.n_valid;
    if (n_valid == 0) throw Error("every path is degenerate; the fixed-point problem cannot be posed");

    bool settled = true;
    for (std::size_t jb = 0; jb < ctx.jobs.size(); ++jb) {
      const Job& job = ctx.jobs[jb];
      const std::size_t nb = job.bases.size();
      KernelField& f = fields[jb];
      f = KernelField{};
      f.which = job.kind;
      f.grid = grid;
      f.bases = job.bases;
      f.dim = n;
      f.n_paths = n_paths;
      f.seed = seed;
      f.t0 = t0;
      f.tol = opts.tol;
      f.t_lower = ctx.lat.time(0);
      f.t_upper = ctx.lat.time(K);
      for (const auto& st : stats) f.divergent = f.divergent || st.diverged[jb];

      std::vector<double> diff_sum((n_iter + 1) * nb * n_nodes, 0.0), norm_sum((n_iter + 1) * nb * n_nodes, 0.0);
      for (const auto& st : stats)
        for (std::size_t i = 0; i < diff_sum.size(); ++i) {
          diff_sum[i] += st.diff[jb][i];
          norm_sum[i] += st.norm[jb][i];
        }
      auto weighted = [&](const std::vector<double>& sums, std::size_t it) {
        double sup = 0.0;
        for (std::size_t b = 0; b < nb; ++b) {
          const double w = std::exp(-0.5 * params.eps * std::abs(job.bases[b]));
          for (std::size_t o = 0; o < n_nodes; ++o) {
            const std::size_t k = ctx.lat.node_step[o];
            const bool in = job.u_type ? k >= job.base_step[b] : k <= job.base_step[b];
            if (!in) continue;
            const double v = std::sqrt(sums[(it * nb + b) * n_nodes + o] / static_cast<double>(n_valid)) * w;
            if (std::isnan(v)) return v;
            sup = std::max(sup, v);
          }
        }
        return sup;
      };

      std::size_t kstar = n_iter;
      f.converged = false;
      f.log.push_back({0, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                       weighted(norm_sum, 0)});
      double prev = std::numeric_limits<double>::quiet_NaN();
      for (std::size_t it = 1; it <= n_iter; ++it) {
        const double d = weighted(diff_sum, it);
        ConvergenceEntry e;
        e.iterate = it;
        e.diff_norm = d;
        e.ratio = (it >= 2 && prev > 0.0) ? d / prev : std::numeric_limits<double>::quiet_NaN();
        e.weighted_norm = weighted(norm_sum, it);
        f.log.push_back(e);
        prev = d;
        if (!f.divergent && d < opts.tol) {
          kstar = it;
          f.converged = true;
          break;
        }
      }
      if (f.divergent) f.converged = false;
      k_final[jb] = kstar;
      f.iterate_index = kstar;
      f.weighted_norm = f.log.back().weighted_norm;
      settled = settled && (f.converged || f.divergent);
    }
    if (settled || n_iter == opts.max_iter) break;
    n_iter = opts.max_iter;
  }

  for (std::size_t jb = 0; jb < ctx.jobs.size(); ++jb) {
    const Job& job = ctx.jobs[jb];
    const std::size_t nb = job.bases.size();
    KernelField& f = fields[jb];
    if (with_tail) {
      const double c = params.M * f.weighted_norm * (2.0 / params.alpha + 1.0 / std::sqrt(params.alpha));
      const double dist = job.u_type ? f.t_upper - grid.nodes.back() : grid.nodes.front() - f.t_lower;
      f.tail_bound = c * std::exp(-0.5 * params.alpha * dist);
      if (f.tail_bound > opts.tol / 2.0) {
        const double need = 2.0 / params.alpha * std::log(c / (opts.tol / 2.0));
        const double required = job.u_type ? grid.nodes.back() + need : grid.nodes.front() - need;
        throw TruncationError("tail bound " + fmt6(f.tail_bound) + " of the truncated integral exceeds tol/2; need t_trunc = " +
                                  fmt6(required),
                              required);
      }
    }
    f.values.assign(n_paths * nb * n_nodes * n * n, std::numeric_limits<double>::quiet_NaN());
    f.path_valid.assign(n_paths, 0);
  }

  // Pass 2: recompute to the accepted iterate and keep node values.
  parallel_for_batches(n_batches, opts.threads, [&](std::size_t b) { run_batch(ctx, b, k_final, nullptr, &fields); });
  for (auto& f : fields) {
    f.n_degenerate = 0;
    for (std::size_t p = 0; p < n_paths; ++p)
      if (!f.path_valid[p]) {
        ++f.n_degenerate;
        const std::size_t span = f.bases.size() * n_nodes * n * n;
        std::fill(f.values.begin() + p * span, f.values.begin() + (p + 1) * span,
                  std::numeric_limits<double>::quiet_NaN());
      }
  }
  return fields;
}

void check_common(const CoefficientSpec& spec, const SimGrid& grid, std::size_t n_paths, const PicardOptions& opts) {
  spec.validate();
  grid.validate();
  if (n_paths == 0) throw ArgumentError("n_paths must be >= 1");
  if (!(opts.tol > 0.0)) throw ArgumentError("tol must be positive");
  if (opts.max_iter == 0) throw ArgumentError("max_iter must be >= 1");
}

void check_family(const ProjectionFamily& fam, const CoefficientSpec& spec) {
  if (fam.per_path()) throw ArgumentError("the unperturbed projection family must have a shared base");
  if (fam.dim() != spec.dim) throw ArgumentError("projection and coefficient dimensions differ");
}

void gate_dichotomy(const CoefficientSpec& spec, const DichotomyParams& params) {
  params.validate();
  const auto rep = check_dichotomy_condition(params.M, params.alpha, params.eps, spec.b_bound, spec.g_bound,
                                             spec.h_bound);
  if (!rep.condition_ok)
    throw ConditionError("dichotomy robustness condition fails: Mt = " + fmt6(rep.m_tilde) + ", threshold " +
                         fmt6(rep.threshold) + (rep.hypothesis_ok ? "" : ", and eps >= alpha"));
}

double require_trunc(const PicardOptions& opts) {
  if (!std::isfinite(opts.t_trunc)) throw ArgumentError("t_trunc must be given");
  return opts.t_trunc;
}

}  // namespace

KernelField picard_solve_contraction(const CoefficientSpec& spec, const DichotomyParams& params,
                                     const SimGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                     const PicardOptions& opts) {
  check_common(spec, grid, n_paths, opts);
  params.validate();
  const auto rep =
      check_contraction_condition(params.M, params.alpha, params.eps, spec.b_bound, spec.g_bound, spec.h_bound);
  if (!rep.condition_ok)
    throw ConditionError("contraction robustness condition fails: Mt = " + fmt6(rep.m_tilde) + ", threshold " +
                         fmt6(rep.threshold));
  const double t0 = grid.node_index(spec.interval.t0) ? spec.interval.t0 : grid.nodes.front();
  std::vector<double> bases = opts.bases.empty() ? default_bases(grid, t0, true) : opts.bases;
  const std::size_t K = grid.node_step(grid.nodes.size() - 1);
  auto fields = solve(spec, params, Matrix::identity(spec.dim), grid.s, grid, n_paths, seed, opts, 0, K,
                      {{FieldKind::Contraction, bases}}, false);
  fields[0].t0 = t0;
  return std::move(fields[0]);
}

KernelField picard_solve_U(const CoefficientSpec& spec, const DichotomyParams& params, const ProjectionFamily& fam,
                           const SimGrid& grid, std::size_t n_paths, std::uint64_t seed, const PicardOptions& opts) {
  check_common(spec, grid, n_paths, opts);
  check_family(fam, spec);
  gate_dichotomy(spec, params);
  const double tt = require_trunc(opts);
  if (tt < grid.t_max) throw ArgumentError("t_trunc must be >= grid.t_max");
  const std::size_t K = ceil_steps(tt - grid.s, grid.dt);
  std::vector<double> bases = opts.bases.empty() ? default_bases(grid, fam.t0, true) : opts.bases;
  auto fields = solve(spec, params, fam.base_projection, fam.t0, grid, n_paths, seed, opts, 0, K,
                      {{FieldKind::URight, bases}}, true);
  return std::move(fields[0]);
}

KernelField picard_solve_V(const CoefficientSpec& spec, const DichotomyParams& params, const ProjectionFamily& fam,
                           const SimGrid& grid, std::size_t n_paths, std::uint64_t seed, const PicardOptions& opts) {
  check_common(spec, grid, n_paths, opts);
  check_family(fam, spec);
  gate_dichotomy(spec, params);
  const double tt = require_trunc(opts);
  if (tt > grid.s) throw ArgumentError("t_trunc must be <= grid.s for the left half line");
  const std::size_t m_lo = ceil_steps(grid.s - tt, grid.dt);
  const std::size_t K = m_lo + grid.steps();
  std::vector<double> bases = opts.bases.empty() ? default_bases(grid, fam.t0, false) : opts.bases;
  auto fields = solve(spec, params, fam.base_projection, fam.t0, grid, n_paths, seed, opts, m_lo, K,
                      {{FieldKind::VLeft, bases}}, true);
  return std::move(fields[0]);
}

std::pair<KernelField, KernelField> picard_solve_green(const CoefficientSpec& spec, const DichotomyParams& params,
                                                       const ProjectionFamily& fam, const SimGrid& grid,
                                                       std::size_t n_paths, std::uint64_t seed,
                                                       const PicardOptions& opts,
                                                       const std::vector<double>& v_bases) {
  check_common(spec, grid, n_paths, opts);
  check_family(fam, spec);
  if (spec.interval.kind != Interval::Kind::WholeLine)
    throw ArgumentError("the Green-function equations need a whole-line coefficient spec");
  gate_dichotomy(spec, params);
  const double tt = require_trunc(opts);
  if (tt < grid.t_max) throw ArgumentError("t_trunc must be >= grid.t_max");
  const std::size_t m_lo = ceil_steps(tt - grid.t_max, grid.dt);
  const std::size_t K = m_lo + ceil_steps(tt - grid.s, grid.dt);
  std::vector<double> ub = opts.bases.empty() ? default_bases(grid, fam.t0, true) : opts.bases;
  std::vector<double> vb = v_bases.empty() ? default_bases(grid, fam.t0, false) : v_bases;
  auto fields = solve(spec, params, fam.base_projection, fam.t0, grid, n_paths, seed, opts, m_lo, K,
                      {{FieldKind::UGreen, ub}, {FieldKind::VGreen, vb}}, true);
  return {std::move(fields[0]), std::move(fields[1])};
}

// ---- projections -----------------------------------------------------------

namespace {

ProjectionFamily family_from_field(const KernelField& f, const TransitionEnsemble& ens, bool complement) {
  if (ens.n_paths != f.n_paths || ens.seed != f.seed || ens.dim != f.dim)
    throw ArgumentError("perturbed ensemble does not match the field (paths, seed or dimension)");
  if (ens.system != System::Perturbed) throw ArgumentError("projection families need the perturbed ensemble");
  ens.grid.node_index_or_throw(f.t0);
  const std::size_t b = f.base_index(f.t0);
  const std::size_t o = f.grid.node_index_or_throw(f.t0);
  const std::size_t n = f.dim;
  const Matrix id = Matrix::identity(n);

  ProjectionFamily fam;
  fam.t0 = f.t0;
  fam.path_bases.resize(f.n_paths);
  fam.path_valid.assign(f.n_paths, 0);
  std::vector<double> idem;
  Matrix sum = Matrix::zeros(n);
  std::size_t count = 0;
  for (std::size_t p = 0; p < f.n_paths; ++p) {
    if (!f.path_valid[p]) continue;
    Matrix v = f.value(p, b, o);
    if (!v.all_finite()) continue;
    const Matrix pm = complement ? id - v : v;
    idem.push_back(op_norm_sq(pm * pm - pm));
    fam.path_bases[p] = pm;
    fam.path_valid[p] = 1;
    sum += pm;
    ++count;
  }
  if (count == 0) throw ConstructionError("no valid path to build the projection from");
  const double ms = mean_and_stderr(idem).first;
  if (ms > 1e-4)
    throw ConstructionError("perturbed projection is not idempotent: E||P^2 - P||^2 = " + fmt6(ms));
  fam.base_projection = sum * (1.0 / static_cast<double>(count));
  for (std::size_t p = 0; p < f.n_paths; ++p)
    if (fam.path_valid[p]) {
      fam.rank = numerical_rank(fam.path_bases[p], 1e-6);
      break;
    }
  return fam;
}

}  // namespace

ProjectionFamily build_projection_right(const KernelField& U, const TransitionEnsemble& ens_perturbed) {
  if (U.which != FieldKind::URight && U.which != FieldKind::UGreen)
    throw ArgumentError("build_projection_right needs a U field");
  return family_from_field(U, ens_perturbed, false);
}

ProjectionFamily build_projection_left(const KernelField& V, const TransitionEnsemble& ens_perturbed) {
  if (V.which != FieldKind::VLeft && V.which != FieldKind::VGreen)
    throw ArgumentError("build_projection_left needs a V field");
  return family_from_field(V, ens_perturbed, true);
}

GluedProjections glue_projections(const ProjectionFamily& right, const ProjectionFamily& left,
                                  const ProjectionFamily& fam_unperturbed, const TransitionEnsemble& ens_perturbed,
                                  const Bound& bound) {
  if (std::abs(right.t0 - left.t0) > 1e-12 * (1.0 + std::abs(right.t0)) ||
      std::abs(right.t0 - fam_unperturbed.t0) > 1e-12 * (1.0 + std::abs(right.t0)))
    throw ArgumentError("projection families are anchored at different times");
  const std::size_t n = fam_unperturbed.dim();
  const std::size_t np = ens_perturbed.n_paths;
  const Matrix id = Matrix::identity(n);
  const Matrix& p0 = fam_unperturbed.base_projection;
  const Matrix q0 = id - p0;

  GluedProjections g;
  g.t0 = right.t0;
  g.S.resize(np);
  g.S_inverse.resize(np);
  g.P_tilde_base.resize(np);
  g.valid.assign(np, 0);
  g.bound = bound;
  std::vector<double> dist, idem, cons;
  std::size_t considered = 0;
  for (std::size_t p = 0; p < np; ++p) {
    const Matrix* pr = right.base(p);
    const Matrix* pl = left.base(p);
    if (!pr || !pl) continue;
    ++considered;
    const Matrix q_minus = id - *pl;
    const Matrix S = *pr + q_minus;
    g.S[p] = S;
    dist.push_back(op_norm_sq(S - id));
    const Matrix s1 = id - p0 + *pr;
    const Matrix t1 = id + p0 - *pr;
    const Matrix s2 = id - q0 + q_minus;
    const Matrix t2 = id + q0 - q_minus;
    g.s1t1_max_error = std::max(g.s1t1_max_error, max_abs(s1 * t1 - id));
    g.s2t2_max_error = std::max(g.s2t2_max_error, max_abs(s2 * t2 - id));
    std::optional<Matrix> inv;
    if (S.all_finite() && condition_number(S) <= kDegenerateCondition) inv = inverse(S);
    if (!inv) {
      ++g.n_singular;
      continue;
    }
    g.S_inverse[p] = *inv;
    g.P_tilde_base[p] = S * p0 * *inv;
    g.valid[p] = 1;
    const Matrix& pt = g.P_tilde_base[p];
    idem.push_back(op_norm_sq(pt * pt - pt));
    cons.push_back(op_norm_sq(pt * *pr - *pr));
  }
  if (considered == 0) throw GluingError("no path has both half-line projections");
  if (static_cast<double>(g.n_singular) > 0.01 * static_cast<double>(considered))
    throw GluingError("S is singular on " + std::to_string(g.n_singular) + " of " + std::to_string(considered) +
                      " paths");
  std::tie(g.ms_distance_to_Id, g.ms_distance_stderr) = mean_and_stderr(dist);
  g.idempotence_ms = idem.empty() ? 0.0 : mean_and_stderr(idem).first;
  g.consistency_ms = cons.empty() ? 0.0 : mean_and_stderr(cons).first;
  g.within_bound = !bound.available || g.ms_distance_to_Id <= bound.value + 3.0 * g.ms_distance_stderr;
  return g;
}

ProjectionFamily glued_family(const GluedProjections& g) {
  ProjectionFamily fam;
  fam.t0 = g.t0;
  fam.path_bases = g.P_tilde_base;
  fam.path_valid = g.valid;
  std::size_t n = 0;
  for (const auto& m : g.P_tilde_base)
    if (!m.empty()) {
      n = m.rows();
      break;
    }
  if (n == 0) throw GluingError("no glued projection available");
  Matrix sum = Matrix::zeros(n);
  std::size_t count = 0;
  for (std::size_t p = 0; p < g.valid.size(); ++p)
    if (g.valid[p]) {
      sum += g.P_tilde_base[p];
      ++count;
    }
  fam.base_projection = sum * (1.0 / static_cast<double>(count));
  for (std::size_t p = 0; p < g.valid.size(); ++p)
    if (g.valid[p]) {
      fam.rank = numerical_rank(g.P_tilde_base[p], 1e-6);
      break;
    }
  return fam;
}

std::pair<double, double> ms_distance(const ProjectionFamily& fam, const Matrix& p) {
  std::vector<double> d;
  if (!fam.per_path()) {
    d.push_back(op_norm_sq(fam.base_projection - p));
  } else {
    for (std::size_t i = 0; i < fam.path_bases.size(); ++i)
      if (fam.path_valid[i]) d.push_back(op_norm_sq(fam.path_bases[i] - p));
  }
  if (d.empty()) throw ArgumentError("projection family has no valid path");
  return mean_and_stderr(d);
}

// ---- CSV -------------------------------------------------------------------

void write_field_csv(std::ostream& os, const KernelField& f) {
  write_row(os, {"path", "node_time", "row", "col", "value", "iterate", "weighted_norm", "base_time"});
  const std::string it = std::to_string(f.iterate_index);
  const std::string wn = fmt_full(f.weighted_norm);
  for (std::size_t p = 0; p < f.n_paths; ++p) {
    if (!f.path_valid[p]) continue;
    const std::string ps = std::to_string(p);
    for (std::size_t b = 0; b < f.bases.size(); ++b) {
      const std::string bs = fmt_full(f.bases[b]);
      for (std::size_t o = 0; o < f.grid.nodes.size(); ++o) {
        if (!f.defined(b, o)) continue;
        const std::string ts = fmt_full(f.grid.nodes[o]);
        const double* m = f.ptr(p, b, o);
        for (std::size_t r = 0; r < f.dim; ++r)
          for (std::size_t c = 0; c < f.dim; ++c)
            write_row(os, {ps, ts, std::to_string(r), std::to_string(c), fmt_full(m[r * f.dim + c]), it, wn, bs});
      }
    }
  }
}

void write_convergence_csv(std::ostream& os, const KernelField& f) {
  write_row(os, {"iterate", "diff_norm", "ratio", "weighted_norm"});
  for (const auto& e : f.log)
    write_row(os, {std::to_string(e.iterate), fmt_full(e.diff_norm), fmt_full(e.ratio), fmt_full(e.weighted_norm)});
}

}  // namespace sdelab

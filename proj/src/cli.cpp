#include "sdelab/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include "sdelab/csv.hpp"
#include "sdelab/errors.hpp"
#include "sdelab/kernels.hpp"
#include "sdelab/oracle.hpp"
#include "sdelab/parallel.hpp"

namespace sdelab::cli {

// ---- configuration -----------------------------------------------------------

const std::vector<std::string>& experiment_keys() {
  static const std::vector<std::string> keys = {
      "grid_start", "t_max", "dt",   "node_spacing", "paths",    "seed",    "P0",   "M",     "alpha",
      "eps",        "kind",  "tol",  "max_iter",     "t_trunc",  "threads", "output_dir", "stderr_buffer"};
  return keys;
}

namespace {

int line_of(const ConfigFile& cfg, const std::string& key) {
  const auto* e = cfg.find(key);
  return e ? e->line : 0;
}

template <class F>
auto with_line(const ConfigFile& cfg, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("'") + key + "': " + e.what(), line_of(cfg, key));
  }
}

std::optional<DichotomyParams> claimed_params(const ConfigFile& cfg) {
  const auto M = cfg.get_double("M");
  const auto alpha = cfg.get_double("alpha");
  const auto eps = cfg.get_double("eps");
  if (!M && !alpha && !eps) return std::nullopt;
  if (!M || !alpha) throw ConfigError("claimed parameters need both M and alpha", line_of(cfg, M ? "alpha" : "M"));
  DichotomyParams p;
  p.M = *M;
  p.alpha = *alpha;
  p.eps = eps.value_or(0.0);
  if (auto kind = cfg.get_string("kind")) {
    if (*kind == "contraction") p.kind = DichotomyKind::Contraction;
    else if (*kind != "dichotomy") throw ConfigError("kind must be dichotomy or contraction", line_of(cfg, "kind"));
  }
  with_line(cfg, "M", [&] {
    p.validate();
    return 0;
  });
  return p;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_paths == 0) throw ConfigError("paths must be >= 1", 0);
  if (!(grid.dt > 0.0)) throw ConfigError("dt must be positive", 0);
  if (!(tol > 0.0)) throw ConfigError("tol must be positive", 0);
  if (max_iter == 0) throw ConfigError("max_iter must be >= 1", 0);
  if (!(stderr_buffer >= 0.0)) throw ConfigError("stderr_buffer must be nonnegative", 0);
}

ExperimentConfig load_experiment(const ConfigFile& cfg) {
  std::vector<std::string> known = CoefficientSpec::config_keys();
  known.insert(known.end(), experiment_keys().begin(), experiment_keys().end());
  cfg.require_known(known);

  ExperimentConfig ex;
  ex.spec = CoefficientSpec::from_config(cfg);
  const double t0 = ex.spec.interval.t0;
  const bool left = ex.spec.interval.kind == Interval::Kind::LeftHalfLine;
  const double start = cfg.get_double("grid_start").value_or(left ? t0 - 5.0 : t0);
  const double t_max = cfg.get_double("t_max").value_or(left ? t0 : start + 5.0);
  const double dt = cfg.get_double("dt").value_or(1e-3);
  const double spacing = cfg.get_double("node_spacing").value_or(0.25);
  ex.grid = with_line(cfg, "node_spacing", [&] { return SimGrid::uniform(start, t_max, dt, spacing); });
  for (double t : {ex.grid.s, ex.grid.nodes.back()})
    if (!ex.spec.interval.contains(t))
      throw ConfigError("grid leaves the interval " + ex.spec.interval.to_string(), line_of(cfg, "grid_start"));

  if (auto v = cfg.get_int("paths")) {
    if (*v < 1) throw ConfigError("paths must be >= 1", line_of(cfg, "paths"));
    ex.n_paths = static_cast<std::size_t>(*v);
  }
  if (auto v = cfg.get_uint("seed")) ex.seed = *v;
  ex.claimed = claimed_params(cfg);
  if (const auto* e = cfg.find("P0")) {
    if (!e->quoted) throw ConfigError("'P0' must be a quoted matrix", e->line);
    ex.p0 = with_line(cfg, "P0", [&] {
      const Matrix m = MatrixFunction::parse(e->value, ex.spec.dim).eval(t0);
      ProjectionFamily::shared(m, t0);
      return m;
    });
  }
  if (auto v = cfg.get_string("output_dir")) ex.output_dir = *v;
  ex.stderr_buffer = cfg.get_double("stderr_buffer").value_or(3.0);
  ex.tol = cfg.get_double("tol").value_or(1e-4);
  if (auto v = cfg.get_int("max_iter")) {
    if (*v < 1) throw ConfigError("max_iter must be >= 1", line_of(cfg, "max_iter"));
    ex.max_iter = static_cast<std::size_t>(*v);
  }
  if (auto v = cfg.get_double("t_trunc")) ex.t_trunc = *v;
  if (auto v = cfg.get_int("threads")) ex.threads = static_cast<std::size_t>(std::max<std::int64_t>(0, *v));
  ex.validate();
  return ex;
}

// ---- output ------------------------------------------------------------------

namespace {

std::string yes_no(bool b) { return b ? "true" : "false"; }

std::string bound_cell(const Bound& b) { return b.available ? fmt_full(b.value) : "inf"; }

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os = open_output(path);
  body(os);
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

void emit_summary(const PipelineReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  write_file(dir / "ensemble.csv", [&](std::ostream& os) {
    if (r.ensemble) write_ensemble_csv(os, *r.ensemble);
    else write_row(os, {"path", "node_time", "row", "col", "value"});
  });
  write_file(dir / "curves.csv", [&](std::ostream& os) {
    write_row(os, {"curve", "t", "s", "estimate", "stderr", "n_effective"});
    for (const auto& [label, curve] : r.curves)
      for (const auto& pt : curve.points) {
        if (!pt.available) continue;
        write_row(os, {label, fmt_full(pt.t), fmt_full(pt.s), fmt_full(pt.estimate), fmt_full(pt.std_error),
                       std::to_string(pt.n_effective)});
      }
  });
  write_file(dir / "fit.csv", [&](std::ostream& os) {
    write_row(os, {"direction", "M", "alpha", "eps"});
    for (const auto& [label, p] : r.fits) write_row(os, {label, fmt_full(p.M), fmt_full(p.alpha), fmt_full(p.eps)});
  });
  write_file(dir / "robustness.csv", [&](std::ostream& os) {
    write_row(os, {"case", "m_tilde", "threshold", "compared", "smallness_ok", "hypothesis_ok", "condition_ok",
                   "M_pred", "alpha_pred", "eps_pred", "alpha_tilde", "theta", "proj_distance_coeff",
                   "sol_distance_coeff", "inconsistent"});
    for (const auto& x : r.robustness)
      write_row(os, {to_string(x.which), fmt_full(x.m_tilde), fmt_full(x.threshold), fmt_full(x.compared),
                     yes_no(x.smallness_ok), yes_no(x.hypothesis_ok), yes_no(x.condition_ok),
                     fmt_full(x.predicted.M), fmt_full(x.predicted.alpha), fmt_full(x.predicted.eps),
                     fmt_full(x.alpha_tilde), fmt_full(x.theta), bound_cell(x.proj_distance_coeff),
                     bound_cell(x.sol_distance_coeff), yes_no(x.inconsistent)});
  });
  write_file(dir / "convergence.csv", [&](std::ostream& os) {
    write_row(os, {"field", "iterate", "diff_norm", "ratio", "weighted_norm"});
    for (const auto& [label, log] : r.convergence)
      for (const auto& e : log)
        write_row(os, {label, std::to_string(e.iterate), fmt_full(e.diff_norm), fmt_full(e.ratio),
                       fmt_full(e.weighted_norm)});
  });
  write_file(dir / "projections.csv", [&](std::ostream& os) {
    write_row(os, {"projection", "row", "col", "value"});
    for (const auto& [label, m] : r.projections)
      for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
          write_row(os, {label, std::to_string(i), std::to_string(j), fmt_full(m(i, j))});
  });
  write_file(dir / "summary.txt", [&](std::ostream& os) {
    for (const auto& [k, v] : r.summary) os << k << ": " << v << '\n';
  });
}

// ---- pipelines -------------------------------------------------------------

namespace {

struct Outcome {
  int code = kOk;
  std::string message;
};

ProjectionFamily unperturbed_family(const ExperimentConfig& ex) {
  if (ex.p0.empty()) throw ConfigError("this pipeline needs the base projection 'P0'", 0);
  return ProjectionFamily::shared(ex.p0, ex.spec.interval.t0);
}

const DichotomyParams& require_claimed(const ExperimentConfig& ex) {
  if (!ex.claimed) throw ConfigError("this pipeline needs claimed parameters M, alpha (and eps)", 0);
  return *ex.claimed;
}

struct Curves {
  MsNormCurve stable;
  MsNormCurve unstable;
};

Curves projected_curves(const ProjectionFamily& fam, const TransitionEnsemble& ens) {
  return {projected_curve(fam, ens, node_pairs(ens.grid, Direction::Stable), Direction::Stable),
          projected_curve(fam, ens, node_pairs(ens.grid, Direction::Unstable), Direction::Unstable)};
}

// Directions with no nonzero data (rank 0 or full rank) are skipped. A direction
// whose rates are not determined by its pairs borrows (alpha, eps) from the
// other one and fits only M.
DichotomyParams fit_both(const ProjectionFamily& fam, const Curves& c, PipelineReport& rep) {
  const bool want_s = fam.rank > 0;
  const bool want_u = fam.rank < fam.dim();
  std::optional<DichotomyParams> ps, pu;
  std::optional<UnderdeterminedError> pending;
  auto attempt = [&](const MsNormCurve& curve, Direction dir, std::optional<DichotomyParams>& slot) {
    try {
      slot = fit_envelope(curve, dir);
    } catch (const UnderdeterminedError& e) {
      pending = e;
    }
  };
  if (want_s) attempt(c.stable, Direction::Stable, ps);
  if (want_u) attempt(c.unstable, Direction::Unstable, pu);
  auto borrow = [&](const MsNormCurve& curve, Direction dir, const DichotomyParams& from, const char* note) {
    DichotomyParams p = from;
    p.M = fit_constant(curve, dir, p.alpha, p.eps);
    rep.summary.emplace_back("fit_note", note);
    return p;
  };
  if (want_s && !ps && pu) ps = borrow(c.stable, Direction::Stable, *pu, "stable rates borrowed from the unstable fit");
  if (want_u && !pu && ps) pu = borrow(c.unstable, Direction::Unstable, *ps, "unstable rates borrowed from the stable fit");
  if ((want_s && !ps) || (want_u && !pu)) throw *pending;

  std::optional<DichotomyParams> combined;
  for (const auto* p : {ps ? &*ps : nullptr, pu ? &*pu : nullptr}) {
    if (!p) continue;
    if (!combined) {
      combined = *p;
      continue;
    }
    combined->M = std::max(combined->M, p->M);
    combined->alpha = std::min(combined->alpha, p->alpha);
    combined->eps = std::max(combined->eps, p->eps);
  }
  if (ps) rep.fits.emplace_back("stable", *ps);
  if (pu) rep.fits.emplace_back("unstable", *pu);
  rep.fits.emplace_back("combined", *combined);
  return *combined;
}

void add_violations(PipelineReport& rep, const ViolationReport& v) {
  rep.summary.emplace_back("pairs_checked", std::to_string(v.checked.size()));
  rep.summary.emplace_back("violations", std::to_string(v.violations.size()));
  rep.summary.emplace_back("min_slack", fmt6(v.min_slack));
}

void write_violations(const std::filesystem::path& dir, const ViolationReport& v) {
  write_file(dir / "violations.csv", [&](std::ostream& os) {
    write_row(os, {"direction", "t", "s", "estimate", "stderr", "envelope", "slack"});
    for (const auto& x : v.violations)
      write_row(os, {x.direction == Direction::Stable ? "stable" : "unstable", fmt_full(x.t), fmt_full(x.s),
                     fmt_full(x.estimate), fmt_full(x.std_error), fmt_full(x.envelope), fmt_full(x.slack)});
  });
}

PicardOptions picard_options(const ExperimentConfig& ex) {
  PicardOptions o;
  o.max_iter = ex.max_iter;
  o.tol = ex.tol;
  o.t_trunc = ex.t_trunc;
  o.threads = ex.threads;
  return o;
}

// Runs a truncated solver; without a configured t_trunc it starts 10/alpha past
// the grid and retries once at the reported requirement.
template <class Solve>
auto solve_truncated(const ExperimentConfig& ex, const DichotomyParams& params, bool upper, Solve&& solve) {
  PicardOptions o = picard_options(ex);
  const bool automatic = !std::isfinite(o.t_trunc);
  if (automatic) o.t_trunc = upper ? ex.grid.t_max + 10.0 / params.alpha : ex.grid.s - 10.0 / params.alpha;
  try {
    return solve(o);
  } catch (const TruncationError& e) {
    if (!automatic) throw;
    o.t_trunc = upper ? e.required_t_trunc() + ex.grid.dt : e.required_t_trunc() - ex.grid.dt;
    return solve(o);
  }
}

void add_field(PipelineReport& rep, const KernelField& f) {
  const std::string name = to_string(f.which);
  rep.convergence.emplace_back(name, f.log);
  rep.summary.emplace_back(name + "_converged", yes_no(f.converged));
  rep.summary.emplace_back(name + "_iterate", std::to_string(f.iterate_index));
  rep.summary.emplace_back(name + "_weighted_norm", fmt6(f.weighted_norm));
  rep.summary.emplace_back(name + "_tail_bound", fmt6(f.tail_bound));
  rep.summary.emplace_back(name + "_lattice", "[" + fmt6(f.t_lower) + ", " + fmt6(f.t_upper) + "]");
}

Outcome run_simulate(const ExperimentConfig& ex, bool perturbed) {
  PipelineReport rep;
  rep.ensemble = simulate_forward(ex.spec, perturbed ? System::Perturbed : System::Unperturbed, ex.grid, ex.n_paths,
                                  ex.seed, ex.threads);
  rep.curves.emplace_back("transition", ms_norm_curve(*rep.ensemble, node_pairs(ex.grid, Direction::Stable)));
  if (!ex.p0.empty()) {
    const auto c = projected_curves(unperturbed_family(ex), *rep.ensemble);
    rep.curves.emplace_back("stable", c.stable);
    rep.curves.emplace_back("unstable", c.unstable);
  }
  rep.summary.emplace_back("paths", std::to_string(ex.n_paths));
  rep.summary.emplace_back("blown_up", yes_no(rep.ensemble->blown_up));
  emit_summary(rep, ex.output_dir);
  return {};
}

Outcome run_fit(const ExperimentConfig& ex) {
  PipelineReport rep;
  const auto fam = unperturbed_family(ex);
  const auto ens = simulate_forward(ex.spec, System::Unperturbed, ex.grid, ex.n_paths, ex.seed, ex.threads);
  const auto c = projected_curves(fam, ens);
  rep.curves = {{"stable", c.stable}, {"unstable", c.unstable}};
  const auto p = fit_both(fam, c, rep);
  rep.summary.emplace_back("fit", "M=" + fmt6(p.M) + " alpha=" + fmt6(p.alpha) + " eps=" + fmt6(p.eps));
  emit_summary(rep, ex.output_dir);
  return {};
}

Outcome run_verify(const ExperimentConfig& ex) {
  PipelineReport rep;
  const auto& claimed = require_claimed(ex);
  const auto fam = unperturbed_family(ex);
  const auto ens = simulate_forward(ex.spec, System::Unperturbed, ex.grid, ex.n_paths, ex.seed, ex.threads);
  const auto c = projected_curves(fam, ens);
  rep.curves = {{"stable", c.stable}, {"unstable", c.unstable}};
  const auto v = verify_dichotomy(c.stable, c.unstable, claimed, ex.stderr_buffer);
  add_violations(rep, v);
  emit_summary(rep, ex.output_dir);
  write_violations(ex.output_dir, v);
  if (!v.ok()) return {kViolations, std::to_string(v.violations.size()) + " envelope violations"};
  return {};
}

RobustnessReport robustness_reports(const DichotomyParams& p, double b, double g, double h, PipelineReport& rep) {
  rep.robustness.push_back(check_contraction_condition(p.M, p.alpha, p.eps, b, g, h));
  rep.robustness.push_back(check_drift_only(p.M, p.alpha, p.eps, b));
  rep.robustness.push_back(check_dichotomy_condition(p.M, p.alpha, p.eps, b, g, h));
  const RobustnessReport& main = p.kind == DichotomyKind::Contraction ? rep.robustness[0] : rep.robustness[2];
  rep.summary.emplace_back("case", to_string(main.which));
  rep.summary.emplace_back("m_tilde", fmt6(main.m_tilde));
  rep.summary.emplace_back("threshold", fmt6(main.threshold));
  rep.summary.emplace_back("condition_ok", yes_no(main.condition_ok));
  rep.summary.emplace_back("predicted", "M=" + fmt6(main.predicted.M) + " alpha=" + fmt6(main.predicted.alpha) +
                                            " eps=" + fmt6(main.predicted.eps));
  rep.summary.emplace_back("theta", fmt6(main.theta));
  if (p.kind == DichotomyKind::Dichotomy) {
    rep.summary.emplace_back("projection_distance_coeff", main.proj_distance_coeff.available
                                                              ? fmt6(main.proj_distance_coeff.value)
                                                              : std::string("inf"));
    rep.summary.emplace_back("solution_distance_coeff",
                             main.sol_distance_coeff.available ? fmt6(main.sol_distance_coeff.value) : "inf");
    const Bound s = s_invertibility_bound(p.M, p.alpha, p.eps, b, g, h);
    rep.summary.emplace_back("s_invertibility_bound", s.available ? fmt6(s.value) : "inf");
  }
  if (!main.note.empty()) rep.summary.emplace_back("note", main.note);
  return main;
}

Outcome run_robustness(const ConfigFile& cfg, const std::filesystem::path& out) {
  PipelineReport rep;
  const auto claimed = claimed_params(cfg);
  if (!claimed) throw ConfigError("robustness needs M, alpha and eps", 0);
  const double b = cfg.get_double("b_bound").value_or(0.0);
  const double g = cfg.get_double("g_bound").value_or(0.0);
  const double h = cfg.get_double("h_bound").value_or(0.0);
  const auto main = robustness_reports(*claimed, b, g, h, rep);
  emit_summary(rep, out);
  if (!main.condition_ok) return {kConditionFailed, "robustness condition fails"};
  return {};
}

Outcome run_picard(const ExperimentConfig& ex) {
  PipelineReport rep;
  const auto& params = require_claimed(ex);
  std::vector<const KernelField*> fields;
  std::vector<KernelField> store;
  if (params.kind == DichotomyKind::Contraction) {
    store.push_back(picard_solve_contraction(ex.spec, params, ex.grid, ex.n_paths, ex.seed, picard_options(ex)));
  } else {
    const auto fam = unperturbed_family(ex);
    switch (ex.spec.interval.kind) {
      case Interval::Kind::RightHalfLine:
        store.push_back(solve_truncated(ex, params, true, [&](const PicardOptions& o) {
          return picard_solve_U(ex.spec, params, fam, ex.grid, ex.n_paths, ex.seed, o);
        }));
        break;
      case Interval::Kind::LeftHalfLine:
        store.push_back(solve_truncated(ex, params, false, [&](const PicardOptions& o) {
          return picard_solve_V(ex.spec, params, fam, ex.grid, ex.n_paths, ex.seed, o);
        }));
        break;
      case Interval::Kind::WholeLine: {
        auto uv = solve_truncated(ex, params, true, [&](const PicardOptions& o) {
          return picard_solve_green(ex.spec, params, fam, ex.grid, ex.n_paths, ex.seed, o);
        });
        store.push_back(std::move(uv.first));
        store.push_back(std::move(uv.second));
        break;
      }
    }
  }
  std::filesystem::create_directories(ex.output_dir);
  bool converged = true;
  for (const auto& f : store) {
    add_field(rep, f);
    converged = converged && f.converged;
    write_file(ex.output_dir / (std::string("field_") + to_string(f.which) + ".csv"),
               [&](std::ostream& os) { write_field_csv(os, f); });
  }
  emit_summary(rep, ex.output_dir);
  if (!converged) return {kNotConverged, "Picard iteration did not reach tol within max_iter"};
  return {};
}

Outcome run_example(double a, double b, double t_max, int k_max, const std::filesystem::path& out) {
  const ExampleParams p{a, b};
  p.validate();
  const EnvelopeInfo env = true_envelope(p);
  std::vector<double> ts;
  const double step = std::numbers::pi / 8.0;
  for (int k = 0; k * step <= t_max + 1e-12; ++k) ts.push_back(k * step);
  std::vector<std::pair<double, double>> pairs;
  for (double s : ts)
    for (double t : ts)
      if (t >= s) pairs.emplace_back(t, s);

  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out.string());
  write_file(out / "example.csv", [&](std::ostream& os) { write_example_csv(os, p, pairs); });
  write_file(out / "certificate.csv",
             [&](std::ostream& os) { write_certificate_csv(os, nonuniformity_certificate(p, k_max)); });
  write_file(out / "summary.txt", [&](std::ostream& os) {
    os << "a: " << fmt6(a) << "\nb: " << fmt6(b) << "\n";
    os << "sharp_alpha: " << fmt6(env.alpha) << "\nsharp_eps: " << fmt6(env.eps) << "\n";
    os << "claimed_alpha: " << fmt6(env.claimed_alpha) << "\nclaimed_eps: " << fmt6(env.claimed_eps) << "\n";
    os << "audit_pair: (" << fmt6(env.audit_t) << ", " << fmt6(env.audit_s) << ")\n";
    os << "audit_log_gap: " << fmt6(env.audit_log_gap) << "\n";
    os << "eps_below_alpha: " << yes_no(env.eps < env.alpha) << "\n";
  });
  return {};
}

Outcome run_full(const ExperimentConfig& ex) {
  PipelineReport rep;
  const auto fam = unperturbed_family(ex);
  rep.projections.emplace_back("P0", ex.p0);

  rep.ensemble = simulate_forward(ex.spec, System::Unperturbed, ex.grid, ex.n_paths, ex.seed, ex.threads);
  const auto c0 = projected_curves(fam, *rep.ensemble);
  rep.curves = {{"stable", c0.stable}, {"unstable", c0.unstable}};
  const DichotomyParams fitted = fit_both(fam, c0, rep);
  rep.summary.emplace_back("fitted", "M=" + fmt6(fitted.M) + " alpha=" + fmt6(fitted.alpha) + " eps=" + fmt6(fitted.eps));

  const auto& s = ex.spec;
  const RobustnessReport cond = robustness_reports(fitted, s.b_bound, s.g_bound, s.h_bound, rep);
  if (!cond.condition_ok) {
    emit_summary(rep, ex.output_dir);
    return {kConditionFailed, "dichotomy robustness condition fails for the fitted parameters"};
  }

  const auto ens1 = simulate_forward(ex.spec, System::Perturbed, ex.grid, ex.n_paths, ex.seed, ex.threads);
  std::vector<KernelField> fields;
  ProjectionFamily perturbed;
  bool glue_ok = true;
  switch (s.interval.kind) {
    case Interval::Kind::RightHalfLine:
      fields.push_back(solve_truncated(ex, fitted, true, [&](const PicardOptions& o) {
        return picard_solve_U(s, fitted, fam, ex.grid, ex.n_paths, ex.seed, o);
      }));
      perturbed = build_projection_right(fields[0], ens1);
      break;
    case Interval::Kind::LeftHalfLine:
      fields.push_back(solve_truncated(ex, fitted, false, [&](const PicardOptions& o) {
        return picard_solve_V(s, fitted, fam, ex.grid, ex.n_paths, ex.seed, o);
      }));
      perturbed = build_projection_left(fields[0], ens1);
      break;
    case Interval::Kind::WholeLine: {
      auto uv = solve_truncated(ex, fitted, true, [&](const PicardOptions& o) {
        return picard_solve_green(s, fitted, fam, ex.grid, ex.n_paths, ex.seed, o);
      });
      const auto right = build_projection_right(uv.first, ens1);
      const auto left = build_projection_left(uv.second, ens1);
      const Bound sb = s_invertibility_bound(fitted.M, fitted.alpha, fitted.eps, s.b_bound, s.g_bound, s.h_bound);
      const auto g = glue_projections(right, left, fam, ens1, sb);
      rep.projections.emplace_back("P_hat_right_mean", right.base_projection);
      rep.projections.emplace_back("P_hat_left_mean", left.base_projection);
      rep.summary.emplace_back("S_ms_distance", fmt6(g.ms_distance_to_Id) + " +- " + fmt6(g.ms_distance_stderr));
      rep.summary.emplace_back("S_singular_paths", std::to_string(g.n_singular));
      rep.summary.emplace_back("S_within_bound", yes_no(g.within_bound));
      rep.summary.emplace_back("glued_idempotence_ms", fmt6(g.idempotence_ms));
      glue_ok = g.within_bound;
      perturbed = glued_family(g);
      fields.push_back(std::move(uv.first));
      fields.push_back(std::move(uv.second));
      break;
    }
  }
  bool converged = true;
  for (const auto& f : fields) {
    add_field(rep, f);
    converged = converged && f.converged;
  }
  rep.projections.emplace_back("P_perturbed_mean", perturbed.base_projection);
  const auto [dist, dist_se] = ms_distance(perturbed, ex.p0);
  rep.summary.emplace_back("projection_ms_distance", fmt6(dist) + " +- " + fmt6(dist_se));
  const Bound pb = projection_distance_bound(fitted.M, fitted.alpha, fitted.eps, s.b_bound, s.g_bound, s.h_bound,
                                             s.interval.t0);
  rep.summary.emplace_back("projection_distance_bound", pb.available ? fmt6(pb.value) : "inf");

  const auto c1 = projected_curves(perturbed, ens1);
  rep.curves.emplace_back("perturbed_stable", c1.stable);
  rep.curves.emplace_back("perturbed_unstable", c1.unstable);
  const auto v = verify_dichotomy(c1.stable, c1.unstable, cond.predicted, ex.stderr_buffer);
  add_violations(rep, v);
  emit_summary(rep, ex.output_dir);
  if (!converged) return {kNotConverged, "Picard iteration did not reach tol within max_iter"};
  if (!v.ok()) return {kViolations, std::to_string(v.violations.size()) + " envelope violations"};
  if (!glue_ok) return {kViolations, "E||S - Id||^2 exceeds its bound"};
  return {};
}

}  // namespace

// ---- entry point -------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-square dichotomy experiments for linear SDEs"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::pair<std::string, CLI::Option*>> overrides;
  std::string isa = "auto";
  bool perturbed = false;
  double ex_a = 4.0, ex_b = 1.0, ex_tmax = 4.0 * std::numbers::pi;
  int ex_k = 8;
  std::string out_dir;

  auto* sim = app.add_subcommand("simulate", "Simulate the transition ensemble");
  auto* fit = app.add_subcommand("fit", "Fit (M, alpha, eps) to projected mean squares");
  auto* ver = app.add_subcommand("verify", "Check claimed (M, alpha, eps) against simulation");
  auto* rob = app.add_subcommand("robustness", "Robustness conditions and predicted constants");
  auto* pic = app.add_subcommand("picard", "Solve the perturbed integral equations");
  auto* exa = app.add_subcommand("example", "Closed-form curves of the oscillating example");
  auto* full = app.add_subcommand("full", "Fit, gate, solve, glue and verify end to end");
  // Each subcommand gets its own storage slots for the override flags.
  std::vector<std::string> slots(7 * 16);
  std::size_t slot = 0;
  overrides.clear();
  for (auto* sub : {sim, fit, ver, rob, pic, exa, full}) {
    sub->add_option("--config", config_path, "Config file (key = value)");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--isa", isa, "Kernel ISA: auto, scalar, avx2, neon");
    const std::vector<std::pair<std::string, std::string>> flags = {
        {"--seed", "seed"}, {"--paths", "paths"}, {"--dt", "dt"}, {"--tol", "tol"}, {"--threads", "threads"},
        {"--M", "M"}, {"--alpha", "alpha"}, {"--eps", "eps"}, {"--t-trunc", "t_trunc"},
        {"--max-iter", "max_iter"}, {"--buffer", "stderr_buffer"}};
    for (const auto& [flag, key] : flags) overrides.emplace_back(key, sub->add_option(flag, slots[slot++]));
  }
  sim->add_flag("--perturbed", perturbed, "Simulate A+B, G+H");
  // --h names the diffusion perturbation bound, so help keeps only its long form.
  rob->set_help_flag("--help", "Print this help message and exit");
  for (auto* sub : {rob}) {
    overrides.emplace_back("g_bound", sub->add_option("--g", slots[slot++], "Bound g on G"));
    overrides.emplace_back("b_bound", sub->add_option("--b", slots[slot++], "Bound b on B"));
    overrides.emplace_back("h_bound", sub->add_option("--h", slots[slot++], "Bound h on H"));
  }
  exa->add_option("--a", ex_a, "Parameter a");
  exa->add_option("--b", ex_b, "Parameter b");
  exa->add_option("--t-max", ex_tmax, "Largest t of the pair grid");
  exa->add_option("--k-max", ex_k, "Certificate length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (isa == "scalar") kernels::set_active_isa(kernels::Isa::Scalar);
    else if (isa == "avx2") kernels::set_active_isa(kernels::Isa::Avx2);
    else if (isa == "neon") kernels::set_active_isa(kernels::Isa::Neon);
    else if (isa != "auto") throw ConfigError("unknown ISA '" + isa + "'", 0);

    ConfigFile cfg = config_path.empty() ? ConfigFile{} : ConfigFile::load(config_path);
    for (const auto& [key, opt] : overrides)
      if (opt->count() > 0) cfg.set(key, opt->as<std::string>(), false);
    if (!out_dir.empty()) cfg.set("output_dir", out_dir, true);
    const std::filesystem::path out_path = out_dir.empty() ? cfg.get_string("output_dir").value_or(".") : out_dir;

    Outcome o;
    if (exa->parsed()) {
      o = run_example(ex_a, ex_b, ex_tmax, ex_k, out_path);
    } else if (rob->parsed()) {
      o = run_robustness(cfg, out_path);
    } else {
      if (config_path.empty()) throw ConfigError("--config is required for this subcommand", 0);
      const ExperimentConfig ex = load_experiment(cfg);
      if (sim->parsed()) o = run_simulate(ex, perturbed);
      else if (fit->parsed()) o = run_fit(ex);
      else if (ver->parsed()) o = run_verify(ex);
      else if (pic->parsed()) o = run_picard(ex);
      else o = run_full(ex);
    }
    if (o.code != kOk) err << "sdelab: " << o.message << '\n';
    else out << "ok: outputs in " << out_path.string() << '\n';
    return o.code;
  } catch (const ConfigError& e) {
    err << "sdelab: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "sdelab: I/O error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ConditionError& e) {
    err << "sdelab: " << e.what() << '\n';
    return kConditionFailed;
  } catch (const TruncationError& e) {
    err << "sdelab: " << e.what() << '\n';
    return kNotConverged;
  } catch (const ArgumentError& e) {
    err << "sdelab: invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    err << "sdelab: invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "sdelab: I/O error: " << e.what() << '\n';
    return kConfigError;
  } catch (const Error& e) {
    err << "sdelab: " << e.what() << '\n';
    return kViolations;
  }
}

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace sdelab::cli

#include "sdelab/oracle.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "sdelab/csv.hpp"
#include "sdelab/errors.hpp"

namespace sdelab {

void ExampleParams::validate() const {
  if (!(b > 0.0) || !(a > b) || !std::isfinite(a))
    throw ArgumentError("example parameters need a > b > 0");
}

namespace {
void require_nonnegative(double t) {
  if (!(t >= 0.0)) throw ArgumentError("example times must be >= 0");
}
}  // namespace

double log_ms_u(const ExampleParams& p, double t) {
  require_nonnegative(t);
  return -2.0 * p.a * t + 2.0 * p.b * t * std::cos(t);
}

double ms_u(const ExampleParams& p, double t) { return std::exp(log_ms_u(p, t)); }

double ms_v(const ExampleParams& p, double t) { return std::exp(-log_ms_u(p, t)); }

double log_transition_ms_u(const ExampleParams& p, double t, double s) {
  require_nonnegative(s);
  if (t < s) throw ArgumentError("transition_ms_u needs t >= s; use transition_ms_v");
  return -2.0 * p.a * (t - s) + 2.0 * p.b * (t * std::cos(t) - s * std::cos(s));
}

double transition_ms_u(const ExampleParams& p, double t, double s) {
  return std::exp(log_transition_ms_u(p, t, s));
}

double transition_ms_v(const ExampleParams& p, double t, double s) {
  require_nonnegative(t);
  if (t > s) throw ArgumentError("transition_ms_v needs t <= s; use transition_ms_u");
  return std::exp(2.0 * p.a * (t - s) - 2.0 * p.b * (t * std::cos(t) - s * std::cos(s)));
}

EnvelopeInfo true_envelope(const ExampleParams& p) {
  p.validate();
  EnvelopeInfo e;
  e.alpha = 2.0 * (p.a - p.b);
  e.eps = 4.0 * p.b;
  e.claimed_alpha = 2.0 * (p.a - p.b);
  e.claimed_eps = 2.0 * p.b;
  e.audit_t = 4.0 * std::numbers::pi;
  e.audit_s = 3.0 * std::numbers::pi;
  e.audit_log_transition = log_transition_ms_u(p, e.audit_t, e.audit_s);
  e.audit_log_claimed = -e.claimed_alpha * (e.audit_t - e.audit_s) + e.claimed_eps * e.audit_s;
  e.audit_log_gap = e.audit_log_transition - e.audit_log_claimed;
  return e;
}

double log_envelope(const EnvelopeInfo& env, double t, double s) { return -env.alpha * (t - s) + env.eps * s; }

std::vector<std::pair<double, double>> witness_pairs(int m_max) {
  std::vector<std::pair<double, double>> out;
  for (int m = 1; m <= m_max; ++m)
    for (int j = 0; 2 * j + 1 < 2 * m; ++j)
      out.emplace_back(2.0 * m * std::numbers::pi, (2.0 * j + 1.0) * std::numbers::pi);
  return out;
}

std::vector<CertificateRow> nonuniformity_certificate(const ExampleParams& p, int k_max) {
  if (k_max < 1) throw ArgumentError("k_max must be >= 1");
  const EnvelopeInfo env = true_envelope(p);
  std::vector<CertificateRow> rows;
  for (int k = 1; k <= k_max; ++k) {
    CertificateRow r;
    r.t = 2.0 * k * std::numbers::pi;
    r.s = (2.0 * k - 1.0) * std::numbers::pi;
    r.log_ratio = log_transition_ms_u(p, r.t, r.s) + env.alpha * (r.t - r.s);
    r.ratio = std::exp(r.log_ratio);
    rows.push_back(r);
  }
  return rows;
}

CoefficientSpec example_spec(const ExampleParams& p) {
  p.validate();
  const std::string a = fmt_full(p.a);
  const std::string b = fmt_full(p.b);
  CoefficientSpec spec;
  spec.dim = 2;
  spec.A = MatrixFunction::parse("[[-" + a + " - " + b + "*t*sin(t), 0], [0, " + a + " + " + b + "*t*sin(t)]]", 2);
  spec.G = MatrixFunction::zero(2);
  spec.interval = Interval{Interval::Kind::RightHalfLine, 0.0};
  spec.a_bound = p.a + 100.0 * p.b;
  return spec;
}

double u_drift(const ExampleParams& p, double t) { return -p.a - p.b * t * std::sin(t); }

double u_diffusion(const ExampleParams& p, double t) {
  double c = std::cos(t);
  if (c < 0.0) {
    if (c < -1e-12) throw DomainError("sqrt(2b cos t) is not real at t = " + fmt6(t));
    c = 0.0;
  }
  return std::sqrt(2.0 * p.b * c) * std::exp(-p.a * t + p.b * t * std::cos(t));
}

MsNormCurve closed_form_curve(const ExampleParams& p, const std::vector<std::pair<double, double>>& pairs) {
  MsNormCurve curve;
  curve.points.reserve(pairs.size());
  for (const auto& [t, s] : pairs) {
    CurvePoint pt;
    pt.t = t;
    pt.s = s;
    pt.estimate = transition_ms_u(p, t, s);
    pt.std_error = 0.0;
    pt.n_effective = 1;
    curve.points.push_back(pt);
  }
  return curve;
}

void write_example_csv(std::ostream& os, const ExampleParams& p, const std::vector<std::pair<double, double>>& pairs) {
  const EnvelopeInfo env = true_envelope(p);
  write_row(os, {"t", "s", "transition_ms", "envelope", "slack"});
  for (const auto& [t, s] : pairs) {
    const double tr = transition_ms_u(p, t, s);
    const double en = std::exp(log_envelope(env, t, s));
    write_row(os, {fmt_full(t), fmt_full(s), fmt_full(tr), fmt_full(en), fmt_full(en - tr)});
  }
}

void write_certificate_csv(std::ostream& os, const std::vector<CertificateRow>& rows) {
  write_row(os, {"t", "s", "ratio", "log_ratio"});
  for (const auto& r : rows) write_row(os, {fmt_full(r.t), fmt_full(r.s), fmt_full(r.ratio), fmt_full(r.log_ratio)});
}

}  // namespace sdelab

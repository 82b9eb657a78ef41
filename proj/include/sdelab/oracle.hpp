#pragma once

#include <cstddef>
#include <iosfwd>
#include <utility>
#include <vector>

#include "sdelab/coefficients.hpp"
#include "sdelab/sde_engine.hpp"

namespace sdelab {

/// Parameters of the oscillating diagonal example
///   du = (-a - b t sin t) u dt + sqrt(2b cos t) e^{-at + bt cos t} dw
///   dv = ( a + b t sin t) v dt.
struct ExampleParams {
  double a = 4.0;
  double b = 1.0;

  /// Throws ArgumentError unless a > b > 0.
  void validate() const;
};

/// -2at + 2bt cos t, the log of E|u(t)|^2.
double log_ms_u(const ExampleParams& p, double t);
double ms_u(const ExampleParams& p, double t);
double ms_v(const ExampleParams& p, double t);

/// log of the transition mean square for t >= s >= 0.
double log_transition_ms_u(const ExampleParams& p, double t, double s);
/// e^{-2a(t-s) + 2b(t cos t - s cos s)}; ArgumentError if t < s or s < 0.
double transition_ms_u(const ExampleParams& p, double t, double s);
/// Companion for 0 <= t <= s with the signs flipped.
double transition_ms_v(const ExampleParams& p, double t, double s);

struct EnvelopeInfo {
  double alpha = 0.0;  // sharp: 2(a - b)
  double eps = 0.0;    // sharp: 4b
  double claimed_alpha = 0.0;  // published claim: 2(a - b)
  double claimed_eps = 0.0;    // published claim: 2b
  double audit_t = 0.0;        // claimed equality pair (4 pi, 3 pi)
  double audit_s = 0.0;
  double audit_log_transition = 0.0;
  double audit_log_claimed = 0.0;
  double audit_log_gap = 0.0;  // log_transition - log_claimed
};

EnvelopeInfo true_envelope(const ExampleParams& p);

/// log of the sharp envelope e^{-alpha (t-s) + eps s}.
double log_envelope(const EnvelopeInfo& env, double t, double s);

/// Pairs (2m pi, (2j+1) pi) with t > s and 1 <= m <= m_max.
std::vector<std::pair<double, double>> witness_pairs(int m_max);

struct CertificateRow {
  double t = 0.0;
  double s = 0.0;
  double ratio = 0.0;      // transition_ms_u(t,s) / e^{-alpha (t-s)}
  double log_ratio = 0.0;
};

/// Rows for (2k pi, (2k-1) pi), k = 1..k_max. ArgumentError if k_max < 1.
std::vector<CertificateRow> nonuniformity_certificate(const ExampleParams& p, int k_max);

/// The two-dimensional diagonal system with G = 0, on the right half line at 0.
/// a_bound is a + 100b, which covers the drift for t <= 100.
CoefficientSpec example_spec(const ExampleParams& p);

/// Scalar coefficients of the u-component. u_diffusion throws DomainError where
/// cos t < 0 (tiny negative values from rounding are clamped).
double u_drift(const ExampleParams& p, double t);
double u_diffusion(const ExampleParams& p, double t);

/// Exact curve of the u-block: estimate = transition_ms_u, std_error = 0.
MsNormCurve closed_form_curve(const ExampleParams& p, const std::vector<std::pair<double, double>>& pairs);

/// Columns t,s,transition_ms,envelope,slack with slack = envelope - transition_ms.
void write_example_csv(std::ostream& os, const ExampleParams& p, const std::vector<std::pair<double, double>>& pairs);
void write_certificate_csv(std::ostream& os, const std::vector<CertificateRow>& rows);

}  // namespace sdelab

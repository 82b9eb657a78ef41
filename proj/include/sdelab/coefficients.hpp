#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdelab/config.hpp"
#include "sdelab/expr.hpp"
#include "sdelab/linalg.hpp"

namespace sdelab {

/// The time interval I a system lives on, with its anchor t0.
struct Interval {
  enum class Kind { RightHalfLine, LeftHalfLine, WholeLine };

  Kind kind = Kind::RightHalfLine;
  double t0 = 0.0;

  bool contains(double t) const noexcept;

  /// "right:<t0>", "left:<t0>" or "whole:<t0>".
  static Interval parse(std::string_view text);
  std::string to_string() const;
};

enum class Coefficient { A, G, B, H, Btilde };

/// Drift/diffusion of the unperturbed system dx = A x dt + G x dw and the
/// perturbation (B, H) of dy = (A+B) y dt + (G+H) y dw, one scalar Brownian
/// driver. Immutable after construction.
struct CoefficientSpec {
  std::size_t dim = 1;
  MatrixFunction A;
  MatrixFunction G;
  std::optional<MatrixFunction> B;
  std::optional<MatrixFunction> H;
  double a_bound = 0.0;
  double g_bound = 0.0;
  double b_bound = 0.0;
  double h_bound = 0.0;
  double eps_decay = 0.0;
  Interval interval;

  /// Checks dim and that every matrix function has dimension dim.
  void validate() const;

  /// Reads dim, interval, A, G, B, H, a_bound, g_bound, b_bound, h_bound, eps_decay.
  /// G defaults to zero; B and H default to absent.
  static CoefficientSpec from_config(const ConfigFile& cfg);

  /// Keys consumed by from_config.
  static const std::vector<std::string>& config_keys();
};

/// Evaluates one coefficient at t. Btilde = B - G H with absent B or H taken as zero.
/// Throws DomainError if t is outside the interval and AbsentCoefficientError
/// if B or H is requested directly but absent.
Matrix eval(const CoefficientSpec& spec, Coefficient which, double t);

/// Drift and diffusion of the requested system at t (A+B, G+H when perturbed).
Matrix drift(const CoefficientSpec& spec, bool perturbed, double t);
Matrix diffusion(const CoefficientSpec& spec, bool perturbed, double t);

struct BoundReport {
  struct Entry {
    std::string name;
    bool present = false;
    double max_ratio = 0.0;   // max over grid of ||X(t)|| / envelope(t)
    double worst_time = 0.0;  // where max_ratio was attained
  };
  std::vector<Entry> entries;  // A, G, B, H in that order
  bool violation = false;      // some max_ratio > 1 + 1e-9
};

/// Envelopes: a_bound, g_bound, b_bound e^{-eps|t|}, h_bound e^{-eps|t|}.
/// Requires a non-empty grid inside the interval.
BoundReport verify_bounds(const CoefficientSpec& spec, std::span<const double> sample_grid);

}  // namespace sdelab

#include "sdelab/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdelab/errors.hpp"
#include "sdelab/linalg.hpp"

namespace sdelab {
namespace {

constexpr double kPivotTol = 1e-11;

struct Tableau {
  std::size_t rows = 0;  // constraint rows
  std::size_t cols = 0;  // variables, rhs stored separately
  std::vector<double> a;  // (rows + 1) x cols, last row = reduced costs
  std::vector<double> rhs;  // rows + 1, last = -objective
  std::vector<std::size_t> basis;

  double& at(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  void pivot(std::size_t r, std::size_t c) {
    const double inv = 1.0 / at(r, c);
    for (std::size_t j = 0; j < cols; ++j) at(r, j) *= inv;
    rhs[r] *= inv;
    at(r, c) = 1.0;
    for (std::size_t i = 0; i <= rows; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) at(i, j) -= f * at(r, j);
      rhs[i] -= f * rhs[r];
      at(i, c) = 0.0;
    }
    basis[r] = c;
  }

  // Minimises the cost row over columns [0, allowed). False if unbounded.
  bool run(std::size_t allowed, std::size_t& pivots) {
    const std::size_t cap = 50000 + 50 * cols;
    for (std::size_t it = 0; it < cap; ++it) {
      std::size_t enter = allowed;
      for (std::size_t j = 0; j < allowed; ++j) {
        if (at(rows, j) < -1e-10) {
          enter = j;
          break;
        }
      }
      if (enter == allowed) return true;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows; ++i)
        if (at(i, enter) > kPivotTol) best = std::min(best, rhs[i] / at(i, enter));
      if (!std::isfinite(best)) return false;
      std::size_t leave = rows;
      for (std::size_t i = 0; i < rows; ++i) {
        if (at(i, enter) > kPivotTol && rhs[i] / at(i, enter) <= best + 1e-13 * (1.0 + std::abs(best)) &&
            (leave == rows || basis[i] < basis[leave]))
          leave = i;
      }
      pivot(leave, enter);
      ++pivots;
    }
    throw Error("simplex iteration cap reached");
  }
};

}  // namespace

LpResult maximize_free(const std::vector<std::vector<double>>& rows, const std::vector<double>& rhs,
                       const std::vector<double>& c) {
  const std::size_t n = c.size();
  const std::size_t m = rows.size();
  if (rhs.size() != m) throw ArgumentError("maximize_free: rhs size mismatch");
  for (const auto& r : rows)
    if (r.size() != n) throw ArgumentError("maximize_free: row width mismatch");

  LpResult res;
  // Dual: variables y_0..y_{m-1}, artificials a_0..a_{n-1}; constraints sum_i rows[i][k] y_i = c_k.
  Tableau tb;
  tb.rows = n;
  tb.cols = m + n;
  tb.a.assign((n + 1) * tb.cols, 0.0);
  tb.rhs.assign(n + 1, 0.0);
  tb.basis.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double sign = c[k] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < m; ++i) tb.at(k, i) = sign * rows[i][k];
    tb.at(k, m + k) = 1.0;
    tb.rhs[k] = sign * c[k];
    tb.basis[k] = m + k;
  }
  // Phase 1 cost: sum of artificials, expressed in nonbasic terms.
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += tb.at(k, j);
    tb.at(n, j) = -s;
  }
  double rs = 0.0;
  for (std::size_t k = 0; k < n; ++k) rs += tb.rhs[k];
  tb.rhs[n] = -rs;

  tb.run(m + n, res.pivots);
  double scale = 1.0;
  for (double v : c) scale = std::max(scale, std::abs(v));
  if (-tb.rhs[n] > 1e-9 * scale) {
    res.status = LpResult::Status::Unbounded;
    return res;
  }

  // Drive basic artificials out where possible.
  for (std::size_t k = 0; k < n; ++k) {
    if (tb.basis[k] < m) continue;
    std::size_t best = m;
    double best_abs = kPivotTol;
    for (std::size_t j = 0; j < m; ++j) {
      if (std::abs(tb.at(k, j)) > best_abs) {
        best_abs = std::abs(tb.at(k, j));
        best = j;
      }
    }
    if (best == m) {
      res.status = LpResult::Status::Underdetermined;
      return res;
    }
    tb.pivot(k, best);
  }

  // Phase 2 cost: rhs.y
  for (std::size_t j = 0; j < tb.cols; ++j) tb.at(n, j) = j < m ? rhs[j] : 0.0;
  tb.rhs[n] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double cb = rhs[tb.basis[k]];
    if (cb == 0.0) continue;
    for (std::size_t j = 0; j < tb.cols; ++j) tb.at(n, j) -= cb * tb.at(k, j);
    tb.rhs[n] -= cb * tb.rhs[k];
  }
  if (!tb.run(m, res.pivots)) {
    res.status = LpResult::Status::Infeasible;
    return res;
  }

  // Complementary slackness: basic dual columns are tight primal rows.
  Matrix ab(n, n);
  std::vector<double> bb(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) ab(k, j) = rows[tb.basis[k]][j];
    bb[k] = rhs[tb.basis[k]];
  }
  auto inv = inverse(ab);
  if (!inv) {
    res.status = LpResult::Status::Underdetermined;
    return res;
  }
  res.x.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) res.x[i] += (*inv)(i, j) * bb[j];
  res.objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) res.objective += c[i] * res.x[i];
  res.status = LpResult::Status::Optimal;
  return res;
}

}  // namespace sdelab

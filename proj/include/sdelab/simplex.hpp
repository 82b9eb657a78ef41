#pragma once

#include <cstddef>
#include <vector>

namespace sdelab {

struct LpResult {
  enum class Status { Optimal, Infeasible, Unbounded, Underdetermined };
  Status status = Status::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t pivots = 0;
};

/// maximize c.x subject to rows[i].x <= rhs[i], x free.
///
/// Meant for few variables and many constraints. The problem is solved
/// through its dual, min rhs.y subject to rows^T y = c, y >= 0, whose
/// tableau has one row per primal variable. Two-phase, Bland's rule.
/// The primal point is recovered from the optimal dual basis.
///
/// Unbounded: primal objective unbounded (dual infeasible).
/// Infeasible: primal infeasible (dual unbounded).
/// Underdetermined: the constraint rows do not span the variable space.
LpResult maximize_free(const std::vector<std::vector<double>>& rows, const std::vector<double>& rhs,
                       const std::vector<double>& c);

}  // namespace sdelab

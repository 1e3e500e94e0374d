#pragma once

#include <limits>
#include <vector>

#include "certbench/linalg.hpp"

namespace certbench {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

// minimize c^T x  subject to  a_i^T x (<=|>=|==) b_i  and  lower <= x <= upper.
// Bounds may be +-infinity.
struct LpProblem {
  int n = 0;
  Vec c;
  struct Row {
    Vec a;
    double b = 0.0;
    char sense = 'L';  // 'L' <=, 'G' >=, 'E' ==
  };
  std::vector<Row> rows;
  Vec lower, upper;

  void set_dims(int vars) {
    n = vars;
    c.assign(vars, 0.0);
    lower.assign(vars, -std::numeric_limits<double>::infinity());
    upper.assign(vars, std::numeric_limits<double>::infinity());
  }
};

struct LpResult {
  LpStatus status = LpStatus::IterationLimit;
  double objective = 0.0;
  Vec x;  // structural variables, valid when status == Optimal
  int iterations = 0;
};

// Bounded-variable revised simplex: dense basis inverse with periodic
// refactorization, Dantzig pricing with a Bland fallback after a stall.
LpResult lp_solve(const LpProblem& p, int max_iters = 50000);

}  // namespace certbench

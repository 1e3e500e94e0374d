#include "certbench/lp.hpp"

#include <algorithm>
#include <cmath>

#include "certbench/errors.hpp"

namespace certbench {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDualTol = 1e-9;
constexpr double kPivTol = 1e-10;
constexpr double kFeasTol = 1e-9;
constexpr int kRefactorEvery = 64;
constexpr int kStallLimit = 400;

enum class VStat { Basic, AtLower, AtUpper, FreeZero };

// Column-oriented view of the equality system  A x + s (+ t) = b.
struct Work {
  int n = 0;        // structural
  int m = 0;        // rows
  int total = 0;    // n + m slacks + m artificials
  const LpProblem* p = nullptr;
  Vec lb, ub;       // bounds per column
  Vec cost;         // current phase objective
  std::vector<VStat> stat;
  std::vector<int> basis;       // column in basis position i
  std::vector<double> binv;     // m x m dense inverse
  Vec xb;                       // basic values
  Vec nb_val;                   // value of each nonbasic column

  double col(int r, int j) const {
    if (j < n) return p->rows[r].a[j];
    if (j < n + m) return j - n == r ? 1.0 : 0.0;   // slack
    return j - n - m == r ? 1.0 : 0.0;              // artificial
  }

  // w = B^-1 * A_j
  void ftran(int j, Vec& w) const {
    if (j >= n) {
      const int r = j < n + m ? j - n : j - n - m;
      for (int i = 0; i < m; ++i) w[i] = binv[static_cast<size_t>(i) * m + r];
      return;
    }
    std::fill(w.begin(), w.end(), 0.0);
    const auto& rows = p->rows;
    for (int r = 0; r < m; ++r) {
      const double a = rows[r].a[j];
      if (a == 0.0) continue;
      for (int i = 0; i < m; ++i)
        w[i] += binv[static_cast<size_t>(i) * m + r] * a;
    }
  }

  double nonbasic_value(int j) const {
    switch (stat[j]) {
      case VStat::AtLower: return lb[j];
      case VStat::AtUpper: return ub[j];
      default: return 0.0;
    }
  }

  void compute_basics() {
    Vec rhs(m);
    for (int r = 0; r < m; ++r) rhs[r] = p->rows[r].b;
    for (int j = 0; j < total; ++j) {
      if (stat[j] == VStat::Basic) continue;
      const double v = nonbasic_value(j);
      if (v == 0.0) continue;
      if (j < n) {
        for (int r = 0; r < m; ++r) rhs[r] -= p->rows[r].a[j] * v;
      } else {
        const int r = j < n + m ? j - n : j - n - m;
        rhs[r] -= v;
      }
    }
    for (int i = 0; i < m; ++i)
      xb[i] = dot(binv.data() + static_cast<size_t>(i) * m, rhs.data(), m);
  }

  // rebuild binv from scratch; returns false when the basis is singular
  bool refactor() {
    std::vector<double> mat(static_cast<size_t>(m) * 2 * m, 0.0);
    for (int i = 0; i < m; ++i) {
      for (int r = 0; r < m; ++r)
        mat[static_cast<size_t>(r) * 2 * m + i] = col(r, basis[i]);
      mat[static_cast<size_t>(i) * 2 * m + m + i] = 1.0;
    }
    for (int c = 0; c < m; ++c) {
      int piv = -1;
      double best = 1e-12;
      for (int r = c; r < m; ++r) {
        const double v = std::fabs(mat[static_cast<size_t>(r) * 2 * m + c]);
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (piv < 0) return false;
      if (piv != c)
        for (int k = 0; k < 2 * m; ++k)
          std::swap(mat[static_cast<size_t>(piv) * 2 * m + k],
                    mat[static_cast<size_t>(c) * 2 * m + k]);
      const double d = mat[static_cast<size_t>(c) * 2 * m + c];
      for (int k = 0; k < 2 * m; ++k) mat[static_cast<size_t>(c) * 2 * m + k] /= d;
      for (int r = 0; r < m; ++r) {
        if (r == c) continue;
        const double f = mat[static_cast<size_t>(r) * 2 * m + c];
        if (f == 0.0) continue;
        for (int k = 0; k < 2 * m; ++k)
          mat[static_cast<size_t>(r) * 2 * m + k] -=
              f * mat[static_cast<size_t>(c) * 2 * m + k];
      }
    }
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c)
        binv[static_cast<size_t>(r) * m + c] =
            mat[static_cast<size_t>(r) * 2 * m + m + c];
    return true;
  }
};

struct PhaseOutcome {
  bool optimal = false;
  bool unbounded = false;
  int iterations = 0;
};

PhaseOutcome run_phase(Work& w, int& iter_budget) {
  PhaseOutcome out;
  const int m = w.m, total = w.total;
  Vec y(m), wcol(m);
  int since_refactor = 0, stall = 0;
  bool bland = false;

  while (iter_budget > 0) {
    --iter_budget;
    ++out.iterations;

    // y = c_B^T B^-1
    for (int c = 0; c < m; ++c) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) {
        const double cb = w.cost[w.basis[i]];
        if (cb != 0.0) s += cb * w.binv[static_cast<size_t>(i) * m + c];
      }
      y[c] = s;
    }

    // pricing
    int enter = -1;
    double best = 0.0;
    int enter_dir = 0;
    for (int j = 0; j < total; ++j) {
      if (w.stat[j] == VStat::Basic || w.lb[j] == w.ub[j]) continue;
      double d = w.cost[j];
      if (j < w.n) {
        for (int r = 0; r < m; ++r)
          if (y[r] != 0.0) d -= y[r] * w.p->rows[r].a[j];
      } else {
        const int r = j < w.n + m ? j - w.n : j - w.n - m;
        d -= y[r];
      }
      int dir = 0;
      double viol = 0.0;
      if (w.stat[j] == VStat::AtLower || w.stat[j] == VStat::FreeZero) {
        if (d < -kDualTol) {
          dir = +1;
          viol = -d;
        }
      }
      if (dir == 0 &&
          (w.stat[j] == VStat::AtUpper || w.stat[j] == VStat::FreeZero)) {
        if (d > kDualTol) {
          dir = -1;
          viol = d;
        }
      }
      if (dir == 0) continue;
      if (bland) {
        enter = j;
        enter_dir = dir;
        break;
      }
      if (viol > best) {
        best = viol;
        enter = j;
        enter_dir = dir;
      }
    }
    if (enter < 0) {
      out.optimal = true;
      return out;
    }

    w.ftran(enter, wcol);

    // ratio test: entering moves by delta >= 0 in direction enter_dir;
    // basic i changes by -enter_dir * wcol[i] * delta.
    double delta = kInf;
    if (std::isfinite(w.ub[enter]) && std::isfinite(w.lb[enter]))
      delta = w.ub[enter] - w.lb[enter];
    int leave = -1;          // basis position
    int leave_to_upper = 0;  // bound the leaving variable lands on
    double leave_piv = 0.0;
    for (int i = 0; i < m; ++i) {
      const double rate = -enter_dir * wcol[i];
      if (rate > kPivTol) {  // basic increases toward its upper bound
        const double cap = w.ub[w.basis[i]];
        if (std::isfinite(cap)) {
          const double r = (cap - w.xb[i]) / rate;
          const double rr = std::max(0.0, r);
          if (rr < delta - 1e-12 ||
              (rr < delta + 1e-12 &&
               (leave < 0 ||
                (bland ? w.basis[i] < w.basis[leave]
                       : std::fabs(wcol[i]) > std::fabs(leave_piv))))) {
            delta = rr;
            leave = i;
            leave_to_upper = 1;
            leave_piv = wcol[i];
          }
        }
      } else if (rate < -kPivTol) {  // basic decreases toward its lower bound
        const double cap = w.lb[w.basis[i]];
        if (std::isfinite(cap)) {
          const double r = (w.xb[i] - cap) / (-rate);
          const double rr = std::max(0.0, r);
          if (rr < delta - 1e-12 ||
              (rr < delta + 1e-12 &&
               (leave < 0 ||
                (bland ? w.basis[i] < w.basis[leave]
                       : std::fabs(wcol[i]) > std::fabs(leave_piv))))) {
            delta = rr;
            leave = i;
            leave_to_upper = 0;
            leave_piv = wcol[i];
          }
        }
      }
    }

    if (!std::isfinite(delta)) {
      out.unbounded = true;
      return out;
    }

    if (delta < 1e-11) {
      if (++stall > kStallLimit) bland = true;
    } else {
      stall = 0;
      bland = false;
    }

    if (leave < 0) {
      // bound flip: entering runs to its opposite bound
      w.stat[enter] =
          enter_dir > 0 ? VStat::AtUpper : VStat::AtLower;
      w.compute_basics();
      continue;
    }

    // pivot: update B^-1 with the eta transform
    const int lv = w.basis[leave];
    w.stat[lv] = leave_to_upper ? VStat::AtUpper : VStat::AtLower;
    if (!std::isfinite(w.nonbasic_value(lv)))
      w.stat[lv] = VStat::FreeZero;  // free variable leaves at value 0
    w.basis[leave] = enter;
    w.stat[enter] = VStat::Basic;

    if (++since_refactor >= kRefactorEvery) {
      since_refactor = 0;
      if (!w.refactor()) throw NumericError("lp: singular basis");
    } else {
      const double piv = wcol[leave];
      double* brow = w.binv.data() + static_cast<size_t>(leave) * m;
      for (int c = 0; c < m; ++c) brow[c] /= piv;
      for (int i = 0; i < m; ++i) {
        if (i == leave) continue;
        const double f = wcol[i];
        if (f == 0.0) continue;
        double* irow = w.binv.data() + static_cast<size_t>(i) * m;
        for (int c = 0; c < m; ++c) irow[c] -= f * brow[c];
      }
    }
    w.compute_basics();
  }
  return out;  // iteration limit
}

}  // namespace

LpResult lp_solve(const LpProblem& p, int max_iters) {
  const int n = p.n, m = static_cast<int>(p.rows.size());
  if (static_cast<int>(p.c.size()) != n ||
      static_cast<int>(p.lower.size()) != n ||
      static_cast<int>(p.upper.size()) != n)
    throw StructuralError("lp: inconsistent problem dimensions");
  for (const auto& r : p.rows)
    if (static_cast<int>(r.a.size()) != n)
      throw StructuralError("lp: row width mismatch");
  for (int j = 0; j < n; ++j)
    if (p.lower[j] > p.upper[j]) return {LpStatus::Infeasible, 0.0, {}, 0};

  Work w;
  w.n = n;
  w.m = m;
  w.total = n + 2 * m;
  w.p = &p;
  w.lb.assign(w.total, 0.0);
  w.ub.assign(w.total, 0.0);
  w.cost.assign(w.total, 0.0);
  w.stat.assign(w.total, VStat::AtLower);
  for (int j = 0; j < n; ++j) {
    w.lb[j] = p.lower[j];
    w.ub[j] = p.upper[j];
  }
  for (int r = 0; r < m; ++r) {
    const int s = n + r;
    switch (p.rows[r].sense) {
      case 'L':
        w.lb[s] = 0.0;
        w.ub[s] = kInf;
        break;
      case 'G':
        w.lb[s] = -kInf;
        w.ub[s] = 0.0;
        break;
      case 'E':
        w.lb[s] = w.ub[s] = 0.0;
        break;
      default:
        throw StructuralError("lp: unknown row sense");
    }
  }

  // nonbasic start: structural at the finite bound nearer zero
  for (int j = 0; j < n; ++j) {
    const bool lf = std::isfinite(w.lb[j]), uf = std::isfinite(w.ub[j]);
    if (lf && uf)
      w.stat[j] =
          std::fabs(w.lb[j]) <= std::fabs(w.ub[j]) ? VStat::AtLower : VStat::AtUpper;
    else if (lf)
      w.stat[j] = VStat::AtLower;
    else if (uf)
      w.stat[j] = VStat::AtUpper;
    else
      w.stat[j] = VStat::FreeZero;
  }

  // slack basis where feasible, artificials elsewhere
  w.basis.assign(m, -1);
  w.binv.assign(static_cast<size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) w.binv[static_cast<size_t>(i) * m + i] = 1.0;
  w.xb.assign(m, 0.0);

  Vec resid(m);
  for (int r = 0; r < m; ++r) {
    double v = p.rows[r].b;
    for (int j = 0; j < n; ++j) {
      const double xv = w.stat[j] == VStat::AtLower
                            ? w.lb[j]
                            : (w.stat[j] == VStat::AtUpper ? w.ub[j] : 0.0);
      if (xv != 0.0) v -= p.rows[r].a[j] * xv;
    }
    resid[r] = v;
  }
  bool need_phase1 = false;
  for (int r = 0; r < m; ++r) {
    const int s = n + r, t = n + m + r;
    if (resid[r] >= w.lb[s] - kFeasTol && resid[r] <= w.ub[s] + kFeasTol) {
      w.basis[r] = s;
      w.stat[s] = VStat::Basic;
      w.lb[t] = w.ub[t] = 0.0;  // artificial unused
    } else {
      // slack parks at the violated bound, artificial absorbs the rest
      const double clamp = resid[r] < w.lb[s] ? w.lb[s] : w.ub[s];
      w.stat[s] = resid[r] < w.lb[s] ? VStat::AtLower : VStat::AtUpper;
      const double tval = resid[r] - clamp;
      w.basis[r] = t;
      w.stat[t] = VStat::Basic;
      if (tval > 0.0) {
        w.lb[t] = 0.0;
        w.ub[t] = kInf;
        w.cost[t] = 1.0;
      } else {
        w.lb[t] = -kInf;
        w.ub[t] = 0.0;
        w.cost[t] = -1.0;
      }
      need_phase1 = true;
    }
  }
  w.compute_basics();

  LpResult res;
  int budget = max_iters;

  if (need_phase1) {
    PhaseOutcome ph1 = run_phase(w, budget);
    res.iterations += ph1.iterations;
    if (!ph1.optimal) {
      res.status = ph1.unbounded ? LpStatus::Infeasible : LpStatus::IterationLimit;
      return res;
    }
    double infeas = 0.0;
    for (int i = 0; i < m; ++i) {
      const int b = w.basis[i];
      if (b >= n + m) infeas += std::fabs(w.xb[i]);
    }
    for (int j = n + m; j < w.total; ++j)
      if (w.stat[j] != VStat::Basic) infeas += std::fabs(w.nonbasic_value(j));
    if (infeas > 1e-7) {
      res.status = LpStatus::Infeasible;
      return res;
    }
    // artificials are frozen at zero for phase 2
    for (int j = n + m; j < w.total; ++j) {
      w.cost[j] = 0.0;
      if (w.stat[j] != VStat::Basic) {
        w.lb[j] = w.ub[j] = 0.0;
        w.stat[j] = VStat::AtLower;
      } else {
        w.lb[j] = w.ub[j] = 0.0;
      }
    }
  }

  for (int j = 0; j < n; ++j) w.cost[j] = p.c[j];
  for (int j = n; j < w.total; ++j) w.cost[j] = 0.0;
  PhaseOutcome ph2 = run_phase(w, budget);
  res.iterations += ph2.iterations;
  if (ph2.unbounded) {
    res.status = LpStatus::Unbounded;
    return res;
  }
  if (!ph2.optimal) {
    res.status = LpStatus::IterationLimit;
    return res;
  }

  // recover structural solution
  res.x.assign(n, 0.0);
  for (int j = 0; j < n; ++j)
    if (w.stat[j] != VStat::Basic) res.x[j] = w.nonbasic_value(j);
  for (int i = 0; i < m; ++i)
    if (w.basis[i] < n) res.x[w.basis[i]] = w.xb[i];
  double obj = 0.0;
  for (int j = 0; j < n; ++j) obj += p.c[j] * res.x[j];
  res.objective = obj;
  res.status = LpStatus::Optimal;
  return res;
}

}  // namespace certbench

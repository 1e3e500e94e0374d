#include "support/ref_simplex.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace refsupport {

using certbench::LpProblem;
using certbench::Vec;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTol = 1e-9;

// One standard-form variable derived from a structural one.
struct VarMap {
  int orig = -1;
  double shift = 0.0;
  double sign = 1.0;  // x_orig = shift + sign * p
};

struct Tableau {
  int rows = 0, cols = 0;  // cols includes the rhs column
  std::vector<double> t;

  double& at(int r, int c) { return t[static_cast<size_t>(r) * cols + c]; }

  void pivot(int pr, int pc) {
    const double piv = at(pr, pc);
    for (int c = 0; c < cols; ++c) at(pr, c) /= piv;
    for (int r = 0; r < rows; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (int c = 0; c < cols; ++c) at(r, c) -= f * at(pr, c);
    }
  }
};

}  // namespace

RefLpResult ref_lp_solve(const LpProblem& p) {
  // 1. rewrite structural variables into nonnegative standard-form vars
  std::vector<VarMap> vars;
  std::vector<std::pair<int, double>> range_rows;  // (std var, width) for l..u
  for (int j = 0; j < p.n; ++j) {
    const double l = p.lower[j], u = p.upper[j];
    if (l > u) return {1, 0.0, {}};
    if (std::isfinite(l)) {
      vars.push_back({j, l, 1.0});
      if (std::isfinite(u))
        range_rows.push_back({static_cast<int>(vars.size()) - 1, u - l});
    } else if (std::isfinite(u)) {
      vars.push_back({j, u, -1.0});
    } else {
      vars.push_back({j, 0.0, 1.0});
      vars.push_back({j, 0.0, -1.0});
    }
  }
  const int nv = static_cast<int>(vars.size());

  // 2. assemble rows (original rows + range rows), all as  a p (sense) rhs
  struct StdRow {
    Vec a;
    double b;
    char sense;
  };
  std::vector<StdRow> rows;
  for (const auto& r : p.rows) {
    StdRow sr{Vec(nv, 0.0), r.b, r.sense};
    for (int v = 0; v < nv; ++v) {
      const double coef = r.a[vars[v].orig] * vars[v].sign;
      sr.a[v] = coef;
      sr.b -= r.a[vars[v].orig] * vars[v].shift;
    }
    rows.push_back(std::move(sr));
  }
  for (const auto& [v, width] : range_rows) {
    StdRow sr{Vec(nv, 0.0), width, 'L'};
    sr.a[v] = 1.0;
    rows.push_back(std::move(sr));
  }
  const int m = static_cast<int>(rows.size());

  // 3. make all rhs nonnegative, add slack/surplus + artificials
  int n_slack = 0;
  for (auto& r : rows) {
    if (r.b < 0.0) {
      for (auto& a : r.a) a = -a;
      r.b = -r.b;
      r.sense = r.sense == 'L' ? 'G' : (r.sense == 'G' ? 'L' : 'E');
    }
    if (r.sense != 'E') ++n_slack;
  }
  const int total = nv + n_slack + m;  // artificials for every row (lazy)
  Tableau tab;
  tab.rows = m + 1;
  tab.cols = total + 1;
  tab.t.assign(static_cast<size_t>(tab.rows) * tab.cols, 0.0);
  std::vector<int> basis(m, -1);
  int slack_at = nv;
  std::vector<int> art(m, -1);
  for (int i = 0; i < m; ++i) {
    for (int v = 0; v < nv; ++v) tab.at(i, v) = rows[i].a[v];
    tab.at(i, total) = rows[i].b;
    if (rows[i].sense == 'L') {
      tab.at(i, slack_at) = 1.0;
      basis[i] = slack_at++;
    } else if (rows[i].sense == 'G') {
      tab.at(i, slack_at) = -1.0;
      ++slack_at;
    }
    if (basis[i] < 0) {
      art[i] = nv + n_slack + i;
      tab.at(i, art[i]) = 1.0;
      basis[i] = art[i];
    }
  }

  auto run_simplex = [&](int limit_cols) -> int {
    // Bland's rule; objective row is tab row m (minimization, reduced costs).
    for (int iter = 0; iter < 100000; ++iter) {
      int pc = -1;
      for (int c = 0; c < limit_cols; ++c)
        if (tab.at(m, c) < -kTol) {
          pc = c;
          break;
        }
      if (pc < 0) return 0;  // optimal
      int pr = -1;
      double best = kInf;
      for (int r = 0; r < m; ++r) {
        const double a = tab.at(r, pc);
        if (a > kTol) {
          const double ratio = tab.at(r, total) / a;
          if (ratio < best - kTol ||
              (ratio < best + kTol && (pr < 0 || basis[r] < basis[pr]))) {
            best = ratio;
            pr = r;
          }
        }
      }
      if (pr < 0) return 2;  // unbounded
      tab.pivot(pr, pc);
      basis[pr] = pc;
    }
    return 3;
  };

  // phase 1: minimize the sum of artificials
  bool any_art = false;
  for (int i = 0; i < m; ++i)
    if (art[i] >= 0) any_art = true;
  if (any_art) {
    for (int i = 0; i < m; ++i)
      if (art[i] >= 0) tab.at(m, art[i]) = 1.0;
    for (int i = 0; i < m; ++i)
      if (basis[i] == art[i])
        for (int c = 0; c < tab.cols; ++c) tab.at(m, c) -= tab.at(i, c);
    const int st = run_simplex(total);
    if (st != 0) return {1, 0.0, {}};
    if (tab.at(m, total) < -1e-7) return {1, 0.0, {}};
    // drive any artificial still in the basis out (or confirm its row is null)
    for (int i = 0; i < m; ++i) {
      if (art[i] < 0 || basis[i] != art[i]) continue;
      int pc = -1;
      for (int c = 0; c < nv + n_slack; ++c)
        if (std::fabs(tab.at(i, c)) > 1e-8) {
          pc = c;
          break;
        }
      if (pc >= 0) {
        tab.pivot(i, pc);
        basis[i] = pc;
      }
    }
    // clear objective row
    for (int c = 0; c < tab.cols; ++c) tab.at(m, c) = 0.0;
  }

  // phase 2: real objective (in standard-form variables)
  for (int v = 0; v < nv; ++v)
    tab.at(m, v) = p.c[vars[v].orig] * vars[v].sign;
  for (int i = 0; i < m; ++i) {
    const double cb = tab.at(m, basis[i]);
    if (cb != 0.0)
      for (int c = 0; c < tab.cols; ++c) tab.at(m, c) -= cb * tab.at(i, c);
  }
  // artificials must not re-enter
  const int st = run_simplex(nv + n_slack);
  if (st == 2) return {2, 0.0, {}};
  if (st != 0) return {1, 0.0, {}};

  Vec pvals(total, 0.0);
  for (int i = 0; i < m; ++i)
    if (basis[i] < total) pvals[basis[i]] = tab.at(i, total);
  Vec x(p.n, 0.0);
  std::vector<char> seen(p.n, 0);
  for (int v = 0; v < nv; ++v) {
    if (!seen[vars[v].orig]) {
      seen[vars[v].orig] = 1;
      x[vars[v].orig] = vars[v].shift + vars[v].sign * pvals[v];
    } else {
      x[vars[v].orig] += vars[v].sign * pvals[v];
    }
  }
  double obj = 0.0;
  for (int j = 0; j < p.n; ++j) obj += p.c[j] * x[j];
  return {0, obj, x};
}

}  // namespace refsupport

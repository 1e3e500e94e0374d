#include "certbench/milp.hpp"

#include <algorithm>
#include <cmath>

#include "certbench/errors.hpp"
#include "certbench/lp.hpp"

namespace certbench {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPruneTol = 1e-11;

// Affine expression over the LP variable set.
struct LinExpr {
  Vec a;
  double c = 0.0;
};

// Relu network compiled to big-M form.  Variable layout: x (d), t, then a
// (z, a) pair per unstable relu.  Stable relus are substituted symbolically,
// so the LP only ever sees free neurons.
struct Compiled {
  int d = 0;
  int t_var = 0;
  int nvars = 0;
  Vec vlo, vhi;
  std::vector<LpProblem::Row> rows;   // big-M rows, shared by every subproblem
  std::vector<int> avars;             // binary column per unstable relu
  std::vector<LinExpr> logits;
};

void expr_bounds(const LinExpr& e, const Vec& vlo, const Vec& vhi, int nvars,
                 double& lo, double& hi) {
  lo = hi = e.c;
  for (int j = 0; j < nvars; ++j) {
    const double a = e.a[j];
    if (a > 0.0) {
      lo += a * vlo[j];
      hi += a * vhi[j];
    } else if (a < 0.0) {
      lo += a * vhi[j];
      hi += a * vlo[j];
    }
  }
}

Compiled compile_bigm(const Network& net, const Vec& xlo, const Vec& xhi,
                      double t_upper) {
  const int d = net.input_dim();
  const int cap = d + 1 + 2 * net.relu_count();
  Compiled cp;
  cp.d = d;
  cp.t_var = d;
  cp.nvars = d + 1;
  cp.vlo.assign(cap, 0.0);
  cp.vhi.assign(cap, 0.0);
  for (int i = 0; i < d; ++i) {
    cp.vlo[i] = xlo[i];
    cp.vhi[i] = xhi[i];
  }
  cp.vlo[cp.t_var] = 0.0;
  cp.vhi[cp.t_var] = t_upper;

  std::vector<LinExpr> cur(d);
  for (int i = 0; i < d; ++i) {
    cur[i].a.assign(cap, 0.0);
    cur[i].a[i] = 1.0;
  }

  Shape shape = net.input_shape;
  for (const auto& layer : net.layers) {
    if (const auto* l = std::get_if<Affine>(&layer)) {
      std::vector<LinExpr> nxt(l->w.rows);
      for (int r = 0; r < l->w.rows; ++r) {
        nxt[r].a.assign(cap, 0.0);
        nxt[r].c = l->b[r];
        for (int c = 0; c < l->w.cols; ++c) {
          const double w = l->w.at(r, c);
          if (w == 0.0) continue;
          nxt[r].c += w * cur[c].c;
          const double* src = cur[c].a.data();
          double* dst = nxt[r].a.data();
          for (int j = 0; j < cap; ++j) dst[j] += w * src[j];
        }
      }
      cur = std::move(nxt);
      shape = {l->w.rows};
    } else if (const auto* l = std::get_if<Conv2d>(&layer)) {
      const int h = shape[1], w = shape[2];
      const int ho = (h + 2 * l->pad - l->kh) / l->stride + 1;
      const int wo = (w + 2 * l->pad - l->kw) / l->stride + 1;
      std::vector<LinExpr> nxt(static_cast<size_t>(l->out_ch) * ho * wo);
      for (int co = 0; co < l->out_ch; ++co)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            LinExpr& e = nxt[(static_cast<size_t>(co) * ho + oy) * wo + ox];
            e.a.assign(cap, 0.0);
            e.c = l->bias[co];
            for (int ci = 0; ci < l->in_ch; ++ci)
              for (int ky = 0; ky < l->kh; ++ky)
                for (int kx = 0; kx < l->kw; ++kx) {
                  const int iy = oy * l->stride - l->pad + ky;
                  const int ix = ox * l->stride - l->pad + kx;
                  if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                  const double f =
                      l->filters[((static_cast<size_t>(co) * l->in_ch + ci) *
                                      l->kh +
                                  ky) *
                                     l->kw +
                                 kx];
                  if (f == 0.0) continue;
                  const LinExpr& s =
                      cur[(static_cast<size_t>(ci) * h + iy) * w + ix];
                  e.c += f * s.c;
                  for (int j = 0; j < cap; ++j) e.a[j] += f * s.a[j];
                }
          }
      cur = std::move(nxt);
      shape = {l->out_ch, ho, wo};
    } else if (std::holds_alternative<Relu>(layer)) {
      for (auto& e : cur) {
        double lo, hi;
        expr_bounds(e, cp.vlo, cp.vhi, cp.nvars, lo, hi);
        if (hi <= 0.0) {
          e.a.assign(cap, 0.0);
          e.c = 0.0;
        } else if (lo >= 0.0) {
          // identity, keep e
        } else {
          const int z = cp.nvars++;
          const int av = cp.nvars++;
          if (cp.nvars > cap)
            throw StructuralError("big-m compile: variable overflow");
          cp.vlo[z] = 0.0;
          cp.vhi[z] = hi;
          cp.vlo[av] = 0.0;
          cp.vhi[av] = 1.0;
          cp.avars.push_back(av);
          // s - z <= 0
          LpProblem::Row r1{e.a, -e.c, 'L'};
          r1.a[z] -= 1.0;
          cp.rows.push_back(std::move(r1));
          // z - hi * a <= 0
          LpProblem::Row r2{Vec(cap, 0.0), 0.0, 'L'};
          r2.a[z] = 1.0;
          r2.a[av] = -hi;
          cp.rows.push_back(std::move(r2));
          // z <= s - lo (1 - a), i.e.  z - s - lo a <= -lo
          LpProblem::Row r3{Vec(cap, 0.0), e.c - lo, 'L'};
          for (int j = 0; j < cap; ++j) r3.a[j] = -e.a[j];
          r3.a[z] += 1.0;
          r3.a[av] -= lo;
          cp.rows.push_back(std::move(r3));
          e.a.assign(cap, 0.0);
          e.a[z] = 1.0;
          e.c = 0.0;
        }
      }
    } else if (const auto* l = std::get_if<Reshape>(&layer)) {
      shape = l->target;
    } else {
      throw StructuralError(
          "exact solver supports relu/affine/conv networks only");
    }
  }
  cp.logits = std::move(cur);
  // trim coefficient vectors to the final variable count
  for (auto& r : cp.rows) r.a.resize(cp.nvars);
  for (auto& e : cp.logits) e.a.resize(cp.nvars);
  cp.vlo.resize(cp.nvars);
  cp.vhi.resize(cp.nvars);
  return cp;
}

struct BnbOutcome {
  double objective = kInf;
  Vec solution;  // full LP vector of the incumbent
  int64_t nodes = 0;
};

// DFS branch and bound over the relu binaries of `base`; minimizes base.c.
// `incumbent` enters as a global cutoff and leaves as the best value found.
void branch_and_bound(const LpProblem& base, const std::vector<int>& avars,
                      const MilpOptions& opt, int64_t& budget,
                      double& incumbent, Vec& best, BnbOutcome& out) {
  struct Node {
    std::vector<int8_t> fix;
  };
  std::vector<Node> stack;
  stack.push_back({std::vector<int8_t>(avars.size(), -1)});
  LpProblem p = base;

  while (!stack.empty()) {
    Node node = std::move(stack.back());
    stack.pop_back();
    if (--budget < 0) throw ResourceError("branch and bound: node budget");
    ++out.nodes;

    for (size_t r = 0; r < avars.size(); ++r) {
      const int av = avars[r];
      if (node.fix[r] < 0) {
        p.lower[av] = 0.0;
        p.upper[av] = 1.0;
      } else {
        p.lower[av] = p.upper[av] = node.fix[r];
      }
    }
    LpResult lp = lp_solve(p, opt.lp_iter_budget);
    if (lp.status == LpStatus::Infeasible) continue;
    if (lp.status != LpStatus::Optimal)
      throw ResourceError("branch and bound: lp did not converge");
    if (lp.objective >= incumbent - kPruneTol) continue;

    int frac = -1;
    double frac_dist = opt.int_tol;
    for (size_t r = 0; r < avars.size(); ++r) {
      if (node.fix[r] >= 0) continue;
      const double v = lp.x[avars[r]];
      const double dist = std::min(v, 1.0 - v);
      if (dist > frac_dist) {
        frac_dist = dist;
        frac = static_cast<int>(r);
      }
    }
    if (frac < 0) {
      incumbent = lp.objective;
      best = lp.x;
      continue;
    }
    const int8_t round_first =
        lp.x[avars[frac]] >= 0.5 ? int8_t{1} : int8_t{0};
    Node other = node;
    other.fix[frac] = static_cast<int8_t>(1 - round_first);
    node.fix[frac] = round_first;
    stack.push_back(std::move(other));
    stack.push_back(std::move(node));  // explored first (LIFO)
  }
  out.objective = incumbent;
  out.solution = best;
}

}  // namespace

FlipRadiusResult exact_flip_radius(const Network& net, const Vec& x0, int y,
                                   const Vec& dom_lo, const Vec& dom_hi,
                                   const MilpOptions& opt, double upper_hint,
                                   const Vec* witness_hint) {
  const int d = net.input_dim();
  if (static_cast<int>(x0.size()) != d || static_cast<int>(dom_lo.size()) != d ||
      static_cast<int>(dom_hi.size()) != d)
    throw StructuralError("flip radius: dimension mismatch");
  for (int i = 0; i < d; ++i)
    if (!(dom_lo[i] <= x0[i] && x0[i] <= dom_hi[i]))
      throw StructuralError("flip radius: x0 outside the domain");

  double t_upper = 0.0;
  for (int i = 0; i < d; ++i)
    t_upper = std::max(t_upper, std::max(x0[i] - dom_lo[i], dom_hi[i] - x0[i]));
  if (std::isfinite(upper_hint)) t_upper = std::min(t_upper, upper_hint);

  Vec xlo(d), xhi(d);
  for (int i = 0; i < d; ++i) {
    xlo[i] = std::max(dom_lo[i], x0[i] - t_upper);
    xhi[i] = std::min(dom_hi[i], x0[i] + t_upper);
  }

  Compiled cp = compile_bigm(net, xlo, xhi, t_upper);
  const int c = static_cast<int>(cp.logits.size());
  if (y < 0 || y >= c) throw StructuralError("flip radius: label out of range");

  LpProblem base;
  base.n = cp.nvars;
  base.c.assign(cp.nvars, 0.0);
  base.c[cp.t_var] = 1.0;
  base.lower = cp.vlo;
  base.upper = cp.vhi;
  base.rows = cp.rows;
  // |x_i - x0_i| <= t
  for (int i = 0; i < d; ++i) {
    LpProblem::Row r1{Vec(cp.nvars, 0.0), x0[i], 'L'};
    r1.a[i] = 1.0;
    r1.a[cp.t_var] = -1.0;
    base.rows.push_back(std::move(r1));
    LpProblem::Row r2{Vec(cp.nvars, 0.0), -x0[i], 'L'};
    r2.a[i] = -1.0;
    r2.a[cp.t_var] = -1.0;
    base.rows.push_back(std::move(r2));
  }

  FlipRadiusResult res;
  int64_t budget = opt.node_budget;
  double incumbent = kInf;
  Vec best;
  int best_class = -1;
  if (witness_hint && static_cast<int>(witness_hint->size()) == d) {
    // a verified witness seeds the cutoff (its class is re-derived on accept)
    MarginReport rep = margin(net, *witness_hint, y);
    double dist = 0.0;
    for (int i = 0; i < d; ++i)
      dist = std::max(dist, std::fabs((*witness_hint)[i] - x0[i]));
    if (rep.value <= 0.0 && dist <= t_upper + 1e-12) {
      incumbent = dist;
      best.assign(cp.nvars, 0.0);
      for (int i = 0; i < d; ++i) best[i] = (*witness_hint)[i];
      best[cp.t_var] = dist;
      best_class = rep.argmin_class;
    }
  }

  for (int k = 0; k < c; ++k) {
    if (k == y) continue;
    LpProblem p = base;
    LpProblem::Row flip{Vec(cp.nvars, 0.0), 0.0, 'L'};
    for (int j = 0; j < cp.nvars; ++j)
      flip.a[j] = cp.logits[y].a[j] - cp.logits[k].a[j];
    flip.b = cp.logits[k].c - cp.logits[y].c;
    p.rows.push_back(std::move(flip));

    const double before = incumbent;
    BnbOutcome bo;
    branch_and_bound(p, cp.avars, opt, budget, incumbent, best, bo);
    res.nodes += bo.nodes;
    if (incumbent < before) best_class = k;
  }

  if (std::isfinite(incumbent)) {
    res.radius = incumbent;
    res.witness.assign(best.begin(), best.begin() + d);
    res.witness_class = best_class;
  }
  return res;
}

MarginMinResult exact_margin_min(const Network& net, const PerturbationBox& box,
                                 int y, const MilpOptions& opt,
                                 const Vec* warm_start) {
  const int d = net.input_dim();
  if (static_cast<int>(box.x0.size()) != d)
    throw StructuralError("margin min: dimension mismatch");
  Vec xlo = box.lo(), xhi = box.hi();
  Compiled cp = compile_bigm(net, xlo, xhi, 0.0);
  const int c = static_cast<int>(cp.logits.size());
  if (y < 0 || y >= c) throw StructuralError("margin min: label out of range");

  LpProblem base;
  base.n = cp.nvars;
  base.c.assign(cp.nvars, 0.0);
  base.lower = cp.vlo;
  base.upper = cp.vhi;
  base.rows = cp.rows;

  double incumbent = kInf;
  Vec best;
  if (warm_start && static_cast<int>(warm_start->size()) == d) {
    bool inside = true;
    for (int i = 0; i < d; ++i)
      inside = inside && (*warm_start)[i] >= xlo[i] - 1e-12 &&
               (*warm_start)[i] <= xhi[i] + 1e-12;
    if (inside) {
      incumbent = margin(net, *warm_start, y).value;
      best.assign(cp.nvars, 0.0);
      for (int i = 0; i < d; ++i) best[i] = (*warm_start)[i];
    }
  }

  MarginMinResult res;
  int64_t budget = opt.node_budget;
  for (int k = 0; k < c; ++k) {
    if (k == y) continue;
    LpProblem p = base;
    double cshift = cp.logits[y].c - cp.logits[k].c;
    for (int j = 0; j < cp.nvars; ++j)
      p.c[j] = cp.logits[y].a[j] - cp.logits[k].a[j];
    // minimize mu_k - cshift, then add the constant back via the cutoff
    double inc_shifted = incumbent - cshift;
    BnbOutcome bo;
    branch_and_bound(p, cp.avars, opt, budget, inc_shifted, best, bo);
    res.nodes += bo.nodes;
    incumbent = std::min(incumbent, inc_shifted + cshift);
  }
  res.margin_min = incumbent;
  if (!best.empty()) res.witness.assign(best.begin(), best.begin() + d);
  return res;
}

}  // namespace certbench

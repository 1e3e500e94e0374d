#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "certbench/errors.hpp"
#include "certbench/gen.hpp"
#include "certbench/interval.hpp"
#include "certbench/milp.hpp"
#include "certbench/oracle.hpp"
#include "certbench/rng.hpp"

namespace certbench {
namespace {

Vec uniform_vec(Rng& rng, int n, double lo, double hi) {
  Vec v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

Mat normal_mat(Rng& rng, int rows, int cols, double sigma) {
  Mat m(rows, cols);
  for (double& x : m.a) x = sigma * rng.normal();
  return m;
}

Vec normal_vec(Rng& rng, int n, double sigma) {
  Vec v(static_cast<size_t>(n));
  for (double& x : v) x = sigma * rng.normal();
  return v;
}

bool same_mat(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols) return false;
  for (size_t i = 0; i < a.a.size(); ++i)
    if (a.a[i] != b.a[i]) return false;
  return true;
}

bool same_vec(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

bool close(double a, double b, double tol_rel) {
  return std::abs(a - b) <= tol_rel * std::max({1.0, std::abs(a), std::abs(b)});
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double box_margin_ibp(const Instance& inst) {
  PerturbationBox box{inst.x0, inst.eps};
  return ibp_margin_lower(inst.net, box_of(box), inst.label);
}

// ---------------------------------------------------------------------------
// Mutually exclusive activation pairs.
//
// Layer 1 holds P preactivation pairs z_{p,1} = w_p.(x - x0) + g_p and
// z_{p,2} = -w_p.(x - x0) + g_p.  Their sum is the constant 2 g_p, so
// max(z1, z2) >= g_p everywhere even though both ReLUs straddle zero over the
// box once g_p < eps |w_p|_1.  The target logit min_p max(relu z1, relu z2)
// therefore has exact global minimum min_p g_p, attained at x0, while the
// competing logit is identically zero.
// ---------------------------------------------------------------------------

// Appends the max/min aggregation network after the pair layer.  The max of a
// pair and the running min across pairs both use the identities
// max{a,b} = b + relu(a-b) and min{a,b} = a - relu(a-b), with the carried
// operand routed through an extra ReLU unit (valid because every carried
// value is nonnegative).
void append_meap_tail(Network& net, int pairs) {
  struct Expr {
    Vec c;
    double b = 0.0;
  };
  // r_p = relu(z1 - z2)... happens inside layer 2: emit a (2P x 2P) affine
  // whose rows alternate (z1 - z2, carry z2), then read r_p off as the sum of
  // the two ReLU outputs.
  const int w1 = 2 * pairs;
  Mat m2(w1, w1);
  for (int p = 0; p < pairs; ++p) {
    m2.at(2 * p, 2 * p) = 1.0;
    m2.at(2 * p, 2 * p + 1) = -1.0;
    m2.at(2 * p + 1, 2 * p + 1) = 1.0;
  }
  net.layers.push_back(Affine{std::move(m2), Vec(static_cast<size_t>(w1))});
  net.layers.push_back(Relu{});

  std::vector<Expr> vals(static_cast<size_t>(pairs));
  for (int p = 0; p < pairs; ++p) {
    vals[static_cast<size_t>(p)].c.assign(static_cast<size_t>(w1), 0.0);
    vals[static_cast<size_t>(p)].c[static_cast<size_t>(2 * p)] = 1.0;
    vals[static_cast<size_t>(p)].c[static_cast<size_t>(2 * p + 1)] = 1.0;
  }

  while (vals.size() > 1) {
    const size_t nv = vals.size();
    const size_t keep = nv / 2 + (nv % 2);
    const int width = static_cast<int>(nv / 2 * 2 + nv % 2);
    Mat m(width, static_cast<int>(vals[0].c.size()));
    Vec b(static_cast<size_t>(width), 0.0);
    int r = 0;
    std::vector<Expr> next(keep);
    for (size_t i = 0; i + 1 < nv; i += 2) {
      // row r: difference v_i - v_{i+1}; row r+1: carry v_i.
      for (size_t j = 0; j < vals[i].c.size(); ++j) {
        m.at(r, static_cast<int>(j)) = vals[i].c[j] - vals[i + 1].c[j];
        m.at(r + 1, static_cast<int>(j)) = vals[i].c[j];
      }
      b[static_cast<size_t>(r)] = vals[i].b - vals[i + 1].b;
      b[static_cast<size_t>(r + 1)] = vals[i].b;
      Expr e;
      e.c.assign(static_cast<size_t>(width), 0.0);
      e.c[static_cast<size_t>(r + 1)] = 1.0;
      e.c[static_cast<size_t>(r)] = -1.0;
      next[i / 2] = std::move(e);
      r += 2;
    }
    if (nv % 2) {
      const Expr& tailv = vals[nv - 1];
      for (size_t j = 0; j < tailv.c.size(); ++j)
        m.at(r, static_cast<int>(j)) = tailv.c[j];
      b[static_cast<size_t>(r)] = tailv.b;
      Expr e;
      e.c.assign(static_cast<size_t>(width), 0.0);
      e.c[static_cast<size_t>(r)] = 1.0;
      next[keep - 1] = std::move(e);
    }
    net.layers.push_back(Affine{std::move(m), std::move(b)});
    net.layers.push_back(Relu{});
    vals = std::move(next);
  }

  Mat out(2, static_cast<int>(vals[0].c.size()));
  for (size_t j = 0; j < vals[0].c.size(); ++j)
    out.at(0, static_cast<int>(j)) = vals[0].c[j];
  net.layers.push_back(Affine{std::move(out), Vec{vals[0].b, 0.0}});
}

}  // namespace

Instance gen_meap(const GenParams& p, std::uint64_t seed, std::string id) {
  const int d = static_cast<int>(param(p, "dim", 16));
  const int pairs = static_cast<int>(param(p, "pairs", 6));
  const double eps = param(p, "eps", 0.1);
  const double gamma0 = param(p, "gamma", 0.05);
  const double spread = param(p, "gamma_spread", 0.5);
  const double ratio = param(p, "instability_ratio", 2.2);
  if (d < 1 || pairs < 1 || eps <= 0.0 || gamma0 <= 0.0 || ratio <= 0.0)
    throw ConfigError("meap: dim/pairs/eps/gamma/instability_ratio invalid");

  Rng rng(seed);
  Instance inst;
  inst.id = std::move(id);
  inst.x0 = uniform_vec(rng, d, -1.0, 1.0);
  inst.label = 0;
  inst.eps = eps;

  Mat w1(2 * pairs, d);
  Vec b1(static_cast<size_t>(2 * pairs));
  Vec gamma_p(static_cast<size_t>(pairs)), wl1(static_cast<size_t>(pairs));
  for (int pi = 0; pi < pairs; ++pi) {
    Vec dir = normal_vec(rng, d, 1.0);
    double l1 = l1_norm(dir);
    if (l1 < 1e-12) {
      dir.assign(static_cast<size_t>(d), 0.0);
      dir[0] = 1.0;
      l1 = 1.0;
    }
    const double g = gamma0 * (1.0 + spread * rng.uniform());
    const double target_l1 = ratio * g / eps;
    const double scale = target_l1 / l1;
    double s0 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double wj = dir[static_cast<size_t>(j)] * scale;
      w1.at(2 * pi, j) = wj;
      w1.at(2 * pi + 1, j) = -wj;
      s0 += wj * inst.x0[static_cast<size_t>(j)];
    }
    b1[static_cast<size_t>(2 * pi)] = g - s0;
    b1[static_cast<size_t>(2 * pi + 1)] = g + s0;
    gamma_p[static_cast<size_t>(pi)] =
        (b1[static_cast<size_t>(2 * pi)] + b1[static_cast<size_t>(2 * pi + 1)]) / 2.0;
    wl1[static_cast<size_t>(pi)] = l1_row(w1, 2 * pi);
  }

  inst.net.input_shape = {d};
  inst.net.layers.push_back(Affine{std::move(w1), std::move(b1)});
  inst.net.layers.push_back(Relu{});
  append_meap_tail(inst.net, pairs);
  inst.net.validate();

  double margin_min = gamma_p[0];
  int unstable = 0;
  for (int pi = 0; pi < pairs; ++pi) {
    margin_min = std::min(margin_min, gamma_p[static_cast<size_t>(pi)]);
    if (gamma_p[static_cast<size_t>(pi)] <
        eps * wl1[static_cast<size_t>(pi)])
      ++unstable;
  }

  Certificate& c = inst.cert;
  c.family = kFamilyMeap;
  c.robust = true;
  c.scalars["pairs"] = pairs;
  c.scalars["margin_min"] = margin_min;
  c.scalars["margin_x0"] = margin(inst.net, inst.x0, inst.label).value;
  c.scalars["unstable_pairs"] = unstable;
  c.scalars["ibp_margin_lower"] = box_margin_ibp(inst);
  c.vectors["gamma_p"] = std::move(gamma_p);
  c.vectors["w_l1"] = std::move(wl1);

  CheckReport rep = check_certificate(inst);
  if (!rep.ok())
    throw GenerationError("meap " + inst.id + ": " + rep.failures.front());
  return inst;
}

CheckReport check_meap(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const int pairs = static_cast<int>(c.scalar("pairs"));
  const Vec* gp = c.vector("gamma_p");
  const Vec* wl1 = c.vector("w_l1");
  if (pairs < 1 || gp == nullptr || wl1 == nullptr ||
      gp->size() != static_cast<size_t>(pairs) ||
      wl1->size() != static_cast<size_t>(pairs)) {
    rep.fail("pair bookkeeping missing or sized wrong");
    return rep;
  }
  if (!c.robust) rep.fail("family certifies a global lower bound; robust flag off");
  const auto* l1p = inst.net.layers.empty()
                        ? nullptr
                        : std::get_if<Affine>(&inst.net.layers[0]);
  if (l1p == nullptr || l1p->w.rows != 2 * pairs ||
      l1p->w.cols != static_cast<int>(inst.x0.size())) {
    rep.fail("first layer is not the expected pair layer");
    return rep;
  }
  double margin_min = std::numeric_limits<double>::infinity();
  int unstable = 0;
  for (int pi = 0; pi < pairs; ++pi) {
    for (int j = 0; j < l1p->w.cols; ++j)
      if (l1p->w.at(2 * pi + 1, j) != -l1p->w.at(2 * pi, j)) {
        rep.fail("pair " + std::to_string(pi) +
                 " rows are not exact negations");
        return rep;
      }
    const double g = (l1p->b[static_cast<size_t>(2 * pi)] +
                      l1p->b[static_cast<size_t>(2 * pi + 1)]) /
                     2.0;
    if (!(g > 0.0))
      rep.fail("pair " + std::to_string(pi) + " bound " + fmt(g) +
               " is not positive");
    if (!close(g, (*gp)[static_cast<size_t>(pi)], 1e-12))
      rep.fail("pair bound drifted from certificate: " + fmt(g) + " vs " +
               fmt((*gp)[static_cast<size_t>(pi)]));
    const double l1 = l1_row(l1p->w, 2 * pi);
    if (!close(l1, (*wl1)[static_cast<size_t>(pi)], 1e-12))
      rep.fail("pair weight norm drifted from certificate");
    margin_min = std::min(margin_min, g);
    if (g < inst.eps * l1) ++unstable;
  }
  if (!close(margin_min, c.scalar("margin_min"), 1e-12))
    rep.fail("margin_min mismatch: recomputed " + fmt(margin_min));
  if (unstable != static_cast<int>(c.scalar("unstable_pairs")))
    rep.fail("unstable pair count mismatch");

  // The aggregation tail is a fixed function of P: rebuild and compare.
  Network expect;
  expect.input_shape = inst.net.input_shape;
  expect.layers.push_back(*l1p);
  expect.layers.push_back(Relu{});
  append_meap_tail(expect, pairs);
  if (expect.layers.size() != inst.net.layers.size()) {
    rep.fail("aggregation tail has unexpected depth");
    return rep;
  }
  for (size_t l = 1; l < expect.layers.size(); ++l) {
    if (expect.layers[l].index() != inst.net.layers[l].index()) {
      rep.fail("aggregation tail layer kinds diverge at " + std::to_string(l));
      return rep;
    }
    const auto* ea = std::get_if<Affine>(&expect.layers[l]);
    const auto* na = std::get_if<Affine>(&inst.net.layers[l]);
    if (ea && (!same_mat(ea->w, na->w) || !same_vec(ea->b, na->b))) {
      rep.fail("aggregation tail weights tampered at layer " +
               std::to_string(l));
      return rep;
    }
  }

  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("margin_x0"), 1e-9))
    rep.fail("margin at x0 drifted: " + fmt(m0));
  if (!close(m0, margin_min, 1e-9))
    rep.fail("margin at x0 " + fmt(m0) + " should equal the pair bound " +
             fmt(margin_min));
  const double ibp = box_margin_ibp(inst);
  if (!close(ibp, c.scalar("ibp_margin_lower"), 1e-12))
    rep.fail("stored interval bound drifted: recomputed " + fmt(ibp));
  if (pairs >= 2 && unstable == pairs && !(ibp < 0.0))
    rep.fail("interval bound should be negative for >=2 unstable pairs, got " +
             fmt(ibp));
  return rep;
}

// ---------------------------------------------------------------------------
// Exact flip radius.  A small random ReLU net is solved to optimality for the
// minimal l-inf distortion r* that flips the label inside the declared
// domain; eps is then a fraction of r*, giving instances that sit a known
// distance from the decision boundary on either side.
// ---------------------------------------------------------------------------

Instance gen_exact_radius(const GenParams& p, std::uint64_t seed,
                          std::string id) {
  const int d = static_cast<int>(param(p, "dim", 3));
  const int width = static_cast<int>(param(p, "width", 6));
  const int depth = static_cast<int>(param(p, "depth", 2));
  const int classes = static_cast<int>(param(p, "classes", 2));
  const double eps_frac = param(p, "eps_frac", 0.9);
  const double dom_r = param(p, "dom_radius", 1.0);
  const int retries = static_cast<int>(param(p, "retries", 40));
  MilpOptions mopt;
  mopt.node_budget = static_cast<int64_t>(param(p, "node_budget", 400000));
  if (d < 1 || width < 1 || depth < 1 || classes < 2 || eps_frac <= 0.0 ||
      eps_frac == 1.0 || dom_r <= 0.0)
    throw ConfigError("exact_radius: bad dimensions or eps_frac");

  for (int attempt = 0; attempt < retries; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(attempt)));
    Instance inst;
    inst.id = id;
    inst.x0 = uniform_vec(rng, d, -0.4, 0.4);

    inst.net.input_shape = {d};
    int fan = d;
    for (int l = 0; l < depth; ++l) {
      inst.net.layers.push_back(
          Affine{normal_mat(rng, width, fan, 1.6 / std::sqrt(double(fan))),
                 normal_vec(rng, width, 0.25)});
      inst.net.layers.push_back(Relu{});
      fan = width;
    }
    inst.net.layers.push_back(
        Affine{normal_mat(rng, classes, fan, 1.6 / std::sqrt(double(fan))),
               normal_vec(rng, classes, 0.25)});

    MarginReport m0r;
    {
      Evaluation ev = forward_eval(inst.net, inst.x0);
      int best = 0;
      for (int k = 1; k < classes; ++k)
        if (ev.logits()[static_cast<size_t>(k)] >
            ev.logits()[static_cast<size_t>(best)])
          best = k;
      inst.label = best;
      m0r = margin(inst.net, inst.x0, inst.label);
    }
    if (!(m0r.value > 1e-3)) continue;

    inst.dom_lo.assign(inst.x0.begin(), inst.x0.end());
    inst.dom_hi.assign(inst.x0.begin(), inst.x0.end());
    for (int j = 0; j < d; ++j) {
      inst.dom_lo[static_cast<size_t>(j)] -= dom_r;
      inst.dom_hi[static_cast<size_t>(j)] += dom_r;
    }

    AttackOptions aopt;
    aopt.random_samples = 1500;
    aopt.restarts = 12;
    aopt.steps = 120;
    aopt.seed = mix_seed(seed, 0x9b0be5, static_cast<uint64_t>(attempt));
    RadiusProbe probe = probe_flip_radius(inst.net, inst.x0, inst.label,
                                          inst.dom_lo, inst.dom_hi, aopt);

    FlipRadiusResult res;
    try {
      res = exact_flip_radius(inst.net, inst.x0, inst.label, inst.dom_lo,
                              inst.dom_hi, mopt,
                              std::isfinite(probe.upper)
                                  ? probe.upper
                                  : std::numeric_limits<double>::infinity(),
                              probe.witness.empty() ? nullptr : &probe.witness);
    } catch (const ResourceError&) {
      continue;  // this draw is too hard for the budget; sample another net
    }
    if (!std::isfinite(res.radius) || res.witness.empty()) continue;
    const double rstar = res.radius;
    if (rstar < 1e-4 || rstar > 0.97 * dom_r) continue;
    const double eps = eps_frac * rstar;
    if (eps >= 0.97 * dom_r) continue;
    inst.eps = eps;

    Certificate& c = inst.cert;
    c.family = kFamilyExactRadius;
    c.robust = eps_frac < 1.0;
    c.scalars["r_star"] = rstar;
    c.scalars["eps_frac"] = eps_frac;
    c.scalars["margin_x0"] = m0r.value;
    c.scalars["flip_class"] = res.witness_class;
    c.scalars["milp_nodes"] = static_cast<double>(res.nodes);
    c.vectors["flip_witness"] = res.witness;

    if (!c.robust) {
      // The radius witness sits on the decision boundary; push it past it so
      // the stored counterexample is strictly misclassified.
      Vec adv;
      const double max_scale = 0.999 * eps / rstar;
      for (double grow : {1.001, 1.005, 1.02, 1.05, 1.1, 1.2, 1.5}) {
        if (grow > max_scale) break;
        Vec cand(inst.x0);
        for (size_t j = 0; j < cand.size(); ++j)
          cand[j] += grow * (res.witness[j] - inst.x0[j]);
        if (margin(inst.net, cand, inst.label).value < -1e-12) {
          adv = std::move(cand);
          break;
        }
      }
      if (adv.empty()) {
        AttackOptions fin;
        fin.random_samples = 4000;
        fin.restarts = 30;
        fin.steps = 200;
        fin.seed = mix_seed(seed, 0xF1091, static_cast<uint64_t>(attempt));
        AttackResult ar = attack_search(inst.net, PerturbationBox{inst.x0, eps},
                                        inst.label, fin);
        if (ar.success && margin(inst.net, ar.best_x, inst.label).value < 0.0)
          adv = ar.best_x;
      }
      if (adv.empty()) continue;
      c.vectors["witness"] = std::move(adv);
    }

    CheckReport rep = check_certificate(inst);
    if (!rep.ok())
      throw GenerationError("exact_radius " + inst.id + ": " +
                            rep.failures.front());
    return inst;
  }
  throw GenerationError("exact_radius " + id +
                        ": no viable network within retry budget");
}

CheckReport check_exact_radius(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const double rstar = c.scalar("r_star");
  const double frac = c.scalar("eps_frac");
  const Vec* fw = c.vector("flip_witness");
  if (!(rstar > 0.0) || !std::isfinite(rstar)) rep.fail("r_star not positive");
  if (!(frac > 0.0)) rep.fail("eps_frac not positive");
  if (inst.dom_lo.empty() || inst.dom_hi.empty())
    rep.fail("radius instances must declare their input domain");
  if (fw == nullptr || fw->size() != inst.x0.size()) {
    rep.fail("flip witness missing");
    return rep;
  }
  for (const Layer& l : inst.net.layers)
    if (!std::holds_alternative<Affine>(l) && !std::holds_alternative<Relu>(l) &&
        !std::holds_alternative<Conv2d>(l) &&
        !std::holds_alternative<Reshape>(l)) {
      rep.fail("family only admits affine/conv/relu networks");
      return rep;
    }
  double dist = 0.0;
  for (size_t j = 0; j < fw->size(); ++j)
    dist = std::max(dist, std::abs((*fw)[j] - inst.x0[j]));
  if (!close(dist, rstar, 1e-9))
    rep.fail("flip witness distance " + fmt(dist) + " != r_star " +
             fmt(rstar));
  const double mw = margin(inst.net, *fw, inst.label).value;
  if (mw > 1e-7 * std::max(1.0, std::abs(c.scalar("margin_x0"))))
    rep.fail("flip witness margin " + fmt(mw) + " is not on the boundary");
  if (!close(inst.eps, frac * rstar, 1e-12))
    rep.fail("eps " + fmt(inst.eps) + " != eps_frac * r_star");
  if (c.robust != (inst.eps < rstar))
    rep.fail("robust flag contradicts eps vs r_star");
  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("margin_x0"), 1e-9))
    rep.fail("margin at x0 drifted: " + fmt(m0));
  return rep;
}

// ---------------------------------------------------------------------------
// Constant-on-box embedding.  Per input coordinate the two hinge units
// relu(alpha_i - x_i) and relu(x_i - beta_i) are identically zero on
// [alpha_i, beta_i] >= the perturbation interval, so the latent layer sees
// the constant vector t and every downstream logit is literally constant on
// the box: the margin at x0 *is* the exact minimum margin.
// ---------------------------------------------------------------------------

Instance gen_const_box(const GenParams& p, std::uint64_t seed, std::string id) {
  const int d = static_cast<int>(param(p, "dim", 12));
  const int dz = static_cast<int>(param(p, "latent", 8));
  const int psi_width = static_cast<int>(param(p, "psi_width", 16));
  const int psi_depth = static_cast<int>(param(p, "psi_depth", 2));
  const int classes = static_cast<int>(param(p, "classes", 3));
  const double gamma = param(p, "gamma", 0.25);
  const double eps = param(p, "eps", 0.12);
  const double slack = param(p, "slack", 0.5);
  if (d < 1 || dz < 1 || psi_width < 1 || psi_depth < 1 || classes < 2)
    throw ConfigError("const_box: bad dimensions");
  if (!(gamma > 0.0) || !(eps > 0.0) || !(slack > 0.0))
    throw ConfigError("const_box: gamma, eps and slack must be positive");

  Rng rng(seed);
  Instance inst;
  inst.id = std::move(id);
  inst.x0 = uniform_vec(rng, d, -1.0, 1.0);
  inst.label = 0;
  inst.eps = eps;

  Vec alpha(static_cast<size_t>(d)), beta(static_cast<size_t>(d));
  Mat m1(2 * d, d);
  Vec b1(static_cast<size_t>(2 * d));
  for (int i = 0; i < d; ++i) {
    alpha[static_cast<size_t>(i)] =
        inst.x0[static_cast<size_t>(i)] - eps * (1.0 + slack * rng.uniform(0.5, 1.0));
    beta[static_cast<size_t>(i)] =
        inst.x0[static_cast<size_t>(i)] + eps * (1.0 + slack * rng.uniform(0.5, 1.0));
    m1.at(2 * i, i) = -1.0;
    b1[static_cast<size_t>(2 * i)] = alpha[static_cast<size_t>(i)];
    m1.at(2 * i + 1, i) = 1.0;
    b1[static_cast<size_t>(2 * i + 1)] = -beta[static_cast<size_t>(i)];
  }
  Vec t = normal_vec(rng, dz, 1.0);

  inst.net.input_shape = {d};
  inst.net.layers.push_back(Affine{std::move(m1), std::move(b1)});
  inst.net.layers.push_back(Relu{});
  inst.net.layers.push_back(Affine{normal_mat(rng, dz, 2 * d, 0.5), t});

  int fan = dz;
  for (int l = 0; l < psi_depth; ++l) {
    inst.net.layers.push_back(Relu{});
    const int outw = (l + 1 == psi_depth) ? classes : psi_width;
    inst.net.layers.push_back(
        Affine{normal_mat(rng, outw, fan, 1.2 / std::sqrt(double(fan))),
               normal_vec(rng, outw, 0.3)});
    fan = outw;
  }

  // Shift the label logit so the (constant) margin lands exactly on gamma.
  {
    MarginReport m0 = margin(inst.net, inst.x0, inst.label);
    auto& head = std::get<Affine>(inst.net.layers.back());
    head.b[static_cast<size_t>(inst.label)] += gamma - m0.value;
  }
  inst.net.validate();

  Certificate& c = inst.cert;
  c.family = kFamilyConstBox;
  c.robust = true;
  c.scalars["gamma"] = gamma;
  c.scalars["margin_x0"] = margin(inst.net, inst.x0, inst.label).value;
  c.scalars["ibp_margin_lower"] = box_margin_ibp(inst);
  c.vectors["alpha"] = std::move(alpha);
  c.vectors["beta"] = std::move(beta);
  c.vectors["t_latent"] = std::get<Affine>(inst.net.layers[2]).b;

  CheckReport rep = check_certificate(inst);
  if (!rep.ok())
    throw GenerationError("const_box " + inst.id + ": " +
                          rep.failures.front());
  return inst;
}

CheckReport check_const_box(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const Vec* alpha = c.vector("alpha");
  const Vec* beta = c.vector("beta");
  const Vec* t = c.vector("t_latent");
  const int d = static_cast<int>(inst.x0.size());
  if (alpha == nullptr || beta == nullptr || t == nullptr ||
      alpha->size() != static_cast<size_t>(d) ||
      beta->size() != static_cast<size_t>(d)) {
    rep.fail("alpha/beta/t bookkeeping missing");
    return rep;
  }
  if (!c.robust) rep.fail("family is constant on the box; robust flag off");
  const auto* l1 = inst.net.layers.empty()
                       ? nullptr
                       : std::get_if<Affine>(&inst.net.layers[0]);
  if (l1 == nullptr || l1->w.rows != 2 * d || l1->w.cols != d ||
      inst.net.layers.size() < 3 ||
      !std::holds_alternative<Relu>(inst.net.layers[1])) {
    rep.fail("first block is not the hinge layer");
    return rep;
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double want_a = (j == i) ? -1.0 : 0.0;
      const double want_b = (j == i) ? 1.0 : 0.0;
      if (l1->w.at(2 * i, j) != want_a || l1->w.at(2 * i + 1, j) != want_b) {
        rep.fail("hinge layer weights tampered at coordinate " +
                 std::to_string(i));
        return rep;
      }
    }
    const double a = l1->b[static_cast<size_t>(2 * i)];
    const double bneg = -l1->b[static_cast<size_t>(2 * i + 1)];
    if (a != (*alpha)[static_cast<size_t>(i)] ||
        bneg != (*beta)[static_cast<size_t>(i)]) {
      rep.fail("hinge thresholds drifted from certificate at coordinate " +
               std::to_string(i));
      return rep;
    }
    if (!(a <= inst.x0[static_cast<size_t>(i)] - inst.eps) ||
        !(bneg >= inst.x0[static_cast<size_t>(i)] + inst.eps)) {
      rep.fail("perturbation interval escapes [alpha, beta] at coordinate " +
               std::to_string(i));
      return rep;
    }
  }
  const auto* l2 = std::get_if<Affine>(&inst.net.layers[2]);
  if (l2 == nullptr || !same_vec(l2->b, *t)) {
    rep.fail("latent layer bias does not match the stored constant");
    return rep;
  }

  Evaluation e0 = forward_eval(inst.net, inst.x0);
  if (!same_vec(e0.acts[3], *t)) {
    rep.fail("latent at x0 is not bit-identical to the stored constant");
    return rep;
  }
  // Constancy is bitwise: hammer a few box corners and demand identical
  // logits.
  for (int pat = 0; pat < 8; ++pat) {
    Vec x(inst.x0);
    for (int i = 0; i < d; ++i) {
      const int bit = ((i + pat) * 2654435761u >> (pat % 7)) & 1;
      x[static_cast<size_t>(i)] += bit ? inst.eps : -inst.eps;
    }
    Evaluation ex = forward_eval(inst.net, x);
    if (!same_vec(ex.logits(), e0.logits())) {
      rep.fail("logits vary inside the box (pattern " + std::to_string(pat) +
               ")");
      return rep;
    }
  }
  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("gamma"), 1e-9))
    rep.fail("constant margin " + fmt(m0) + " != gamma " +
             fmt(c.scalar("gamma")));
  if (!close(m0, c.scalar("margin_x0"), 1e-12))
    rep.fail("margin_x0 drifted");
  const double ibp = box_margin_ibp(inst);
  if (!close(ibp, c.scalar("ibp_margin_lower"), 1e-12))
    rep.fail("stored interval bound drifted");
  if (!close(ibp, m0, 1e-9))
    rep.fail("interval bound should be exact here: " + fmt(ibp) + " vs " +
             fmt(m0));
  return rep;
}

// ---------------------------------------------------------------------------
// Input-corner stress.  The label logit is zero and each competitor is a
// nonnegative sum of hinges minus a threshold: concave margins whose box
// minimum sits at an active-coordinate corner, found by exact enumeration.
// Hinge weights are kept entrywise nonpositive with per-coordinate mass at
// most 1/11 of the total, which pins every sampled margin gradient into the
// same quantization cell (the linear-region probe reads exactly one cell).
// ---------------------------------------------------------------------------

namespace {

struct CornerScan {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> sign;  // +1 / -1 per active coordinate
};

// Maximize sum_j c_j relu(base_j + eps * sum_i A_{ji} s_i) over sign vectors
// s by Gray-code enumeration (cost J per corner).  Ties keep the earliest
// corner so generator and checker agree bit-for-bit.
CornerScan corner_scan_max(const Mat& act_w, const Vec& base, const Vec& coef,
                           double eps) {
  const int J = act_w.rows;
  const int m = act_w.cols;
  if (m > 24) throw StructuralError("corner scan: active dimension too large");
  std::vector<int> sign(static_cast<size_t>(m), -1);
  Vec t(static_cast<size_t>(J));
  for (int j = 0; j < J; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s -= act_w.at(j, i);
    t[static_cast<size_t>(j)] = s;
  }
  CornerScan out;
  uint64_t gray = 0;
  const uint64_t total = 1ull << m;
  for (uint64_t k = 0;; ++k) {
    double v = 0.0;
    for (int j = 0; j < J; ++j) {
      const double pre =
          base[static_cast<size_t>(j)] + eps * t[static_cast<size_t>(j)];
      if (pre > 0.0) v += coef[static_cast<size_t>(j)] * pre;
    }
    if (v > out.best) {
      out.best = v;
      out.sign = sign;
    }
    if (k + 1 == total) break;
    uint64_t next = (k + 1) ^ ((k + 1) >> 1);
    int flip = 0;
    uint64_t diff = gray ^ next;
    while (!(diff & 1)) {
      diff >>= 1;
      ++flip;
    }
    gray = next;
    sign[static_cast<size_t>(flip)] = -sign[static_cast<size_t>(flip)];
    const double delta = 2.0 * sign[static_cast<size_t>(flip)];
    for (int j = 0; j < J; ++j)
      t[static_cast<size_t>(j)] += delta * act_w.at(j, flip);
  }
  return out;
}

}  // namespace

Instance gen_corner(const GenParams& p, std::uint64_t seed, std::string id) {
  const int d = static_cast<int>(param(p, "dim", 24));
  const int d_act = static_cast<int>(param(p, "active_dim", 16));
  const int J = static_cast<int>(param(p, "hinges", 24));
  const int classes = static_cast<int>(param(p, "classes", 2));
  const double eps = param(p, "eps", 0.1);
  const double hinge_scale = param(p, "hinge_scale", 4.0);
  const double gamma_frac = param(p, "gamma_frac", 0.05);
  const bool robust = param(p, "robust", 1.0) != 0.0;
  if (d < 1 || d_act < 15 || d_act > 20 || d_act > d || J < 1 || classes < 2)
    throw ConfigError("corner: need 15 <= active_dim <= 20 and sane sizes");
  if (!(eps > 0.0) || !(hinge_scale > 0.0) || !(gamma_frac > 0.0))
    throw ConfigError("corner: eps/hinge_scale/gamma_frac must be positive");

  Rng rng(seed);
  Instance inst;
  inst.id = std::move(id);
  inst.x0 = uniform_vec(rng, d, -1.0, 1.0);
  inst.label = 0;
  inst.eps = eps;
  const double gamma = (robust ? 1.0 : -1.0) * gamma_frac * eps * hinge_scale;

  std::vector<int> order(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) order[static_cast<size_t>(i)] = i;
  for (int i = d - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)],
              order[rng.below(static_cast<uint64_t>(i + 1))]);
  std::vector<int> active(order.begin(), order.begin() + d_act);
  std::sort(active.begin(), active.end());

  const int nk = classes - 1;
  Mat w1(nk * J, d);
  Vec b1(static_cast<size_t>(nk * J));
  for (int k = 0; k < nk; ++k) {
    // Per-coordinate mass shares u_i with max_i u_i < 1/11 by construction:
    // each share is within 15% of uniform, and the admissible d_act >= 15
    // keeps the worst case 1.15 / (0.85 d_act) below 1/11.
    Vec u(static_cast<size_t>(d_act));
    double usum = 0.0;
    for (double& x : u) {
      x = 1.0 + 0.15 * rng.uniform(-1.0, 1.0);
      usum += x;
    }
    for (int i = 0; i < d_act; ++i) {
      const double colmass = hinge_scale * u[static_cast<size_t>(i)] / usum;
      Vec w(static_cast<size_t>(J));
      double wsum = 0.0;
      for (double& x : w) {
        x = rng.uniform(0.2, 1.0);
        wsum += x;
      }
      for (int j = 0; j < J; ++j)
        w1.at(k * J + j, active[static_cast<size_t>(i)]) =
            -colmass * w[static_cast<size_t>(j)] / wsum;
    }
    for (int j = 0; j < J; ++j) {
      double s = 0.0;
      for (int i = 0; i < d_act; ++i)
        s += w1.at(k * J + j, active[static_cast<size_t>(i)]) *
             inst.x0[static_cast<size_t>(active[static_cast<size_t>(i)])];
      b1[static_cast<size_t>(k * J + j)] = -s;
    }
  }

  // beta_k = (max over active corners of h_k) + gamma.
  Vec vertex_max(static_cast<size_t>(nk));
  std::vector<std::vector<int>> best_sign(static_cast<size_t>(nk));
  for (int k = 0; k < nk; ++k) {
    Mat aw(J, d_act);
    Vec base(static_cast<size_t>(J)), coef(static_cast<size_t>(J), 1.0);
    for (int j = 0; j < J; ++j) {
      for (int i = 0; i < d_act; ++i)
        aw.at(j, i) = w1.at(k * J + j, active[static_cast<size_t>(i)]);
      base[static_cast<size_t>(j)] = b1[static_cast<size_t>(k * J + j)];
      for (int i = 0; i < d_act; ++i)
        base[static_cast<size_t>(j)] +=
            aw.at(j, i) *
            inst.x0[static_cast<size_t>(active[static_cast<size_t>(i)])];
    }
    CornerScan scan = corner_scan_max(aw, base, coef, eps);
    vertex_max[static_cast<size_t>(k)] = scan.best;
    best_sign[static_cast<size_t>(k)] = std::move(scan.sign);
  }

  Mat w2(classes, nk * J);
  Vec b2(static_cast<size_t>(classes));
  for (int k = 0; k < nk; ++k) {
    for (int j = 0; j < J; ++j) w2.at(k + 1, k * J + j) = 1.0;
    b2[static_cast<size_t>(k + 1)] =
        -(vertex_max[static_cast<size_t>(k)] + gamma);
  }

  inst.net.input_shape = {d};
  inst.net.layers.push_back(Affine{std::move(w1), std::move(b1)});
  inst.net.layers.push_back(Relu{});
  inst.net.layers.push_back(Affine{std::move(w2), std::move(b2)});
  inst.net.validate();

  // Worst corner of the first competitor; every competitor bottoms out at
  // margin ~gamma, so this corner attains the box minimum up to roundoff.
  Vec worst(inst.x0);
  for (int i = 0; i < d_act; ++i)
    worst[static_cast<size_t>(active[static_cast<size_t>(i)])] +=
        best_sign[0][static_cast<size_t>(i)] * eps * (1.0 - 1e-12);

  Certificate& c = inst.cert;
  c.family = kFamilyCorner;
  c.robust = robust;
  c.scalars["gamma"] = gamma;
  c.scalars["active_dim"] = d_act;
  c.scalars["hinges"] = J;
  c.scalars["margin_x0"] = margin(inst.net, inst.x0, inst.label).value;
  c.scalars["grad_cell_locked"] = 1.0;
  c.vectors["vertex_max"] = vertex_max;
  Vec act_d(active.begin(), active.end());
  c.vectors["active"] = std::move(act_d);
  if (robust) {
    c.vectors["worst_corner"] = std::move(worst);
  } else {
    if (!(margin(inst.net, worst, inst.label).value < 0.0))
      throw GenerationError("corner " + inst.id +
                            ": worst corner failed to flip");
    c.vectors["witness"] = std::move(worst);
  }

  CheckReport rep = check_certificate(inst);
  if (!rep.ok())
    throw GenerationError("corner " + inst.id + ": " + rep.failures.front());
  return inst;
}

CheckReport check_corner(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const int d = static_cast<int>(inst.x0.size());
  const int d_act = static_cast<int>(c.scalar("active_dim"));
  const int J = static_cast<int>(c.scalar("hinges"));
  const Vec* actv = c.vector("active");
  const Vec* vmax = c.vector("vertex_max");
  const double gamma = c.scalar("gamma");
  if (d_act < 1 || d_act > 20 || J < 1 || actv == nullptr ||
      actv->size() != static_cast<size_t>(d_act) || vmax == nullptr) {
    rep.fail("corner bookkeeping missing");
    return rep;
  }
  if (inst.net.layers.size() != 3) {
    rep.fail("expected hinge layer, relu, head");
    return rep;
  }
  const auto* l1 = std::get_if<Affine>(&inst.net.layers[0]);
  const auto* head = std::get_if<Affine>(&inst.net.layers[2]);
  const int classes = inst.net.num_classes();
  const int nk = classes - 1;
  if (l1 == nullptr || head == nullptr || l1->w.rows != nk * J ||
      vmax->size() != static_cast<size_t>(nk)) {
    rep.fail("layer dimensions inconsistent with certificate");
    return rep;
  }
  if (inst.label != 0) rep.fail("family labels class 0");

  std::vector<int> active;
  std::vector<char> is_active(static_cast<size_t>(d), 0);
  for (double v : *actv) {
    const int i = static_cast<int>(v);
    if (i < 0 || i >= d) {
      rep.fail("active index out of range");
      return rep;
    }
    active.push_back(i);
    is_active[static_cast<size_t>(i)] = 1;
  }

  // Nonpositive hinges confined to the active set, with per-coordinate mass
  // below the 1/11 share that locks every sampled gradient into one
  // quantization cell.
  for (int r = 0; r < l1->w.rows; ++r)
    for (int j = 0; j < d; ++j) {
      const double w = l1->w.at(r, j);
      if (w > 0.0) {
        rep.fail("hinge weight positive at row " + std::to_string(r));
        return rep;
      }
      if (!is_active[static_cast<size_t>(j)] && w != 0.0) {
        rep.fail("hinge touches an inactive coordinate");
        return rep;
      }
    }
  for (int k = 0; k < nk; ++k) {
    double total = 0.0, colmax = 0.0;
    for (int i : active) {
      double col = 0.0;
      for (int j = 0; j < J; ++j) col += std::abs(l1->w.at(k * J + j, i));
      total += col;
      colmax = std::max(colmax, col);
    }
    if (c.scalar("grad_cell_locked") == 1.0 &&
        !(colmax <= total / 11.0 * (1.0 + 1e-9)))
      rep.fail("per-coordinate hinge mass exceeds total/11 for class " +
               std::to_string(k + 1));
    // Hinges must sit at their kink at x0 (pre-activation ~ 0).
    for (int j = 0; j < J; ++j) {
      double pre = l1->b[static_cast<size_t>(k * J + j)];
      for (int i : active)
        pre += l1->w.at(k * J + j, i) * inst.x0[static_cast<size_t>(i)];
      if (std::abs(pre) > 1e-9 * std::max(1.0, total))
        rep.fail("hinge " + std::to_string(j) + " not anchored at x0");
    }
  }

  // Head: label row zero, competitor k sums its hinge block.
  for (int j = 0; j < nk * J; ++j)
    if (head->w.at(0, j) != 0.0) {
      rep.fail("label logit is not constant");
      return rep;
    }
  if (head->b[0] != 0.0) rep.fail("label logit bias nonzero");
  for (int k = 0; k < nk; ++k)
    for (int j = 0; j < nk * J; ++j) {
      const double want = (j >= k * J && j < (k + 1) * J) ? 1.0 : 0.0;
      if (head->w.at(k + 1, j) != want) {
        rep.fail("head mixes hinge blocks");
        return rep;
      }
    }

  // Recompute each competitor's corner maximum and threshold.
  for (int k = 0; k < nk; ++k) {
    Mat aw(J, d_act);
    Vec base(static_cast<size_t>(J)), coef(static_cast<size_t>(J), 1.0);
    for (int j = 0; j < J; ++j) {
      for (int i = 0; i < d_act; ++i)
        aw.at(j, i) = l1->w.at(k * J + j, active[static_cast<size_t>(i)]);
      double pre = l1->b[static_cast<size_t>(k * J + j)];
      for (int i = 0; i < d_act; ++i)
        pre += aw.at(j, i) *
               inst.x0[static_cast<size_t>(active[static_cast<size_t>(i)])];
      base[static_cast<size_t>(j)] = pre;
    }
    CornerScan scan = corner_scan_max(aw, base, coef, inst.eps);
    if (!close(scan.best, (*vmax)[static_cast<size_t>(k)], 1e-12))
      rep.fail("vertex max drifted for class " + std::to_string(k + 1) +
               ": " + fmt(scan.best));
    const double beta = -head->b[static_cast<size_t>(k + 1)];
    if (!close(beta, scan.best + gamma, 1e-12))
      rep.fail("threshold != vertex max + gamma for class " +
               std::to_string(k + 1));
  }

  if (c.robust != (gamma > 0.0)) rep.fail("robust flag contradicts gamma");
  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("margin_x0"), 1e-9)) rep.fail("margin_x0 drifted");
  const Vec* probe = c.robust ? c.vector("worst_corner") : c.vector("witness");
  if (probe == nullptr || probe->size() != static_cast<size_t>(d)) {
    rep.fail("worst corner missing");
  } else {
    const double mw = margin(inst.net, *probe, inst.label).value;
    if (!close(mw, gamma, 1e-6))
      rep.fail("margin at the worst corner " + fmt(mw) + " != gamma " +
               fmt(gamma));
  }
  return rep;
}

}  // namespace certbench

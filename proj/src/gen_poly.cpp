#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "certbench/errors.hpp"
#include "certbench/gen.hpp"
#include "certbench/net.hpp"
#include "certbench/rng.hpp"

namespace certbench {
namespace {

constexpr double kRootWindow = 10.0;  // line parameter range scanned for roots
constexpr int kGridPoints = 10000;    // bracketing grid resolution
constexpr double kGradFloor = 1e-8;   // minimum informative gradient l1 norm
constexpr int kSepRestarts = 50;
constexpr int kSepIters = 500;
constexpr double kSepThreshold = 1e-6;
constexpr std::uint64_t kSepSalt = 0x5eb0a9a7e11ull;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

double poly_eval(const std::vector<double>& c, double t) {
  double acc = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) acc = acc * t + c[k];
  return acc;
}

std::vector<double> poly_derivative(const std::vector<double>& c) {
  if (c.size() <= 1) return {0.0};
  std::vector<double> d(c.size() - 1);
  for (std::size_t k = 1; k < c.size(); ++k)
    d[k - 1] = c[k] * static_cast<double>(k);
  return d;
}

// Class margin f_0 - f_1 and its input gradient for a two-class net.
double margin01(const Network& net, const Vec& x) {
  const Evaluation ev = forward_eval(net, x);
  return ev.logits()[0] - ev.logits()[1];
}

Vec margin01_grad(const Network& net, const Vec& x) {
  return grad_margin(net, x, 0, 1).grad;
}

double signum(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// The deterministic seed for the separation protocol is derived from the
// instance id so the checker can replay the exact search without the
// certificate having to smuggle a 64-bit integer through double scalars.
std::uint64_t separation_seed(const std::string& id) {
  return mix_seed(hash_str(id.c_str()), kSepSalt);
}

struct PolyView {
  const Affine* front = nullptr;
  const Affine* head = nullptr;
  int degree = 0;
};

PolyView poly_view(const Network& net) {
  if (net.layers.size() != 3 ||
      !std::holds_alternative<Affine>(net.layers[0]) ||
      !std::holds_alternative<MonomialPower>(net.layers[1]) ||
      !std::holds_alternative<Affine>(net.layers[2]))
    throw StructuralError(
        "polynomial helper expects affine/monomial-power/affine layers");
  PolyView v;
  v.front = &std::get<Affine>(net.layers[0]);
  v.head = &std::get<Affine>(net.layers[2]);
  v.degree = std::get<MonomialPower>(net.layers[1]).degree;
  if (v.head->w.rows != 2)
    throw StructuralError("polynomial helper expects exactly two classes");
  return v;
}

}  // namespace

std::vector<double> real_roots_univariate(const std::vector<double>& coeffs,
                                          double t_max) {
  std::vector<double> c = coeffs;
  while (c.size() > 1 && c.back() == 0.0) c.pop_back();
  bool all_zero = true;
  for (double v : c)
    if (v != 0.0) all_zero = false;
  if (all_zero)
    throw ConfigError("root isolation on the zero polynomial is undefined");
  std::vector<double> roots;
  if (c.size() == 1) return roots;
  const std::vector<double> dc = poly_derivative(c);

  auto push_root = [&roots](double t) {
    if (!std::isfinite(t)) return;
    for (double r : roots)
      if (std::abs(r - t) <= 1e-10 * std::max(1.0, std::abs(t))) return;
    roots.push_back(t);
  };

  double prev_t = -t_max;
  double prev_f = poly_eval(c, prev_t);
  if (prev_f == 0.0) push_root(prev_t);
  const double step = 2.0 * t_max / static_cast<double>(kGridPoints);
  for (int k = 1; k <= kGridPoints; ++k) {
    const double t = -t_max + step * static_cast<double>(k);
    const double f = poly_eval(c, t);
    if (f == 0.0) {
      push_root(t);
    } else if (prev_f != 0.0 && (prev_f < 0.0) != (f < 0.0)) {
      // Bisect the bracket down to 1e-12 width, then polish with Newton
      // steps as long as they shrink the residual and stay bracketed.
      double lo = prev_t, hi = t, flo = prev_f;
      while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        const double fm = poly_eval(c, mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((flo < 0.0) != (fm < 0.0)) {
          hi = mid;
        } else {
          lo = mid;
          flo = fm;
        }
      }
      double root = 0.5 * (lo + hi);
      double best = std::abs(poly_eval(c, root));
      for (int it = 0; it < 3; ++it) {
        const double dp = poly_eval(dc, root);
        if (dp == 0.0) break;
        const double cand = root - poly_eval(c, root) / dp;
        if (!(cand >= prev_t && cand <= t)) break;
        const double val = std::abs(poly_eval(c, cand));
        if (val >= best) break;
        root = cand;
        best = val;
      }
      push_root(root);
    }
    prev_t = t;
    prev_f = f;
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

std::vector<double> margin_line_coeffs(const Network& net, const Vec& a,
                                       const Vec& v) {
  const PolyView pv = poly_view(net);
  const Affine& front = *pv.front;
  const Affine& head = *pv.head;
  const int h = front.w.rows;
  const int n = front.w.cols;
  const int d = pv.degree;
  // Pascal row of binomial coefficients C(d, k).
  std::vector<double> binom(static_cast<std::size_t>(d) + 1, 0.0);
  binom[0] = 1.0;
  for (int m = 1; m <= d; ++m)
    for (int k = m; k >= 1; --k)
      binom[static_cast<std::size_t>(k)] += binom[static_cast<std::size_t>(k - 1)];

  std::vector<double> coeffs(static_cast<std::size_t>(d) + 1, 0.0);
  std::vector<double> apow(static_cast<std::size_t>(d) + 1, 1.0);
  std::vector<double> bpow(static_cast<std::size_t>(d) + 1, 1.0);
  for (int j = 0; j < h; ++j) {
    const double alpha = dot(front.w.row(j), a.data(), n) + front.b[static_cast<std::size_t>(j)];
    const double beta = dot(front.w.row(j), v.data(), n);
    const double ch = head.w.at(0, j) - head.w.at(1, j);
    if (ch == 0.0) continue;
    for (int k = 1; k <= d; ++k) {
      apow[static_cast<std::size_t>(k)] = apow[static_cast<std::size_t>(k - 1)] * alpha;
      bpow[static_cast<std::size_t>(k)] = bpow[static_cast<std::size_t>(k - 1)] * beta;
    }
    // (alpha + beta t)^d = sum_k C(d,k) alpha^{d-k} beta^k t^k.
    for (int k = 0; k <= d; ++k)
      coeffs[static_cast<std::size_t>(k)] += ch * binom[static_cast<std::size_t>(k)] *
                                             apow[static_cast<std::size_t>(d - k)] *
                                             bpow[static_cast<std::size_t>(k)];
  }
  coeffs[0] += head.b[0] - head.b[1];
  return coeffs;
}

Vec sample_boundary_point(const Network& net, Rng& rng, int max_tries) {
  const int n = net.input_dim();
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Vec a(static_cast<std::size_t>(n));
    Vec v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      a[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
    double vmax = 0.0;
    for (int i = 0; i < n; ++i) {
      v[static_cast<std::size_t>(i)] = rng.normal();
      vmax = std::max(vmax, std::abs(v[static_cast<std::size_t>(i)]));
    }
    if (vmax < 1e-12) continue;
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] /= vmax;

    const std::vector<double> coeffs = margin_line_coeffs(net, a, v);
    double cmax = 0.0;
    for (double cc : coeffs) cmax = std::max(cmax, std::abs(cc));
    if (cmax < 1e-14) continue;  // margin vanishes along this line
    const std::vector<double> roots =
        real_roots_univariate(coeffs, kRootWindow);
    if (roots.empty()) continue;
    const std::size_t start = static_cast<std::size_t>(rng.below(roots.size()));
    for (std::size_t off = 0; off < roots.size(); ++off) {
      const double t = roots[(start + off) % roots.size()];
      Vec p(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i)
        p[static_cast<std::size_t>(i)] =
            a[static_cast<std::size_t>(i)] + t * v[static_cast<std::size_t>(i)];
      if (l1_norm(margin01_grad(net, p)) >= kGradFloor) return p;
    }
  }
  throw GenerationError(
      "no boundary point with an informative gradient found: every sampled "
      "line was rootless or landed on a flat spot");
}

SeparationReport separation_check(const Network& net, const Vec& x0,
                                  double eps, int restarts, int iters,
                                  double threshold, std::uint64_t seed,
                                  ExecMode mode) {
  if (restarts < 1 || iters < 1 || !(eps >= 0.0))
    throw ConfigError("separation check needs restarts/iters >= 1, eps >= 0");
  const int n = net.input_dim();
  const PerturbationBox box{x0, eps};
  const Vec lo = box.lo();
  const Vec hi = box.hi();
  std::vector<double> result(static_cast<std::size_t>(restarts),
                             std::numeric_limits<double>::infinity());

  auto run_restart = [&](int r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    Vec z(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      z[si] = rng.uniform(lo[si], hi[si]);
    }
    double mu = margin01(net, z);
    double best = mu * mu;
    double step = std::max(eps, 1e-12);
    for (int it = 0; it < iters && best > 1e-18; ++it) {
      // d/dz mu^2 = 2 mu grad(mu); descend with projection onto the box and
      // plain backtracking until the squared margin decreases.
      const Vec g = margin01_grad(net, z);
      double gmax = 0.0;
      for (int i = 0; i < n; ++i)
        gmax = std::max(gmax, std::abs(g[static_cast<std::size_t>(i)]));
      if (gmax == 0.0 || mu == 0.0) break;
      bool moved = false;
      while (step > 1e-14 * std::max(eps, 1.0)) {
        Vec cand(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          const std::size_t si = static_cast<std::size_t>(i);
          double cz = z[si] - step * 2.0 * mu * g[si];
          cand[si] = std::min(hi[si], std::max(lo[si], cz));
        }
        const double cmu = margin01(net, cand);
        if (cmu * cmu < best) {
          z = cand;
          mu = cmu;
          best = cmu * cmu;
          step *= 2.0;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    result[static_cast<std::size_t>(r)] = best;
  };

  if (mode == ExecMode::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int r = 0; r < restarts; ++r) run_restart(r);
  } else {
    for (int r = 0; r < restarts; ++r) run_restart(r);
  }
  SeparationReport rep;
  rep.min_margin_sq = std::numeric_limits<double>::infinity();
  for (double v : result) rep.min_margin_sq = std::min(rep.min_margin_sq, v);
  rep.pass = rep.min_margin_sq >= threshold;
  return rep;
}

Instance gen_polynomial(const GenParams& p, std::uint64_t seed,
                        std::string id) {
  const int n = static_cast<int>(param(p, "dim", 8));
  const int h = static_cast<int>(param(p, "hidden", 24));
  const int degree = static_cast<int>(param(p, "degree", 4));
  const double r_req = param(p, "r", 0.1);
  const double delta_req = param(p, "delta", 0.01);
  const int retries = static_cast<int>(param(p, "retries", 60));
  if (n < 1 || h < 1 || degree < 1 || degree > 40)
    throw ConfigError(
        "polynomial: need dim >= 1, hidden >= 1, degree in [1, 40]");
  if (!(r_req > 0.0) || !(delta_req > 0.0) || !(delta_req < r_req))
    throw ConfigError("polynomial: need r > delta > 0");

  Rng rng(seed);
  for (int attempt = 0; attempt < retries; ++attempt) {
    Network net;
    net.input_shape = {n};
    Mat w1(h, n);
    Vec b1(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < n; ++i)
        w1.at(j, i) = rng.normal() / std::sqrt(static_cast<double>(n));
      b1[static_cast<std::size_t>(j)] = rng.uniform(-0.5, 0.5);
    }
    Mat w2(2, h);
    Vec b2(2);
    for (int k = 0; k < 2; ++k) {
      for (int j = 0; j < h; ++j)
        w2.at(k, j) = rng.normal() / std::sqrt(static_cast<double>(h));
      b2[static_cast<std::size_t>(k)] = rng.uniform(-0.2, 0.2);
    }
    net.layers.push_back(Affine{std::move(w1), std::move(b1)});
    net.layers.push_back(MonomialPower{degree});
    net.layers.push_back(Affine{std::move(w2), std::move(b2)});

    Vec bp;
    try {
      bp = sample_boundary_point(net, rng, 40);
    } catch (const GenerationError&) {
      continue;
    }
    const Vec g = margin01_grad(net, bp);
    const double gl1 = l1_norm(g);
    const double mu_p = margin01(net, bp);
    Vec u(static_cast<std::size_t>(n));
    bool any = false;
    for (int i = 0; i < n; ++i) {
      u[static_cast<std::size_t>(i)] = signum(g[static_cast<std::size_t>(i)]);
      if (u[static_cast<std::size_t>(i)] != 0.0) any = true;
    }
    if (!any) continue;

    // x0 sits at l-inf distance r from the boundary point along the sign
    // pattern of the gradient.  The realized radius r_star is the largest
    // coordinate offset measured between the stored doubles, so the
    // checker's max_i |x0_i - p_i| == r comparison is exact by construction.
    Vec x0(static_cast<std::size_t>(n));
    double r_star = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t si = static_cast<std::size_t>(i);
      x0[si] = bp[si] + r_req * u[si];
      r_star = std::max(r_star, std::abs(x0[si] - bp[si]));
    }
    if (!(r_star > 0.0)) continue;
    // eps = fl(r_star - delta) and delta = fl(r_star - eps): when delta is
    // at most about half of r_star, Sterbenz's lemma makes the second
    // subtraction exact, so r_star == eps + delta holds bitwise.
    const double eps = r_star - delta_req;
    const double delta = r_star - eps;
    if (!(eps > 0.0) || !(delta > 0.0) || eps + delta != r_star) continue;

    const double mu0 = margin01(net, x0);
    if (!(mu0 > 0.0)) continue;

    const SeparationReport sep =
        separation_check(net, x0, eps, kSepRestarts, kSepIters, kSepThreshold,
                         separation_seed(id));
    if (!sep.pass) continue;

    Instance inst;
    inst.id = std::move(id);
    inst.net = std::move(net);
    inst.x0 = x0;
    inst.label = 0;
    inst.eps = eps;
    inst.cert.family = kFamilyPolynomial;
    inst.cert.robust = true;
    inst.cert.scalars["dim"] = static_cast<double>(n);
    inst.cert.scalars["hidden"] = static_cast<double>(h);
    inst.cert.scalars["degree"] = static_cast<double>(degree);
    inst.cert.scalars["r"] = r_star;
    inst.cert.scalars["delta"] = delta;
    inst.cert.scalars["eps"] = eps;
    inst.cert.scalars["margin_x0"] = mu0;
    inst.cert.scalars["grad_l1_at_p"] = gl1;
    inst.cert.scalars["mu_at_p"] = mu_p;
    inst.cert.scalars["sep_min_margin_sq"] = sep.min_margin_sq;
    inst.cert.scalars["sep_restarts"] = static_cast<double>(kSepRestarts);
    inst.cert.scalars["sep_iters"] = static_cast<double>(kSepIters);
    inst.cert.scalars["sep_threshold"] = kSepThreshold;
    inst.cert.vectors["boundary_point"] = bp;
    inst.cert.vectors["normal_sign"] = u;

    const CheckReport rep = check_certificate(inst);
    if (!rep.ok())
      throw GenerationError("polynomial self-check failed: " +
                            rep.failures.front());
    return inst;
  }
  throw GenerationError(
      "polynomial: no candidate survived the boundary-distance and "
      "separation protocol after " + std::to_string(retries) + " attempts");
}

CheckReport check_polynomial(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  if (c.family != kFamilyPolynomial) {
    rep.fail("family tag mismatch");
    return rep;
  }
  if (!c.robust) {
    rep.fail("polynomial instances are emitted robust");
    return rep;
  }

  PolyView pv;
  try {
    pv = poly_view(inst.net);
  } catch (const StructuralError& e) {
    rep.fail(e.what());
    return rep;
  }
  const int n = inst.net.input_dim();
  if (static_cast<int>(c.scalar("dim")) != n)
    rep.fail("certificate dim disagrees with the network input");
  if (static_cast<int>(c.scalar("hidden")) != pv.front->w.rows)
    rep.fail("certificate hidden width disagrees with the network");
  if (static_cast<int>(c.scalar("degree")) != pv.degree)
    rep.fail("certificate degree disagrees with the monomial layer");
  if (inst.label != 0) rep.fail("polynomial label must be class 0");

  const Vec* bp = c.vector("boundary_point");
  const Vec* u = c.vector("normal_sign");
  if (!bp || !u || static_cast<int>(bp->size()) != n ||
      static_cast<int>(u->size()) != n) {
    rep.fail("boundary point and normal sign vectors are required");
    return rep;
  }

  const double r = c.scalar("r");
  const double delta = c.scalar("delta");
  const double eps = c.scalar("eps");
  if (!(r > 0.0) || !(delta > 0.0) || !(eps > 0.0))
    rep.fail("r, delta, eps must all be positive");
  if (eps != inst.eps) rep.fail("certificate eps differs from instance eps");
  if (eps + delta != r)
    rep.fail("radius split broken: eps + delta != r bitwise");

  // Placement: offsets move only along nonzero normal coordinates, offset
  // signs match the normal, and the l-inf distance equals r bitwise.
  double dist = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const double ui = (*u)[si];
    if (ui != 0.0 && ui != 1.0 && ui != -1.0) {
      rep.fail("normal sign entries must be -1, 0, or +1");
      return rep;
    }
    const double di = inst.x0[si] - (*bp)[si];
    if (ui == 0.0 && di != 0.0)
      rep.fail("x0 moved along a zero-gradient coordinate");
    if (ui != 0.0 && signum(di) != ui)
      rep.fail("x0 offset sign disagrees with the boundary normal");
    dist = std::max(dist, std::abs(di));
  }
  if (dist != r)
    rep.fail("planted distance " + fmt(dist) + " != certificate r " + fmt(r));

  // The planted point must sit on the decision surface and carry the frozen
  // gradient scale and sign pattern.
  const Vec g = margin01_grad(inst.net, *bp);
  const double gl1 = l1_norm(g);
  if (!close(gl1, c.scalar("grad_l1_at_p"), 1e-9))
    rep.fail("gradient scale at the boundary point drifted");
  if (gl1 < kGradFloor) rep.fail("boundary gradient below the informative floor");
  for (int i = 0; i < n; ++i)
    if (signum(g[static_cast<std::size_t>(i)]) != (*u)[static_cast<std::size_t>(i)]) {
      rep.fail("stored normal sign disagrees with the gradient");
      break;
    }
  const double mu_p = margin01(inst.net, *bp);
  if (!close(mu_p, c.scalar("mu_at_p"), 1e-9))
    rep.fail("boundary residual drifted from the certificate");
  if (std::abs(mu_p) > 1e-7 * std::max(1.0, gl1))
    rep.fail("boundary point off the surface: |mu(p)| = " + fmt(std::abs(mu_p)));

  const double mu0 = margin01(inst.net, inst.x0);
  if (!(mu0 > 0.0)) rep.fail("margin at x0 is not positive");
  if (!close(mu0, c.scalar("margin_x0"), 1e-9))
    rep.fail("margin at x0 drifted from the certificate");

  // Replay the full separation protocol with the id-derived seed and the
  // frozen protocol parameters.
  if (static_cast<int>(c.scalar("sep_restarts")) != kSepRestarts ||
      static_cast<int>(c.scalar("sep_iters")) != kSepIters ||
      c.scalar("sep_threshold") != kSepThreshold) {
    rep.fail("separation protocol parameters differ from the contract");
    return rep;
  }
  const SeparationReport sep =
      separation_check(inst.net, inst.x0, eps, kSepRestarts, kSepIters,
                       kSepThreshold, separation_seed(inst.id));
  if (!sep.pass)
    rep.fail("separation replay found squared margin " +
             fmt(sep.min_margin_sq) + " below threshold");
  if (!close(sep.min_margin_sq, c.scalar("sep_min_margin_sq"), 1e-9))
    rep.fail("separation minimum drifted from the certificate");
  return rep;
}

}  // namespace certbench

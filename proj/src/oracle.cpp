#include "certbench/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "certbench/errors.hpp"
#include "certbench/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace certbench {

namespace {

void clip_to(const Vec& lo, const Vec& hi, Vec& x) {
  for (size_t i = 0; i < x.size(); ++i)
    x[i] = std::min(hi[i], std::max(lo[i], x[i]));
}

// One PGD start: sign-gradient descent on the margin of the currently
// most-threatening class.
void pgd_run(const Network& net, const Vec& lo, const Vec& hi, int y,
             double step, int steps, Vec x, double& out_margin, Vec& out_x) {
  Evaluation e;
  Vec seed;
  out_margin = std::numeric_limits<double>::infinity();
  out_x = x;
  for (int t = 0; t < steps; ++t) {
    forward_eval(net, x, e);
    MarginReport rep = margin_of_logits(e.logits(), y);
    if (rep.value < out_margin) {
      out_margin = rep.value;
      out_x = x;
      if (out_margin <= 0.0) return;  // flip found; caller may refine
    }
    seed.assign(e.logits().size(), 0.0);
    seed[y] = 1.0;
    seed[rep.argmin_class] = -1.0;
    GradResult g = grad_logits(net, e, seed);
    for (size_t i = 0; i < x.size(); ++i) {
      const double gi = g.grad[i];
      x[i] -= step * (gi > 0.0 ? 1.0 : (gi < 0.0 ? -1.0 : 0.0));
    }
    clip_to(lo, hi, x);
  }
  forward_eval(net, x, e);
  const double m = margin_of_logits(e.logits(), y).value;
  if (m < out_margin) {
    out_margin = m;
    out_x = x;
  }
}

}  // namespace

AttackResult attack_search(const Network& net, const PerturbationBox& box,
                           int y, const AttackOptions& opt) {
  const Vec lo = box.lo(), hi = box.hi();
  const int d = static_cast<int>(box.x0.size());
  const int total = opt.random_samples + opt.restarts;
  Vec slot_margin(total, std::numeric_limits<double>::infinity());
  std::vector<Vec> slot_x(total);
  const double step = box.eps * opt.step_frac;

  auto work = [&](int s) {
    if (s < opt.random_samples) {
      Rng rng(mix_seed(opt.seed, 0xA11CE, s));
      Vec x(d);
      for (int i = 0; i < d; ++i)
        x[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
      slot_margin[s] = margin(net, x, y).value;
      slot_x[s] = std::move(x);
    } else {
      const int r = s - opt.random_samples;
      Vec x(d);
      if (r == 0) {
        x = box.x0;  // first start is the centre
      } else {
        Rng rng(mix_seed(opt.seed, 0xB0057, r));
        for (int i = 0; i < d; ++i)
          x[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
      }
      pgd_run(net, lo, hi, y, step, opt.steps, std::move(x), slot_margin[s],
              slot_x[s]);
    }
  };

  if (opt.mode == ExecMode::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (int s = 0; s < total; ++s) work(s);
  } else {
    for (int s = 0; s < total; ++s) work(s);
  }

  AttackResult res;
  for (int s = 0; s < total; ++s) {
    if (slot_margin[s] < res.best_margin) {
      res.best_margin = slot_margin[s];
      res.best_x = slot_x[s];
    }
  }
  res.success = res.best_margin <= 0.0;
  return res;
}

RadiusProbe probe_flip_radius(const Network& net, const Vec& x0, int y,
                              const Vec& dom_lo, const Vec& dom_hi,
                              const AttackOptions& opt) {
  const int d = static_cast<int>(x0.size());
  RadiusProbe probe;

  double radius = 0.0;
  for (int i = 0; i < d; ++i)
    radius = std::max(radius, std::max(x0[i] - dom_lo[i], dom_hi[i] - x0[i]));

  auto boxed = [&](double r) {
    PerturbationBox pb{x0, r};
    Vec lo = pb.lo(), hi = pb.hi();
    for (int i = 0; i < d; ++i) {
      lo[i] = std::max(lo[i], dom_lo[i]);
      hi[i] = std::min(hi[i], dom_hi[i]);
    }
    return std::pair<Vec, Vec>{lo, hi};
  };

  AttackOptions inner = opt;
  uint64_t round = 0;
  while (true) {
    auto [lo, hi] = boxed(radius);
    PerturbationBox pb{x0, radius};
    inner.seed = mix_seed(opt.seed, 0xFADE, round++);
    // clip the attack box to the domain by attacking the clipped box directly
    AttackResult ar;
    {
      PerturbationBox clipped = pb;
      AttackResult tmp = attack_search(net, clipped, y, inner);
      // project the result into the domain in case eps exceeds it
      clip_to(lo, hi, tmp.best_x);
      tmp.best_margin = margin(net, tmp.best_x, y).value;
      tmp.success = tmp.best_margin <= 0.0;
      ar = std::move(tmp);
    }
    if (!ar.success) break;
    // tighten: bisect along the segment toward x0 for the nearest flip
    Vec far = ar.best_x;
    Vec near = x0;
    for (int it = 0; it < 60; ++it) {
      Vec mid(d);
      for (int i = 0; i < d; ++i) mid[i] = 0.5 * (near[i] + far[i]);
      if (margin(net, mid, y).value <= 0.0)
        far = std::move(mid);
      else
        near = std::move(mid);
    }
    double dist = 0.0;
    for (int i = 0; i < d; ++i)
      dist = std::max(dist, std::fabs(far[i] - x0[i]));
    if (!(dist < radius * 0.999) && !probe.witness.empty()) break;
    if (dist < probe.upper) {
      probe.upper = dist;
      probe.witness = far;
    }
    radius = dist * 0.995;
    if (radius <= 1e-14) break;
  }
  return probe;
}

CornerResult corner_enumerate(const Network& net, const PerturbationBox& box,
                              int y, const std::vector<int>& coords) {
  if (coords.size() > 20)
    throw ResourceError("corner enumeration limited to 20 coordinates");
  const uint64_t count = uint64_t{1} << coords.size();
  CornerResult res;
  Vec x = box.x0;
  Evaluation e;
  for (uint64_t mask = 0; mask < count; ++mask) {
    for (size_t b = 0; b < coords.size(); ++b) {
      const int c = coords[b];
      x[c] = box.x0[c] + (((mask >> b) & 1) ? box.eps : -box.eps);
    }
    forward_eval(net, x, e);
    const double m = margin_of_logits(e.logits(), y).value;
    if (m < res.margin_min) {
      res.margin_min = m;
      res.corner = x;
    }
  }
  return res;
}

MarginMinResult exact_verify_tiny(const Network& net,
                                  const PerturbationBox& box, int y,
                                  const MilpOptions& opt, int max_relus) {
  if (net.relu_count() > max_relus)
    throw ResourceError("exact verification refused: too many relu units");
  return exact_margin_min(net, box, y, opt);
}

}  // namespace certbench

#pragma once

#include "certbench/interval.hpp"
#include "certbench/net.hpp"

namespace certbench {

struct MilpOptions {
  int64_t node_budget = 200000;  // across the whole call
  int lp_iter_budget = 50000;
  double int_tol = 1e-7;  // distance from {0,1} treated as integral
};

struct FlipRadiusResult {
  double radius = std::numeric_limits<double>::infinity();
  Vec witness;        // input attaining the radius (empty when radius == inf)
  int witness_class = -1;
  int64_t nodes = 0;
};

// Exact minimal l-inf distortion that removes the classification:
//   min t  s.t.  |x - x0|_inf <= t,  dom_lo <= x <= dom_hi,
//                f_k(x) >= f_y(x) for some k != y.
// Only relu/affine/conv/reshape networks are supported.  upper_hint, when
// finite, must be a valid flip distance (it tightens every preactivation
// bound); witness_hint seeds the incumbent.  Throws ResourceError when the
// node budget runs out.
FlipRadiusResult exact_flip_radius(const Network& net, const Vec& x0, int y,
                                   const Vec& dom_lo, const Vec& dom_hi,
                                   const MilpOptions& opt,
                                   double upper_hint,
                                   const Vec* witness_hint);

struct MarginMinResult {
  double margin_min = 0.0;
  Vec witness;
  int64_t nodes = 0;
};

// Exact minimum of the margin min_k (f_y - f_k) over the box.
MarginMinResult exact_margin_min(const Network& net, const PerturbationBox& box,
                                 int y, const MilpOptions& opt,
                                 const Vec* warm_start = nullptr);

}  // namespace certbench

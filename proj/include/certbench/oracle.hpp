#pragma once

#include <cstdint>
#include <vector>

#include "certbench/milp.hpp"
#include "certbench/net.hpp"

namespace certbench {

enum class ExecMode { Serial, Parallel };

struct AttackOptions {
  int random_samples = 10000;
  int restarts = 100;
  int steps = 200;
  double step_frac = 0.125;  // pgd step = eps * step_frac
  uint64_t seed = 0;
  ExecMode mode = ExecMode::Parallel;
};

struct AttackResult {
  double best_margin = std::numeric_limits<double>::infinity();
  Vec best_x;
  bool success = false;  // a point with margin <= 0 was found
};

// Margin descent over the box: random sampling plus multi-start projected
// sign-gradient descent.  Deterministic for a fixed seed; Serial and Parallel
// modes return identical results (each start owns its RNG stream, and the
// reduction over slots is ordered).
AttackResult attack_search(const Network& net, const PerturbationBox& box,
                           int y, const AttackOptions& opt);

struct RadiusProbe {
  double upper = std::numeric_limits<double>::infinity();
  Vec witness;  // adversarial point at distance `upper` (empty when none)
};

// Heuristic upper bound on the flip radius: attack inside shrinking boxes,
// tightening with segment bisection toward x0 after each hit.
RadiusProbe probe_flip_radius(const Network& net, const Vec& x0, int y,
                              const Vec& dom_lo, const Vec& dom_hi,
                              const AttackOptions& opt);

struct CornerResult {
  double margin_min = std::numeric_limits<double>::infinity();
  Vec corner;
};

// Exact minimum of the margin over the 2^|coords| box corners spanned by the
// listed coordinates (all others pinned at x0).  coords.size() <= 20.
CornerResult corner_enumerate(const Network& net, const PerturbationBox& box,
                              int y, const std::vector<int>& coords);

// exact_margin_min guarded by a unit budget: refuses networks whose relu
// count exceeds max_relus instead of launching a hopeless enumeration.
MarginMinResult exact_verify_tiny(const Network& net,
                                  const PerturbationBox& box, int y,
                                  const MilpOptions& opt, int max_relus = 64);

}  // namespace certbench

#pragma once

#include "certbench/net.hpp"

namespace certbench {

// Coordinatewise interval box over a flat activation vector.
struct Box {
  Vec lo, hi;

  size_t size() const { return lo.size(); }
};

Box box_of(const PerturbationBox& pb);

// Per-layer activation bounds; boxes[0] is the input box and boxes[l+1]
// bounds the output of layers[l].  Transfer functions:
//   - affine/conv: exact coordinatewise (positive/negative weight split)
//   - relu, odd powers: exact (monotone)
//   - even powers: exact ([0, max] on straddling inputs)
//   - row softmax / row normalize: exact per entry via the monotone
//     substitution (raise the own logit, lower the rest, and vice versa)
//   - bilinear and feature-map scores, value projection: interval products,
//     sound but not tight (input dependencies are dropped)
struct IbpTrace {
  std::vector<Box> boxes;

  const Box& logits() const { return boxes.back(); }
};

void ibp_forward(const Network& net, const Box& input, IbpTrace& out);
IbpTrace ibp_forward(const Network& net, const Box& input);

// lo_y - max_{k != y} hi_k from the logit box.
double margin_lower_of(const Box& logit_box, int y);
double ibp_margin_lower(const Network& net, const Box& input, int y);

// [lo, hi] of the product of two intervals.
inline void interval_product(double alo, double ahi, double blo, double bhi,
                             double& lo, double& hi) {
  const double p1 = alo * blo, p2 = alo * bhi, p3 = ahi * blo, p4 = ahi * bhi;
  lo = std::min(std::min(p1, p2), std::min(p3, p4));
  hi = std::max(std::max(p1, p2), std::max(p3, p4));
}

}  // namespace certbench

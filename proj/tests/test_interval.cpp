#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "certbench/errors.hpp"
#include "certbench/interval.hpp"
#include "certbench/net.hpp"
#include "certbench/rng.hpp"
#include "doctest.h"

using namespace certbench;

namespace {

Mat random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (auto& v : m.a) v = scale * rng.normal();
  return m;
}

Vec random_vec(Rng& rng, int n, double scale = 1.0) {
  Vec v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

Box random_box(Rng& rng, int n, double center_scale, double radius) {
  Box b;
  b.lo.resize(n);
  b.hi.resize(n);
  for (int i = 0; i < n; ++i) {
    const double c = center_scale * rng.normal();
    const double r = radius * rng.uniform();
    b.lo[i] = c - r;
    b.hi[i] = c + r;
  }
  return b;
}

Vec sample_in(Rng& rng, const Box& b) {
  Vec x(b.size());
  for (size_t i = 0; i < x.size(); ++i)
    x[i] = b.lo[i] + (b.hi[i] - b.lo[i]) * rng.uniform();
  return x;
}

// Every activation of every sampled point must respect the per-layer bounds.
void check_sound(const Network& net, const Box& box, Rng& rng, int samples) {
  IbpTrace trace = ibp_forward(net, box);
  Evaluation e;
  for (int s = 0; s < samples; ++s) {
    Vec x = s == 0 ? box.lo : (s == 1 ? box.hi : sample_in(rng, box));
    forward_eval(net, x, e);
    for (size_t l = 0; l < e.acts.size(); ++l) {
      REQUIRE(trace.boxes[l].size() == e.acts[l].size());
      for (size_t i = 0; i < e.acts[l].size(); ++i) {
        const double slack =
            1e-9 * std::max(1.0, std::fabs(e.acts[l][i]));
        CHECK(e.acts[l][i] >= trace.boxes[l].lo[i] - slack);
        CHECK(e.acts[l][i] <= trace.boxes[l].hi[i] + slack);
      }
    }
  }
}

}  // namespace

TEST_CASE("bounds contain all reachable activations (fuzz, all layer kinds)") {
  Rng rng(41);
  {
    Network net;
    net.input_shape = {5};
    net.layers = {Affine{random_mat(rng, 8, 5, 0.8), random_vec(rng, 8, 0.3)},
                  Relu{},
                  Affine{random_mat(rng, 6, 8, 0.8), random_vec(rng, 6, 0.3)},
                  Relu{},
                  Affine{random_mat(rng, 3, 6, 0.8), random_vec(rng, 3, 0.3)}};
    for (int t = 0; t < 4; ++t)
      check_sound(net, random_box(rng, 5, 1.0, 0.5), rng, 40);
  }
  {
    Network net;
    net.input_shape = {1, 5, 5};
    Conv2d c1;
    c1.in_ch = 1;
    c1.out_ch = 3;
    c1.kh = c1.kw = 3;
    c1.stride = 1;
    c1.pad = 1;
    c1.filters = random_vec(rng, 27, 0.5);
    c1.bias = random_vec(rng, 3, 0.2);
    net.layers = {c1, Relu{}, Reshape{{75}},
                  Affine{random_mat(rng, 4, 75, 0.3), random_vec(rng, 4, 0.1)}};
    for (int t = 0; t < 3; ++t)
      check_sound(net, random_box(rng, 25, 0.8, 0.3), rng, 30);
  }
  {
    Network net;
    net.input_shape = {4};
    net.layers = {Affine{random_mat(rng, 6, 4, 0.6), random_vec(rng, 6, 0.2)},
                  MonomialPower{2},
                  Affine{random_mat(rng, 3, 6, 0.6), random_vec(rng, 3, 0.2)}};
    for (int t = 0; t < 4; ++t)
      check_sound(net, random_box(rng, 4, 0.8, 0.4), rng, 40);
    net.layers[1] = MonomialPower{3};
    for (int t = 0; t < 4; ++t)
      check_sound(net, random_box(rng, 4, 0.8, 0.4), rng, 40);
  }
  {
    Network net;
    net.input_shape = {4, 3};
    net.layers = {BilinearScore{random_mat(rng, 3, 3, 0.5)}, RowSoftmax{},
                  ValueProject{random_mat(rng, 3, 2, 0.8)}, Reshape{{8}},
                  Affine{random_mat(rng, 3, 8, 0.6), random_vec(rng, 3, 0.2)}};
    for (int t = 0; t < 4; ++t)
      check_sound(net, random_box(rng, 12, 0.7, 0.25), rng, 40);
  }
  {
    Network net;
    net.input_shape = {4, 3};
    net.layers = {LinearAttnScore{random_mat(rng, 3, 2, 0.5),
                                  random_mat(rng, 3, 2, 0.5), 0.01},
                  RowNormalize{},
                  ValueProject{random_mat(rng, 3, 2, 0.8)}, Reshape{{8}},
                  Affine{random_mat(rng, 3, 8, 0.6), random_vec(rng, 3, 0.2)}};
    for (int t = 0; t < 4; ++t)
      check_sound(net, random_box(rng, 12, 0.7, 0.25), rng, 40);
  }
}

TEST_CASE("affine bounds are exact and attained at box corners") {
  Rng rng(42);
  Network net;
  net.input_shape = {4};
  net.layers = {Affine{random_mat(rng, 3, 4, 1.0), random_vec(rng, 3, 0.5)},
                Affine{random_mat(rng, 2, 3, 1.0), random_vec(rng, 2, 0.5)}};
  // A single affine layer: compare against direct corner enumeration.
  Box box = random_box(rng, 4, 1.0, 0.7);
  IbpTrace t1 = ibp_forward(net, box);
  const auto& l0 = std::get<Affine>(net.layers[0]);
  for (int r = 0; r < 3; ++r) {
    double lo = l0.b[r], hi = l0.b[r];
    for (int c = 0; c < 4; ++c) {
      const double w = l0.w.at(r, c);
      lo += w * (w >= 0 ? box.lo[c] : box.hi[c]);
      hi += w * (w >= 0 ? box.hi[c] : box.lo[c]);
    }
    CHECK(t1.boxes[1].lo[r] == doctest::Approx(lo).epsilon(1e-15));
    CHECK(t1.boxes[1].hi[r] == doctest::Approx(hi).epsilon(1e-15));
  }
  // First-layer bounds equal min/max over the 2^4 corners.
  for (int r = 0; r < 3; ++r) {
    double cmin = 1e300, cmax = -1e300;
    for (int mask = 0; mask < 16; ++mask) {
      Vec x(4);
      for (int c = 0; c < 4; ++c)
        x[c] = (mask >> c) & 1 ? box.hi[c] : box.lo[c];
      Evaluation e = forward_eval(net, x);
      cmin = std::min(cmin, e.acts[1][r]);
      cmax = std::max(cmax, e.acts[1][r]);
    }
    CHECK(t1.boxes[1].lo[r] == doctest::Approx(cmin).epsilon(1e-12));
    CHECK(t1.boxes[1].hi[r] == doctest::Approx(cmax).epsilon(1e-12));
  }
}

TEST_CASE("relu and power transfer functions are exact") {
  Network net;
  net.input_shape = {3};
  Mat id(3, 3);
  id.a = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  net.layers = {Affine{id, Vec(3, 0.0)}, Relu{}};
  Box box{{-2.0, -0.5, 0.25}, {-1.0, 1.5, 2.0}};
  IbpTrace t = ibp_forward(net, box);
  CHECK(t.boxes[2].lo == Vec{0.0, 0.0, 0.25});
  CHECK(t.boxes[2].hi == Vec{0.0, 1.5, 2.0});

  net.layers = {Affine{id, Vec(3, 0.0)}, MonomialPower{2}};
  t = ibp_forward(net, box);
  CHECK(t.boxes[2].lo == Vec{1.0, 0.0, 0.0625});
  CHECK(t.boxes[2].hi == Vec{4.0, 2.25, 4.0});

  net.layers = {Affine{id, Vec(3, 0.0)}, MonomialPower{3}};
  t = ibp_forward(net, box);
  CHECK(t.boxes[2].lo == Vec{-8.0, -0.125, 0.015625});
  CHECK(t.boxes[2].hi == Vec{-1.0, 3.375, 8.0});
}

TEST_CASE("softmax row bounds are exact coordinatewise") {
  // One row, 3 entries.  By monotonicity each entry's extreme value over the
  // box is attained at the corner that raises its own logit and lowers the
  // rest (and vice versa); enumerate all corners and compare.
  Network net;
  net.input_shape = {1, 3};
  net.layers = {RowSoftmax{}, Reshape{{3}}};
  Rng rng(77);
  for (int trial = 0; trial < 8; ++trial) {
    Box box = Box{random_vec(rng, 3, 1.0), {}};
    box.hi = box.lo;
    for (int i = 0; i < 3; ++i) box.hi[i] += rng.uniform(0.0, 2.0);
    IbpTrace t = ibp_forward(net, box);
    Vec best_lo(3, 1e300), best_hi(3, -1e300);
    for (int mask = 0; mask < 8; ++mask) {
      Vec z(3);
      for (int c = 0; c < 3; ++c)
        z[c] = (mask >> c) & 1 ? box.hi[c] : box.lo[c];
      Evaluation e = forward_eval(net, z);
      for (int c = 0; c < 3; ++c) {
        best_lo[c] = std::min(best_lo[c], e.logits()[c]);
        best_hi[c] = std::max(best_hi[c], e.logits()[c]);
      }
    }
    for (int c = 0; c < 3; ++c) {
      CHECK(t.boxes[1].lo[c] == doctest::Approx(best_lo[c]).epsilon(1e-12));
      CHECK(t.boxes[1].hi[c] == doctest::Approx(best_hi[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("row-normalize bounds are exact for nonnegative rows") {
  Network net;
  net.input_shape = {1, 3};
  net.layers = {RowNormalize{}, Reshape{{3}}};
  Box box{{0.5, 1.0, 0.25}, {1.5, 2.0, 0.75}};
  IbpTrace t = ibp_forward(net, box);
  // corner enumeration (same monotone structure as softmax)
  Vec best_lo(3, 1e300), best_hi(3, -1e300);
  for (int mask = 0; mask < 8; ++mask) {
    Vec z(3);
    for (int c = 0; c < 3; ++c)
      z[c] = (mask >> c) & 1 ? box.hi[c] : box.lo[c];
    Evaluation e = forward_eval(net, z);
    for (int c = 0; c < 3; ++c) {
      best_lo[c] = std::min(best_lo[c], e.logits()[c]);
      best_hi[c] = std::max(best_hi[c], e.logits()[c]);
    }
  }
  for (int c = 0; c < 3; ++c) {
    CHECK(t.boxes[1].lo[c] == doctest::Approx(best_lo[c]).epsilon(1e-12));
    CHECK(t.boxes[1].hi[c] == doctest::Approx(best_hi[c]).epsilon(1e-12));
  }
  // a row that can be all-zero is rejected
  Box bad{{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
  IbpTrace dummy;
  CHECK_THROWS_AS(ibp_forward(net, bad, dummy), NumericError);
}

TEST_CASE("margin lower bound is sound against sampled margins") {
  Rng rng(99);
  Network net;
  net.input_shape = {5};
  net.layers = {Affine{random_mat(rng, 10, 5, 0.7), random_vec(rng, 10, 0.3)},
                Relu{},
                Affine{random_mat(rng, 4, 10, 0.7), random_vec(rng, 4, 0.3)}};
  for (int trial = 0; trial < 6; ++trial) {
    Box box = random_box(rng, 5, 0.8, 0.4);
    const int y = trial % 4;
    const double lb = ibp_margin_lower(net, box, y);
    for (int s = 0; s < 60; ++s) {
      Vec x = sample_in(rng, box);
      CHECK(margin(net, x, y).value >= lb - 1e-10);
    }
  }
}

TEST_CASE("degenerate boxes collapse to point evaluations") {
  Rng rng(123);
  Network net;
  net.input_shape = {4};
  net.layers = {Affine{random_mat(rng, 6, 4, 0.8), random_vec(rng, 6, 0.3)},
                Relu{},
                Affine{random_mat(rng, 3, 6, 0.8), random_vec(rng, 3, 0.3)}};
  Vec x = random_vec(rng, 4, 1.0);
  IbpTrace t = ibp_forward(net, Box{x, x});
  Evaluation e = forward_eval(net, x);
  for (size_t l = 0; l < e.acts.size(); ++l)
    for (size_t i = 0; i < e.acts[l].size(); ++i) {
      CHECK(t.boxes[l].lo[i] == doctest::Approx(e.acts[l][i]).epsilon(1e-14));
      CHECK(t.boxes[l].hi[i] == doctest::Approx(e.acts[l][i]).epsilon(1e-14));
    }
  const double m = margin(net, x, 1).value;
  CHECK(ibp_margin_lower(net, Box{x, x}, 1) == doctest::Approx(m).epsilon(1e-13));
}

TEST_CASE("box helpers and malformed inputs") {
  PerturbationBox pb{{1.0, 2.0}, 0.5};
  Box b = box_of(pb);
  CHECK(b.lo == Vec{0.5, 1.5});
  CHECK(b.hi == Vec{1.5, 2.5});

  Network net;
  net.input_shape = {2};
  Mat id(2, 2);
  id.a = {1, 0, 0, 1};
  net.layers = {Affine{id, Vec(2, 0.0)}};
  IbpTrace t;
  CHECK_THROWS_AS(ibp_forward(net, Box{{0.0}, {1.0}}, t), StructuralError);
  CHECK_THROWS_AS(ibp_forward(net, Box{{1.0, 0.0}, {0.0, 1.0}}, t),
                  StructuralError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstddef>
#include <vector>

#include "certbench/gen.hpp"
#include "certbench/interval.hpp"
#include "certbench/net.hpp"
#include "certbench/oracle.hpp"
#include "certbench/rng.hpp"
#include "doctest.h"

using namespace certbench;

namespace {

AttackOptions quick_attack(uint64_t seed) {
  AttackOptions o;
  o.random_samples = 2000;
  o.restarts = 24;
  o.steps = 120;
  o.seed = seed;
  return o;
}

int straddles(const Box& b) {
  int n = 0;
  for (size_t i = 0; i < b.size(); ++i)
    if (b.lo[i] < 0.0 && b.hi[i] > 0.0) ++n;
  return n;
}

}  // namespace

TEST_CASE("contractive cnn: norms, margin floor, attack cannot break it") {
  GenParams p;
  Instance inst = gen_contractive(p, 211, "ct-0");
  REQUIRE(check_certificate(inst).ok());

  const int depth = static_cast<int>(inst.cert.scalar("blocks"));
  const Vec* bn = inst.cert.vector("block_norms");
  REQUIRE(bn != nullptr);
  REQUIRE(static_cast<int>(bn->size()) == depth);
  const double lambda = inst.cert.scalar("lambda");
  double lip = inst.cert.scalar("l_front");
  for (int b = 0; b < depth; ++b) {
    // Rescaling targets lambda; the stored value is the recomputed norm and
    // must sit within a few ulp of the target.
    CHECK((*bn)[static_cast<size_t>(b)] ==
          doctest::Approx(lambda).epsilon(1e-12));
    CHECK((*bn)[static_cast<size_t>(b)] < 1.0);
    lip *= (*bn)[static_cast<size_t>(b)];
  }
  CHECK(lip == doctest::Approx(inst.cert.scalar("lip")).epsilon(1e-12));

  // The interval relaxation must see genuine instability even though the
  // network is analytically robust.
  CHECK(inst.cert.scalar("unstable_units") > 0);
  CHECK(inst.cert.scalar("ibp_margin_lower") < inst.cert.scalar("margin_x0"));

  // Analytic floor: margin >= gamma - |w_y|_1 * lip * eps = gamma(1 - 1/slack).
  const double gamma = inst.cert.scalar("gamma");
  const double slack = inst.cert.scalar("margin_slack");
  const double floor = gamma * (1.0 - 1.0 / slack);
  AttackResult atk =
      attack_search(inst.net, {inst.x0, inst.eps}, inst.label, quick_attack(7));
  CHECK_FALSE(atk.success);
  CHECK(atk.best_margin >= floor - 1e-9);
  CHECK(atk.best_margin <= inst.cert.scalar("margin_x0") + 1e-9);
}

TEST_CASE("contractive cnn: uncentered head variant") {
  GenParams p;
  p["uncentered"] = 1.0;
  p["classes"] = 4;
  Instance inst = gen_contractive(p, 223, "ct-u");
  REQUIRE(check_certificate(inst).ok());

  // Per-class floor: mu_k(x) >= mu_k(x0) - |w_y - w_k|_1 * lip * eps > 0.
  const double lip = inst.cert.scalar("lip");
  const auto& head = std::get<Affine>(inst.net.layers.back());
  Evaluation e0 = forward_eval(inst.net, inst.x0);
  double floor = std::numeric_limits<double>::infinity();
  for (int k = 0; k < inst.net.num_classes(); ++k) {
    if (k == inst.label) continue;
    double diff = 0.0;
    for (int j = 0; j < head.w.cols; ++j)
      diff += std::abs(head.w.at(inst.label, j) - head.w.at(k, j));
    const double mu0 = e0.logits()[static_cast<size_t>(inst.label)] -
                       e0.logits()[static_cast<size_t>(k)];
    floor = std::min(floor, mu0 - diff * lip * inst.eps);
  }
  CHECK(floor > 0.0);
  AttackResult atk =
      attack_search(inst.net, {inst.x0, inst.eps}, inst.label, quick_attack(8));
  CHECK_FALSE(atk.success);
  CHECK(atk.best_margin >= floor - 1e-9);
}

TEST_CASE("contractive cnn: tampering is rejected") {
  GenParams p;
  Instance good = gen_contractive(p, 229, "ct-t");
  REQUIRE(check_certificate(good).ok());

  SUBCASE("inflating a contractive block breaks the norm records") {
    Instance bad = good;
    auto& conv = std::get<Conv2d>(bad.net.layers[2]);
    for (double& f : conv.filters) f *= 1.01;
    CHECK_FALSE(check_certificate(bad).ok());
  }
  SUBCASE("shaving the head bias breaks the margin identity") {
    Instance bad = good;
    auto& head = std::get<Affine>(bad.net.layers.back());
    head.b[static_cast<size_t>(bad.label)] -= 0.01;
    CHECK_FALSE(check_certificate(bad).ok());
  }
  SUBCASE("understating the composed constant is caught") {
    Instance bad = good;
    bad.cert.scalars["lip"] *= 0.5;
    CHECK_FALSE(check_certificate(bad).ok());
  }
  SUBCASE("giving a competitor logit real weights is caught") {
    Instance bad = good;
    auto& head = std::get<Affine>(bad.net.layers.back());
    const int k = (bad.label + 1) % bad.net.num_classes();
    head.w.at(k, 0) = 0.3;
    CHECK_FALSE(check_certificate(bad).ok());
  }
}

TEST_CASE("paired bias cnn: global floor at gamma") {
  GenParams p;
  Instance inst = gen_paired_bias(p, 307, "pb-0");
  REQUIRE(check_certificate(inst).ok());
  const double gamma = inst.cert.scalar("gamma");

  AttackResult atk =
      attack_search(inst.net, {inst.x0, inst.eps}, inst.label, quick_attack(9));
  CHECK_FALSE(atk.success);
  CHECK(atk.best_margin >= gamma * (1.0 - 1e-9));

  // The bound is input-free: the margin stays above gamma far outside the
  // perturbation box too.
  Rng rng(99);
  for (int t = 0; t < 50; ++t) {
    Vec x(inst.x0.size());
    for (double& v : x) v = rng.uniform(-4.0, 4.0);
    CHECK(margin(inst.net, x, inst.label).value >= gamma * (1.0 - 1e-9));
  }
}

TEST_CASE("paired bias cnn: relaxation gap and unstable pairs") {
  GenParams p;
  Instance inst = gen_paired_bias(p, 311, "pb-1");
  REQUIRE(check_certificate(inst).ok());
  const double gamma = inst.cert.scalar("gamma");

  // Interval arithmetic treats the two pair halves independently and must
  // lose the cancellation: its bound sits strictly below the true floor.
  CHECK(inst.cert.scalar("ibp_margin_lower") < gamma);

  IbpTrace tr = ibp_forward(inst.net, box_of({inst.x0, inst.eps}));
  CHECK(straddles(tr.boxes[3]) > 0);  // paired conv pre-activations
}

TEST_CASE("paired bias cnn: tampering is rejected") {
  GenParams p;
  Instance good = gen_paired_bias(p, 313, "pb-t");
  REQUIRE(check_certificate(good).ok());

  SUBCASE("breaking the shared filter is caught") {
    Instance bad = good;
    auto& conv = std::get<Conv2d>(bad.net.layers[2]);
    conv.filters[conv.filters.size() - 1] += 1e-9;
    CHECK_FALSE(check_certificate(bad).ok());
  }
  SUBCASE("swapping a bias pair is caught") {
    Instance bad = good;
    auto& conv = std::get<Conv2d>(bad.net.layers[2]);
    std::swap(conv.bias[0], conv.bias[1]);
    CHECK_FALSE(check_certificate(bad).ok());
  }
  SUBCASE("re-weighting the head average is caught") {
    Instance bad = good;
    auto& head = std::get<Affine>(bad.net.layers.back());
    head.w.at(0, 0) *= 2.0;
    CHECK_FALSE(check_certificate(bad).ok());
  }
  SUBCASE("drifting a recorded center is caught") {
    Instance bad = good;
    bad.cert.vectors["t_center"][0] += 0.05;
    CHECK_FALSE(check_certificate(bad).ok());
  }
  SUBCASE("claiming a larger gamma than the head carries is caught") {
    Instance bad = good;
    bad.cert.scalars["gamma"] *= 1.5;
    CHECK_FALSE(check_certificate(bad).ok());
  }
}

TEST_CASE("cnn generators are deterministic in the seed") {
  GenParams p;
  Instance a = gen_contractive(p, 401, "d0");
  Instance b = gen_contractive(p, 401, "d0");
  Instance c = gen_paired_bias(p, 402, "d1");
  Instance d = gen_paired_bias(p, 402, "d1");
  CHECK(a.x0 == b.x0);
  CHECK(c.x0 == d.x0);
  CHECK(std::get<Affine>(a.net.layers.back()).b ==
        std::get<Affine>(b.net.layers.back()).b);
  CHECK(std::get<Conv2d>(c.net.layers[2]).filters ==
        std::get<Conv2d>(d.net.layers[2]).filters);
  CHECK(a.cert.scalars == b.cert.scalars);
  CHECK(c.cert.scalars == d.cert.scalars);

  Instance e = gen_contractive(p, 403, "d2");
  CHECK(e.x0 != a.x0);
}

TEST_CASE("cnn families are reachable through the dispatcher") {
  GenParams p;
  Instance a = generate_instance(kFamilyContractive, p, 501, "disp-ct");
  Instance b = generate_instance(kFamilyPairedBias, p, 502, "disp-pb");
  CHECK(a.cert.family == kFamilyContractive);
  CHECK(b.cert.family == kFamilyPairedBias);
  CHECK(check_certificate(a).ok());
  CHECK(check_certificate(b).ok());
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "certbench/errors.hpp"
#include "certbench/gen.hpp"
#include "certbench/net.hpp"
#include "certbench/rng.hpp"
#include "support/ref_roots.hpp"
#include "doctest.h"

using namespace certbench;

namespace {

double margin01_at(const Network& net, const Vec& x) {
  const Evaluation ev = forward_eval(net, x);
  return ev.logits()[0] - ev.logits()[1];
}

// Two-class net computing f0 - f1 = sum_h c_h (w_h x + b_h)^degree + c0.
Network poly_net(Mat w1, Vec b1, int degree, Vec head_row0, double head_bias0) {
  Network net;
  net.input_shape = {w1.cols};
  const int h = w1.rows;
  Mat w2(2, h);
  for (int j = 0; j < h; ++j) {
    w2.at(0, j) = head_row0[static_cast<std::size_t>(j)];
    w2.at(1, j) = 0.0;
  }
  Vec b2(2);
  b2[0] = head_bias0;
  b2[1] = 0.0;
  net.layers.push_back(Affine{std::move(w1), std::move(b1)});
  net.layers.push_back(MonomialPower{degree});
  net.layers.push_back(Affine{std::move(w2), std::move(b2)});
  return net;
}

std::vector<double> poly_mul(const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

// Dense Gaussian elimination with partial pivoting, test-local.
std::vector<double> solve_dense(std::vector<std::vector<double>> m,
                                std::vector<double> rhs) {
  const std::size_t n = rhs.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    REQUIRE(std::abs(m[col][col]) > 1e-12);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (std::size_t cc = col; cc < n; ++cc) m[r][cc] -= f * m[col][cc];
      rhs[r] -= f * rhs[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = rhs[i] / m[i][i];
  return x;
}

}  // namespace

TEST_CASE("root isolation handles the textbook cases") {
  // t^2 - 1 -> {-1, 1}
  auto r1 = real_roots_univariate({-1.0, 0.0, 1.0}, 10.0);
  REQUIRE(r1.size() == 2);
  CHECK(r1[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(r1[1] == doctest::Approx(1.0).epsilon(1e-12));

  // t^3 -> {0} (odd multiplicity still produces a sign change)
  auto r2 = real_roots_univariate({0.0, 0.0, 0.0, 1.0}, 10.0);
  REQUIRE(r2.size() == 1);
  CHECK(std::abs(r2[0]) <= 1e-10);

  // nonzero constant: no roots
  CHECK(real_roots_univariate({3.5}, 10.0).empty());

  // identically zero: structural refusal
  CHECK_THROWS_AS(real_roots_univariate({0.0, 0.0}, 10.0), ConfigError);

  // linear with root outside the window
  CHECK(real_roots_univariate({-25.0, 1.0}, 10.0).empty());
}

TEST_CASE("root isolation agrees with the derivative-isolation oracle") {
  Rng rng(0x7007);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> c(8);  // degree 7
    for (double& v : c) v = rng.uniform(-2.0, 2.0);
    if (std::abs(c.back()) < 1e-3) c.back() = 1.0;
    const auto mine = real_roots_univariate(c, 10.0);
    const auto ref = refsupport::ref_real_roots(c, 10.0);
    REQUIRE(mine.size() == ref.size());
    for (std::size_t i = 0; i < mine.size(); ++i)
      CHECK(std::abs(mine[i] - ref[i]) <=
            1e-9 * std::max(1.0, std::abs(ref[i])));
  }
}

TEST_CASE("line restriction coefficients reproduce the network margin") {
  Rng rng(0x51CE);
  for (int degree : {1, 2, 3, 5, 8}) {
    const int n = 6, h = 10;
    Mat w1(h, n);
    Vec b1(static_cast<std::size_t>(h));
    Vec row0(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < n; ++i) w1.at(j, i) = rng.normal() * 0.4;
      b1[static_cast<std::size_t>(j)] = rng.uniform(-0.5, 0.5);
      row0[static_cast<std::size_t>(j)] = rng.normal() * 0.3;
    }
    const Network net = poly_net(std::move(w1), std::move(b1), degree,
                                 std::move(row0), rng.uniform(-0.2, 0.2));
    Vec a(n), v(n);
    for (int i = 0; i < n; ++i) {
      a[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
      v[static_cast<std::size_t>(i)] = rng.normal();
    }
    const auto coeffs = margin_line_coeffs(net, a, v);
    REQUIRE(static_cast<int>(coeffs.size()) == degree + 1);
    for (int k = 0; k < 20; ++k) {
      const double t = rng.uniform(-2.0, 2.0);
      Vec x(n);
      for (int i = 0; i < n; ++i)
        x[static_cast<std::size_t>(i)] =
            a[static_cast<std::size_t>(i)] + t * v[static_cast<std::size_t>(i)];
      double horner = 0.0;
      for (std::size_t j = coeffs.size(); j-- > 0;) horner = horner * t + coeffs[j];
      const double direct = margin01_at(net, x);
      CHECK(std::abs(horner - direct) <=
            1e-9 * std::max({1.0, std::abs(horner), std::abs(direct)}));
    }
  }
}

TEST_CASE("boundary sampling lands on simple analytic surfaces") {
  // Hyperplane x_1 = 0: margin is the first coordinate.
  {
    const int n = 5;
    Mat w1(1, n);
    w1.at(0, 0) = 1.0;
    Vec b1(1);
    Vec row0(1);
    row0[0] = 1.0;
    const Network net = poly_net(std::move(w1), std::move(b1), 1, std::move(row0), 0.0);
    Rng rng(0xB0A);
    for (int k = 0; k < 5; ++k) {
      const Vec p = sample_boundary_point(net, rng, 50);
      CHECK(std::abs(p[0]) <= 1e-10);
    }
  }
  // Unit circle: margin is |x|^2 - 1 via degree-2 monomials.
  {
    
    Mat w1(2, 2);
    w1.at(0, 0) = 1.0;
    w1.at(1, 1) = 1.0;
    Vec b1(2);
    Vec row0(2);
    row0[0] = 1.0;
    row0[1] = 1.0;
    const Network net = poly_net(std::move(w1), std::move(b1), 2, std::move(row0), -1.0);
    Rng rng(0xC17C);
    for (int k = 0; k < 5; ++k) {
      const Vec p = sample_boundary_point(net, rng, 50);
      const double radius = std::sqrt(p[0] * p[0] + p[1] * p[1]);
      CHECK(std::abs(radius - 1.0) <= 1e-10);
    }
  }
}

TEST_CASE("generated polynomial instances satisfy the exact radius split") {
  GenParams params;
  const Instance inst = gen_polynomial(params, 0xD00D5, "poly-unit-1");
  CHECK(check_certificate(inst).ok());
  CHECK(inst.label == 0);
  CHECK(inst.cert.robust);

  const Vec& p = inst.cert.vectors.at("boundary_point");
  const Vec& u = inst.cert.vectors.at("normal_sign");
  const double r = inst.cert.scalars.at("r");
  const double delta = inst.cert.scalars.at("delta");

  // Bitwise placement identities.
  double dist = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    dist = std::max(dist, std::abs(inst.x0[i] - p[i]));
  CHECK(dist == r);
  CHECK(inst.eps + delta == r);
  CHECK(inst.eps == inst.cert.scalars.at("eps"));
  CHECK(delta > 0.0);

  // The normal is the gradient sign pattern at p.
  const GradResult g = grad_margin(inst.net, p, 0, 1);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double s = g.grad[i] > 0.0 ? 1.0 : (g.grad[i] < 0.0 ? -1.0 : 0.0);
    CHECK(u[i] == s);
  }

  // Sign constancy over the box: consistent with the separation verdict.
  Rng rng(0xFACE);
  const Vec lo = PerturbationBox{inst.x0, inst.eps}.lo();
  const Vec hi = PerturbationBox{inst.x0, inst.eps}.hi();
  double min_margin = 1e300;
  for (int s = 0; s < 10000; ++s) {
    Vec x(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) x[i] = rng.uniform(lo[i], hi[i]);
    min_margin = std::min(min_margin, margin01_at(inst.net, x));
  }
  CHECK(min_margin > 0.0);

  // Analytic gradient vs central finite differences.
  for (int s = 0; s < 5; ++s) {
    Vec x(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) x[i] = rng.uniform(lo[i], hi[i]);
    const Vec grad = grad_margin(inst.net, x, 0, 1).grad;
    const double hstep = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vec xp = x, xm = x;
      xp[i] += hstep;
      xm[i] -= hstep;
      const double fd = (margin01_at(inst.net, xp) - margin01_at(inst.net, xm)) /
                        (2.0 * hstep);
      CHECK(std::abs(fd - grad[i]) <=
            1e-6 * std::max({1.0, std::abs(fd), std::abs(grad[i])}));
    }
  }
}

TEST_CASE("separation protocol is frozen and the replay is deterministic") {
  GenParams params;
  params["dim"] = 5;
  params["hidden"] = 16;
  params["degree"] = 3;
  const Instance inst = gen_polynomial(params, 0xD00D7, "poly-unit-2");
  CHECK(inst.cert.scalars.at("sep_restarts") == 50.0);
  CHECK(inst.cert.scalars.at("sep_iters") == 500.0);
  CHECK(inst.cert.scalars.at("sep_threshold") == 1e-6);

  const auto serial = separation_check(inst.net, inst.x0, inst.eps, 50, 500,
                                       1e-6, 0xABCD, ExecMode::Serial);
  const auto parallel = separation_check(inst.net, inst.x0, inst.eps, 50, 500,
                                         1e-6, 0xABCD, ExecMode::Parallel);
  CHECK(serial.min_margin_sq == parallel.min_margin_sq);
  CHECK(serial.pass == parallel.pass);
  CHECK(serial.pass);
  CHECK(serial.min_margin_sq >= 1e-6);
}

TEST_CASE("a second boundary branch inside the box is caught and discarded") {
  // Quartic in the first coordinate with roots {-1, 0, c, 8}, c just inside
  // the perturbation box of an x0 planted from the root at 0.  Hidden units
  // (x_1 + beta)^4 with distinct beta span all quartics in x_1; solve for
  // the mixing coefficients.
  const double r = 0.05, delta = 0.004;
  const double eps = r - delta;
  const double croot = r - 0.5 * delta;
  const std::vector<double> target = poly_mul(
      poly_mul({1.0, 1.0}, {0.0, 1.0}), poly_mul({-croot, 1.0}, {-8.0, 1.0}));
  REQUIRE(target.size() == 5);

  const std::vector<double> betas = {0.0, 1.0, -1.0, 2.0, -2.0};
  std::vector<std::vector<double>> m(5, std::vector<double>(5, 0.0));
  const double binom4[5] = {1.0, 4.0, 6.0, 4.0, 1.0};
  for (std::size_t col = 0; col < 5; ++col) {
    double bp = 1.0;  // beta^(4-j) built downward
    std::vector<double> pows(5, 1.0);
    for (int j = 1; j <= 4; ++j) pows[static_cast<std::size_t>(j)] = pows[static_cast<std::size_t>(j - 1)] * betas[col];
    for (std::size_t j = 0; j < 5; ++j)
      m[j][col] = binom4[j] * pows[4 - j];
    (void)bp;
  }
  const std::vector<double> coef = solve_dense(m, target);

  const int n = 4;
  Mat w1(5, n);
  Vec b1(5);
  Vec row0(5);
  for (int hidx = 0; hidx < 5; ++hidx) {
    w1.at(hidx, 0) = 1.0;
    b1[static_cast<std::size_t>(hidx)] = betas[static_cast<std::size_t>(hidx)];
    row0[static_cast<std::size_t>(hidx)] = coef[static_cast<std::size_t>(hidx)];
  }
  const Network net = poly_net(std::move(w1), std::move(b1), 4, std::move(row0), 0.0);

  // Sanity: the margin really is the target quartic in x_1.
  {
    Vec x(n);
    x[0] = 0.3;
    x[1] = -0.7;
    double horner = 0.0;
    for (std::size_t j = target.size(); j-- > 0;) horner = horner * 0.3 + target[j];
    CHECK(std::abs(margin01_at(net, x) - horner) <= 1e-9 * std::max(1.0, std::abs(horner)));
  }

  // Plant x0 from the boundary root at x_1 = 0 following the gradient sign,
  // exactly as the generator would.
  Vec p(n);
  p[1] = 0.2;
  p[2] = -0.3;
  p[3] = 0.4;
  const Vec g = grad_margin(net, p, 0, 1).grad;
  REQUIRE(g[0] > 0.0);  // placement moves +e1, toward the branch at croot
  Vec x0 = p;
  x0[0] = p[0] + r;

  // The second branch sits at |croot - r| = delta/2 < eps from x0, so the
  // separation protocol must reject the placement.
  const auto rep = separation_check(net, x0, eps, 50, 500, 1e-6, 0xBEEF);
  CHECK_FALSE(rep.pass);
  CHECK(rep.min_margin_sq < 1e-6);

  // Independent confirmation on a dense 41^4 grid: the box genuinely
  // straddles the surface.
  bool pos = false, neg = false;
  const int gpts = 41;
  Vec x(n);
  for (int i0 = 0; i0 < gpts; ++i0)
    for (int i1 = 0; i1 < gpts; ++i1)
      for (int i2 = 0; i2 < gpts; ++i2)
        for (int i3 = 0; i3 < gpts; ++i3) {
          const int idx[4] = {i0, i1, i2, i3};
          for (int d = 0; d < 4; ++d)
            x[static_cast<std::size_t>(d)] =
                x0[static_cast<std::size_t>(d)] - eps +
                2.0 * eps * static_cast<double>(idx[d]) / (gpts - 1);
          const double mu = margin01_at(net, x);
          pos = pos || mu > 0.0;
          neg = neg || mu < 0.0;
        }
  CHECK(pos);
  CHECK(neg);
}

TEST_CASE("builder discards hopeless parameter draws") {
  // A razor-thin shell (delta ~ 1e-9) cannot clear the absolute separation
  // threshold, so every attempt is discarded and the builder gives up.
  GenParams params;
  params["dim"] = 2;
  params["hidden"] = 8;
  params["degree"] = 3;
  params["r"] = 0.05;
  params["delta"] = 1e-9;
  params["retries"] = 3;
  CHECK_THROWS_AS(gen_polynomial(params, 0xBAD5EED, "poly-unit-3"),
                  GenerationError);
}

TEST_CASE("polynomial tampering is rejected") {
  GenParams params;
  const Instance base = gen_polynomial(params, 0xD00D9, "poly-unit-4");
  REQUIRE(check_certificate(base).ok());

  {
    Instance t = base;
    t.x0[0] = std::nextafter(t.x0[0], 100.0);
    CHECK_FALSE(check_certificate(t).ok());
  }
  {
    Instance t = base;
    t.cert.scalars["r"] = std::nextafter(t.cert.scalars["r"], 1.0);
    CHECK_FALSE(check_certificate(t).ok());
  }
  {
    Instance t = base;
    t.cert.vectors["boundary_point"][0] += 1e-3;
    CHECK_FALSE(check_certificate(t).ok());
  }
  {
    Instance t = base;
    t.cert.scalars["degree"] += 1.0;
    CHECK_FALSE(check_certificate(t).ok());
  }
  {
    Instance t = base;
    t.cert.scalars["sep_threshold"] = 1e-7;
    CHECK_FALSE(check_certificate(t).ok());
  }
  {
    Instance t = base;
    t.cert.scalars["margin_x0"] *= 1.01;
    CHECK_FALSE(check_certificate(t).ok());
  }
}

TEST_CASE("polynomial generation is deterministic in the seed") {
  GenParams params;
  const Instance a = gen_polynomial(params, 0xFEED1, "poly-det");
  const Instance b = gen_polynomial(params, 0xFEED1, "poly-det");
  const Instance c = generate_instance(kFamilyPolynomial, params, 0xFEED1, "poly-det");
  REQUIRE(a.x0.size() == b.x0.size());
  for (std::size_t i = 0; i < a.x0.size(); ++i) {
    CHECK(a.x0[i] == b.x0[i]);
    CHECK(a.x0[i] == c.x0[i]);
  }
  CHECK(a.cert.scalars.at("margin_x0") == b.cert.scalars.at("margin_x0"));
  CHECK(a.cert.scalars.at("sep_min_margin_sq") ==
        c.cert.scalars.at("sep_min_margin_sq"));

  const Instance d = gen_polynomial(params, 0xFEED2, "poly-det-2");
  CHECK(d.cert.scalars.at("margin_x0") != a.cert.scalars.at("margin_x0"));
}

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "certbench/errors.hpp"
#include "certbench/gen.hpp"
#include "certbench/interval.hpp"
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

bool close(double a, double b, double tol_rel) {
  return std::abs(a - b) <= tol_rel * std::max({1.0, std::abs(a), std::abs(b)});
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Power iteration converges from below at relative tolerance 1e-10; the
// cushion turns the estimate into a usable upper bound for certificate
// arithmetic.  Generator and checker call the same function, so the value is
// reproduced bitwise.
double op_norm_upper(const Mat& m) { return operator_norm_2(m) * (1.0 + 1e-9); }

double max_head_row_norm(const Mat& w) {
  double best = 0.0;
  for (int r = 0; r < w.rows; ++r) best = std::max(best, l2_row(w, r));
  return best;
}

// S = X M X^T for a flat row-major (n,dt) token block.
Mat score_matrix(const Vec& x, int n, int dt, const Mat& m) {
  Mat xm(n, m.cols);
  matmul(x.data(), n, dt, m.a.data(), m.cols, xm.a.data());
  Mat s(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      s.at(i, j) = dot(xm.row(i), x.data() + static_cast<size_t>(j) * dt, dt);
  return s;
}

double token_norm(const Vec& x, int i, int dt) {
  return std::sqrt(dot(x.data() + static_cast<size_t>(i) * dt,
                       x.data() + static_cast<size_t>(i) * dt, dt));
}

double token_diff_norm(const Vec& x, int i, int j, int dt) {
  double s = 0.0;
  for (int a = 0; a < dt; ++a) {
    const double d = x[static_cast<size_t>(i) * dt + a] -
                     x[static_cast<size_t>(j) * dt + a];
    s += d * d;
  }
  return std::sqrt(s);
}

// Worst-case single-entry score drift over the box, maximized over (i,j).
double score_drift_constant(const Vec& x0, int n, int dt, double m_op,
                            double eps) {
  double max_pair = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      max_pair = std::max(max_pair,
                          token_norm(x0, i, dt) + token_norm(x0, j, dt));
  const double rd = std::sqrt(static_cast<double>(dt));
  return rd * m_op * max_pair + eps * static_cast<double>(dt) * m_op;
}

// Certified per-row dominance ratios: lower-bound the dominant raw weight
// and upper-bound the off-dominant total via the interval box of the raw
// weight matrix, so the ratio holds everywhere in the perturbation set.
Vec certified_dominance(const Network& net, const Vec& x0, double eps, int n,
                        const std::vector<int>& keys) {
  Network sub;
  sub.input_shape = net.input_shape;
  sub.layers.push_back(net.layers[0]);
  Box w = ibp_forward(sub, box_of({x0, eps})).boxes.back();
  Vec rho(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double lb = w.lo[static_cast<size_t>(i) * n + keys[static_cast<size_t>(i)]];
    double ub = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != keys[static_cast<size_t>(i)])
        ub += w.hi[static_cast<size_t>(i) * n + j];
    rho[static_cast<size_t>(i)] =
        (lb > 0.0 && ub > 0.0) ? lb / ub
                               : (lb > 0.0
                                      ? std::numeric_limits<double>::infinity()
                                      : 0.0);
  }
  return rho;
}

double value_spread(const Mat& v0, const std::vector<int>& keys) {
  double best = 0.0;
  for (int i = 0; i < v0.rows; ++i) {
    const int js = keys[static_cast<size_t>(i)];
    for (int j = 0; j < v0.rows; ++j) {
      if (j == js) continue;
      double s = 0.0;
      for (int c = 0; c < v0.cols; ++c) {
        const double d = v0.at(j, c) - v0.at(js, c);
        s += d * d;
      }
      best = std::max(best, std::sqrt(s));
    }
  }
  return best;
}

// Solve G Z = T in place with partial pivoting; false on a tiny pivot.
bool solve_square(Mat g, Mat& t) {
  const int n = g.rows;
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(g.at(r, c)) > std::abs(g.at(piv, c))) piv = r;
    if (std::abs(g.at(piv, c)) < 1e-10) return false;
    if (piv != c)
      for (int k = 0; k < n; ++k) {
        std::swap(g.at(piv, k), g.at(c, k));
        std::swap(t.at(piv, k), t.at(c, k));
      }
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = g.at(r, c) / g.at(c, c);
      if (f == 0.0) continue;
      for (int k = 0; k < n; ++k) {
        g.at(r, k) -= f * g.at(c, k);
        t.at(r, k) -= f * t.at(c, k);
      }
    }
  }
  for (int r = 0; r < n; ++r) {
    const double d = g.at(r, r);
    for (int k = 0; k < n; ++k) t.at(r, k) /= d;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Fixed-ordering softmax attention.  The nominal score gaps in every row are
// large enough that no entrywise-eps token perturbation can change any
// row-wise argmax, and the attention output drifts by at most
// sqrt(n) * l_attn * eps in Frobenius norm; a linear head whose nominal
// margin clears twice the induced logit drift is therefore robust.
// ---------------------------------------------------------------------------

Instance gen_softmax_order(const GenParams& p, std::uint64_t seed,
                           std::string id) {
  const int n = static_cast<int>(param(p, "tokens", 4));
  const int dt = static_cast<int>(param(p, "token_dim", 8));
  const int dv = static_cast<int>(param(p, "value_dim", 8));
  const int classes = static_cast<int>(param(p, "classes", 3));
  const double alpha = param(p, "score_scale", 5.0);
  const double eps = param(p, "eps", 1e-3);
  const double slack = param(p, "margin_slack", 1.1);
  const int retries = static_cast<int>(param(p, "retries", 200));
  if (n < 2 || dt < 1 || dv < 1 || classes < 2)
    throw ConfigError("softmax_order: bad dimensions");
  if (!(eps > 0.0) || !(alpha > 0.0) || !(slack > 1.0))
    throw ConfigError(
        "softmax_order: need eps > 0, score_scale > 0, margin_slack > 1");

  for (int attempt = 0; attempt < retries; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(attempt)));
    Vec x0 = uniform_vec(rng, n * dt, -1.0, 1.0);

    Mat g = normal_mat(rng, dt, dt, 1.0);
    const double g_op = operator_norm_2(g);
    if (g_op < 1e-9) continue;
    Mat m(dt, dt);
    for (size_t i = 0; i < g.a.size(); ++i) m.a[i] = (alpha / g_op) * g.a[i];
    const double m_op = op_norm_upper(m);

    // Row-wise score maximizers and their worst-case gap ratios.
    Mat s0 = score_matrix(x0, n, dt, m);
    Vec pi(static_cast<size_t>(n));
    double min_ratio = std::numeric_limits<double>::infinity();
    bool viable = true;
    for (int i = 0; i < n && viable; ++i) {
      int star = 0;
      for (int j = 1; j < n; ++j)
        if (s0.at(i, j) > s0.at(i, star)) star = j;
      pi[static_cast<size_t>(i)] = star;
      for (int j = 0; j < n; ++j) {
        if (j == star) continue;
        const double gap = s0.at(i, star) - s0.at(i, j);
        const double cij = score_gap_constant(
            m_op, token_diff_norm(x0, star, j, dt), token_norm(x0, i, dt), dt,
            eps);
        const double ratio = gap / (eps * cij);
        min_ratio = std::min(min_ratio, ratio);
        if (!(ratio > 1.0)) {
          viable = false;
          break;
        }
      }
    }
    if (!viable) continue;

    Mat wv = normal_mat(rng, dt, dv, 1.0 / std::sqrt(static_cast<double>(dt)));
    const double wv_op = op_norm_upper(wv);
    Mat v0(n, dv);
    matmul(x0.data(), n, dt, wv.a.data(), dv, v0.a.data());
    double v0_row_max = 0.0;
    for (int i = 0; i < n; ++i) v0_row_max = std::max(v0_row_max, l2_row(v0, i));

    const double bs_bar = score_drift_constant(x0, n, dt, m_op, eps);
    const double rd = std::sqrt(static_cast<double>(dt));
    const double half_n = 0.5 * static_cast<double>(n);
    const double l_attn = half_n * bs_bar * v0_row_max + rd * wv_op +
                          half_n * eps * bs_bar * rd * wv_op;

    Mat head = normal_mat(rng, classes, n * dv, 0.8);
    const double l_h = max_head_row_norm(head);
    const double drift =
        2.0 * l_h * std::sqrt(static_cast<double>(n)) * l_attn * eps;

    Instance inst;
    inst.id = id;
    inst.label = 0;
    inst.eps = eps;
    inst.x0 = x0;
    inst.net.input_shape = {n, dt};
    inst.net.layers.push_back(BilinearScore{std::move(m)});
    inst.net.layers.push_back(RowSoftmax{});
    inst.net.layers.push_back(ValueProject{std::move(wv)});
    inst.net.layers.push_back(
        Affine{std::move(head), Vec(static_cast<size_t>(classes), 0.0)});
    const double mu0 = margin(inst.net, inst.x0, inst.label).value;
    std::get<Affine>(inst.net.layers.back()).b[0] += slack * drift - mu0;
    inst.net.validate();

    Certificate& c = inst.cert;
    c.family = kFamilySoftmaxOrder;
    c.robust = true;
    c.scalars["tokens"] = n;
    c.scalars["token_dim"] = dt;
    c.scalars["value_dim"] = dv;
    c.scalars["score_scale"] = alpha;
    c.scalars["m_op"] = m_op;
    c.scalars["wv_op"] = wv_op;
    c.scalars["v0_row_max"] = v0_row_max;
    c.scalars["score_drift"] = bs_bar;
    c.scalars["l_attn"] = l_attn;
    c.scalars["l_h"] = l_h;
    c.scalars["drift_bound"] = drift;
    c.scalars["margin_slack"] = slack;
    c.scalars["min_gap_ratio"] = min_ratio;
    c.scalars["margin_x0"] = margin(inst.net, inst.x0, inst.label).value;
    c.vectors["pi_star"] = pi;

    CheckReport rep = check_certificate(inst);
    if (!rep.ok())
      throw GenerationError("softmax_order " + inst.id + ": " +
                            rep.failures.front());
    return inst;
  }
  throw GenerationError("softmax_order " + id +
                        ": no draw achieved stable score gaps");
}

CheckReport check_softmax_order(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const int n = static_cast<int>(c.scalar("tokens"));
  const int dt = static_cast<int>(c.scalar("token_dim"));
  const double slack = c.scalar("margin_slack");
  const Vec* pi = c.vector("pi_star");
  if (n < 2 || dt < 1 || pi == nullptr ||
      pi->size() != static_cast<size_t>(n)) {
    rep.fail("token bookkeeping missing");
    return rep;
  }
  if (!c.robust) rep.fail("fixed-ordering instances certify robust");
  if (!(slack > 1.0)) rep.fail("margin slack must exceed 1");
  if (inst.net.input_shape != Shape{n, dt}) {
    rep.fail("input shape disagrees with certificate");
    return rep;
  }
  if (inst.net.layers.size() != 4 ||
      !std::holds_alternative<BilinearScore>(inst.net.layers[0]) ||
      !std::holds_alternative<RowSoftmax>(inst.net.layers[1]) ||
      !std::holds_alternative<ValueProject>(inst.net.layers[2]) ||
      !std::holds_alternative<Affine>(inst.net.layers[3])) {
    rep.fail("expected score, softmax, value projection, head");
    return rep;
  }
  const auto& mlayer = std::get<BilinearScore>(inst.net.layers[0]);
  const auto& vlayer = std::get<ValueProject>(inst.net.layers[2]);
  const auto& head = std::get<Affine>(inst.net.layers[3]);

  const double m_op = op_norm_upper(mlayer.m);
  if (!close(m_op, c.scalar("m_op"), 1e-9)) rep.fail("score norm drifted");
  const double wv_op = op_norm_upper(vlayer.wv);
  if (!close(wv_op, c.scalar("wv_op"), 1e-9)) rep.fail("value norm drifted");

  Mat s0 = score_matrix(inst.x0, n, dt, mlayer.m);
  double min_ratio = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    int star = 0;
    for (int j = 1; j < n; ++j)
      if (s0.at(i, j) > s0.at(i, star)) star = j;
    if (star != static_cast<int>((*pi)[static_cast<size_t>(i)])) {
      rep.fail("row " + std::to_string(i) + " score maximizer drifted");
      return rep;
    }
    for (int j = 0; j < n; ++j) {
      if (j == star) continue;
      const double gap = s0.at(i, star) - s0.at(i, j);
      const double cij = score_gap_constant(
          m_op, token_diff_norm(inst.x0, star, j, dt),
          token_norm(inst.x0, i, dt), dt, inst.eps);
      const double ratio = gap / (inst.eps * cij);
      min_ratio = std::min(min_ratio, ratio);
      if (!(ratio > 1.0))
        rep.fail("row " + std::to_string(i) + " gap to key " +
                 std::to_string(j) + " can close: ratio " + fmt(ratio));
    }
  }
  if (!close(min_ratio, c.scalar("min_gap_ratio"), 1e-9))
    rep.fail("stored gap ratio drifted");

  const int dv = vlayer.wv.cols;
  Mat v0(n, dv);
  matmul(inst.x0.data(), n, dt, vlayer.wv.a.data(), dv, v0.a.data());
  double v0_row_max = 0.0;
  for (int i = 0; i < n; ++i) v0_row_max = std::max(v0_row_max, l2_row(v0, i));
  if (!close(v0_row_max, c.scalar("v0_row_max"), 1e-9))
    rep.fail("nominal value row norm drifted");

  const double bs_bar = score_drift_constant(inst.x0, n, dt, m_op, inst.eps);
  if (!close(bs_bar, c.scalar("score_drift"), 1e-9))
    rep.fail("score drift constant drifted");
  const double rd = std::sqrt(static_cast<double>(dt));
  const double half_n = 0.5 * static_cast<double>(n);
  const double l_attn = half_n * bs_bar * v0_row_max + rd * wv_op +
                        half_n * inst.eps * bs_bar * rd * wv_op;
  if (!close(l_attn, c.scalar("l_attn"), 1e-9))
    rep.fail("attention drift constant drifted");

  const double l_h = max_head_row_norm(head.w);
  if (!close(l_h, c.scalar("l_h"), 1e-9)) rep.fail("head constant drifted");
  const double drift =
      2.0 * l_h * std::sqrt(static_cast<double>(n)) * l_attn * inst.eps;
  if (!close(drift, c.scalar("drift_bound"), 1e-9))
    rep.fail("logit drift bound drifted");

  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("margin_x0"), 1e-9)) rep.fail("margin_x0 drifted");
  if (!(m0 > drift))
    rep.fail("margin " + fmt(m0) + " does not clear the drift bound " +
             fmt(drift));
  if (!close(m0, slack * drift, 1e-9))
    rep.fail("margin does not match its slack");
  return rep;
}

// ---------------------------------------------------------------------------
// Dominant-key linear attention.  Queries and keys are steered (through the
// token pseudo-inverse) so that each query row's raw weight on its own key
// dominates all others by a ratio the interval bounds certify over the whole
// perturbation set; each attention row then stays near one value vector, and
// the output drift bound follows from the dominance ratio alone.
// ---------------------------------------------------------------------------

Instance gen_dominant_key(const GenParams& p, std::uint64_t seed,
                          std::string id) {
  const int n = static_cast<int>(param(p, "tokens", 4));
  const int dt = static_cast<int>(param(p, "token_dim", 8));
  const int dv = static_cast<int>(param(p, "value_dim", 4));
  const int classes = static_cast<int>(param(p, "classes", 3));
  const double eps = param(p, "eps", 0.05);
  const double factor = param(p, "margin_factor", 1.5);
  const double gate = param(p, "gate_scale", 0.5);
  const double noise = param(p, "noise_scale", 0.2);
  const double zeta = param(p, "zeta", 0.01);
  const int retries = static_cast<int>(param(p, "retries", 100));
  if (n < 2 || dt < 1 || dv < 1 || classes < 2)
    throw ConfigError("dominant_key: bad dimensions");
  if (!(eps > 0.0) || !(factor > 1.0) || !(gate > 0.0) || noise < 0.0 ||
      !(zeta > 0.0))
    throw ConfigError(
        "dominant_key: need eps > 0, margin_factor > 1, gate_scale > 0, "
        "noise_scale >= 0, zeta > 0");

  std::vector<int> keys(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) keys[static_cast<size_t>(i)] = i;

  for (int attempt = 0; attempt < retries; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(attempt)));
    Vec x0 = uniform_vec(rng, n * dt, -1.0, 1.0);

    // Steer X0 wq toward gate * I and X0 wk toward the gate/noise pattern:
    // wq = X0^T (X0 X0^T)^{-1} Tq solves X0 wq = Tq exactly when the tokens
    // are linearly independent.
    Mat gram(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        gram.at(i, j) = dot(x0.data() + static_cast<size_t>(i) * dt,
                            x0.data() + static_cast<size_t>(j) * dt, dt);
    Mat tq(n, n), tk(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        tq.at(i, j) = (i == j) ? gate : 0.0;
        tk.at(i, j) = (i == j) ? gate : -noise;
      }
    Mat zq = tq, zk = tk;
    if (!solve_square(gram, zq) || !solve_square(gram, zk)) continue;
    Mat wq(dt, n), wk(dt, n);
    for (int a = 0; a < dt; ++a)
      for (int j = 0; j < n; ++j) {
        double sq = 0.0, sk = 0.0;
        for (int i = 0; i < n; ++i) {
          const double xi = x0[static_cast<size_t>(i) * dt + a];
          sq += xi * zq.at(i, j);
          sk += xi * zk.at(i, j);
        }
        wq.at(a, j) = sq;
        wk.at(a, j) = sk;
      }

    Instance inst;
    inst.id = id;
    inst.label = 0;
    inst.eps = eps;
    inst.x0 = x0;
    inst.net.input_shape = {n, dt};
    inst.net.layers.push_back(LinearAttnScore{std::move(wq), std::move(wk), zeta});

    Vec rho_rows = certified_dominance(inst.net, x0, eps, n, keys);
    double rho = std::numeric_limits<double>::infinity();
    for (double r : rho_rows) rho = std::min(rho, r);
    if (!(rho > 0.0)) continue;

    Mat wv = normal_mat(rng, dt, dv, 1.0 / std::sqrt(static_cast<double>(dt)));
    const double wv_op = op_norm_upper(wv);
    const double l_v = std::sqrt(static_cast<double>(dt)) * wv_op;
    Mat v0(n, dv);
    matmul(x0.data(), n, dt, wv.a.data(), dv, v0.a.data());
    const double d_v = value_spread(v0, keys);
    const double delta_lin = linear_drift_bound(rho, d_v, eps, l_v);

    Mat head = normal_mat(rng, classes, n * dv, 0.8);
    const double l_h = max_head_row_norm(head);
    const double drift =
        2.0 * l_h * std::sqrt(static_cast<double>(n)) * delta_lin;

    inst.net.layers.push_back(RowNormalize{});
    inst.net.layers.push_back(ValueProject{std::move(wv)});
    inst.net.layers.push_back(
        Affine{std::move(head), Vec(static_cast<size_t>(classes), 0.0)});
    const double mu0 = margin(inst.net, inst.x0, inst.label).value;
    std::get<Affine>(inst.net.layers.back()).b[0] += factor * drift - mu0;
    inst.net.validate();

    Certificate& c = inst.cert;
    c.family = kFamilyDominantKey;
    c.robust = true;
    c.scalars["tokens"] = n;
    c.scalars["token_dim"] = dt;
    c.scalars["value_dim"] = dv;
    c.scalars["zeta"] = zeta;
    c.scalars["gate_scale"] = gate;
    c.scalars["noise_scale"] = noise;
    c.scalars["rho"] = rho;
    c.scalars["value_spread"] = d_v;
    c.scalars["wv_op"] = wv_op;
    c.scalars["l_v"] = l_v;
    c.scalars["delta_lin"] = delta_lin;
    c.scalars["l_h"] = l_h;
    c.scalars["drift_bound"] = drift;
    c.scalars["margin_factor"] = factor;
    c.scalars["margin_x0"] = margin(inst.net, inst.x0, inst.label).value;
    Vec keyvec(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) keyvec[static_cast<size_t>(i)] = keys[static_cast<size_t>(i)];
    c.vectors["dominant_keys"] = std::move(keyvec);
    c.vectors["rho_rows"] = std::move(rho_rows);

    CheckReport rep = check_certificate(inst);
    if (!rep.ok())
      throw GenerationError("dominant_key " + inst.id + ": " +
                            rep.failures.front());
    return inst;
  }
  throw GenerationError("dominant_key " + id +
                        ": no draw achieved certified dominance");
}

CheckReport check_dominant_key(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const int n = static_cast<int>(c.scalar("tokens"));
  const int dt = static_cast<int>(c.scalar("token_dim"));
  const double factor = c.scalar("margin_factor");
  const Vec* keyvec = c.vector("dominant_keys");
  const Vec* rho_vec = c.vector("rho_rows");
  if (n < 2 || dt < 1 || keyvec == nullptr || rho_vec == nullptr ||
      keyvec->size() != static_cast<size_t>(n) ||
      rho_vec->size() != static_cast<size_t>(n)) {
    rep.fail("dominance bookkeeping missing");
    return rep;
  }
  if (!c.robust) rep.fail("dominant-key instances certify robust");
  if (!(factor > 1.0)) rep.fail("margin factor must exceed 1");
  if (inst.net.input_shape != Shape{n, dt}) {
    rep.fail("input shape disagrees with certificate");
    return rep;
  }
  if (inst.net.layers.size() != 4 ||
      !std::holds_alternative<LinearAttnScore>(inst.net.layers[0]) ||
      !std::holds_alternative<RowNormalize>(inst.net.layers[1]) ||
      !std::holds_alternative<ValueProject>(inst.net.layers[2]) ||
      !std::holds_alternative<Affine>(inst.net.layers[3])) {
    rep.fail("expected raw weights, normalization, value projection, head");
    return rep;
  }
  const auto& score = std::get<LinearAttnScore>(inst.net.layers[0]);
  const auto& vlayer = std::get<ValueProject>(inst.net.layers[2]);
  const auto& head = std::get<Affine>(inst.net.layers[3]);
  if (score.zeta != c.scalar("zeta") || !(score.zeta > 0.0)) {
    rep.fail("feature-map offset drifted or nonpositive");
    return rep;
  }

  std::vector<int> keys(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double k = (*keyvec)[static_cast<size_t>(i)];
    if (k < 0 || k >= n || k != std::floor(k)) {
      rep.fail("dominant key out of range");
      return rep;
    }
    keys[static_cast<size_t>(i)] = static_cast<int>(k);
  }

  Vec rho_rows = certified_dominance(inst.net, inst.x0, inst.eps, n, keys);
  double rho = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (!close(rho_rows[static_cast<size_t>(i)],
               (*rho_vec)[static_cast<size_t>(i)], 1e-12))
      rep.fail("row " + std::to_string(i) + " dominance ratio drifted");
    rho = std::min(rho, rho_rows[static_cast<size_t>(i)]);
  }
  if (!(rho > 0.0)) rep.fail("dominance not certified");
  if (!close(rho, c.scalar("rho"), 1e-12)) rep.fail("stored rho drifted");

  const double wv_op = op_norm_upper(vlayer.wv);
  if (!close(wv_op, c.scalar("wv_op"), 1e-9)) rep.fail("value norm drifted");
  const double l_v = std::sqrt(static_cast<double>(dt)) * wv_op;
  if (!close(l_v, c.scalar("l_v"), 1e-9)) rep.fail("value drift constant");

  const int dv = vlayer.wv.cols;
  Mat v0(n, dv);
  matmul(inst.x0.data(), n, dt, vlayer.wv.a.data(), dv, v0.a.data());
  const double d_v = value_spread(v0, keys);
  if (!close(d_v, c.scalar("value_spread"), 1e-9))
    rep.fail("value spread drifted");

  const double delta_lin = linear_drift_bound(rho, d_v, inst.eps, l_v);
  if (!close(delta_lin, c.scalar("delta_lin"), 1e-9))
    rep.fail("output drift bound drifted");
  const double l_h = max_head_row_norm(head.w);
  if (!close(l_h, c.scalar("l_h"), 1e-9)) rep.fail("head constant drifted");
  const double drift =
      2.0 * l_h * std::sqrt(static_cast<double>(n)) * delta_lin;
  if (!close(drift, c.scalar("drift_bound"), 1e-9))
    rep.fail("logit drift bound drifted");

  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("margin_x0"), 1e-9)) rep.fail("margin_x0 drifted");
  if (!(m0 > drift))
    rep.fail("margin " + fmt(m0) + " does not clear the drift bound " +
             fmt(drift));
  if (!close(m0, factor * drift, 1e-9))
    rep.fail("margin does not match its factor");
  return rep;
}

}  // namespace certbench

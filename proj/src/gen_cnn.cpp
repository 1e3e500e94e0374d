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

Vec normal_vec(Rng& rng, int n, double sigma) {
  Vec v(static_cast<size_t>(n));
  for (double& x : v) x = sigma * rng.normal();
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

// Upper bound on the l-inf operator norm of the (linear part of a) conv
// layer: every output unit's unrolled row is a subset of one out-channel's
// taps, so the max per-channel tap mass dominates all rows.  Interior units
// attain it, making this the exact induced norm on large enough inputs.
double conv_linf_norm(const Conv2d& c) {
  const int per = c.in_ch * c.kh * c.kw;
  double best = 0.0;
  for (int co = 0; co < c.out_ch; ++co) {
    double s = 0.0;
    for (int t = 0; t < per; ++t)
      s += std::abs(c.filters[static_cast<size_t>(co * per + t)]);
    best = std::max(best, s);
  }
  return best;
}

Conv2d random_conv(Rng& rng, int in_ch, int out_ch, int k, double sigma) {
  Conv2d c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kh = c.kw = k;
  c.stride = 1;
  c.pad = k / 2;
  c.filters.resize(static_cast<size_t>(out_ch) * in_ch * k * k);
  for (double& f : c.filters) f = sigma * rng.normal();
  c.bias.assign(static_cast<size_t>(out_ch), 0.0);
  return c;
}

// Pre-activation box of the most recently appended layer.
Box last_preact_box(const Network& net, const Vec& x0, double eps) {
  IbpTrace tr = ibp_forward(net, box_of({x0, eps}));
  return tr.boxes.back();
}

// Mean interval midpoint per channel of a (ch, h, w) box.
Vec channel_mid_means(const Box& b, int ch) {
  const int hw = static_cast<int>(b.size()) / ch;
  Vec t(static_cast<size_t>(ch), 0.0);
  for (int c = 0; c < ch; ++c) {
    double s = 0.0;
    for (int u = 0; u < hw; ++u) {
      const size_t i = static_cast<size_t>(c * hw + u);
      s += (b.lo[i] + b.hi[i]) / 2.0;
    }
    t[static_cast<size_t>(c)] = s / hw;
  }
  return t;
}

int count_straddles(const Box& b) {
  int n = 0;
  for (size_t i = 0; i < b.size(); ++i)
    if (b.lo[i] < 0.0 && b.hi[i] > 0.0) ++n;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Deep contractive CNN.  Every post-front conv block is rescaled so its
// l-inf operator norm is (approximately, and verifiably) lambda < 1, making
// the feature extractor a contraction: features move at most
// L_front * prod(lambda_b) * eps, so a logit head with enough nominal margin
// per class is robust outright.  Channel biases are centered on minus the
// mean interval midpoint so the contraction hides behind plenty of unstable
// units.
// ---------------------------------------------------------------------------

Instance gen_contractive(const GenParams& p, std::uint64_t seed,
                         std::string id) {
  const int hw = static_cast<int>(param(p, "spatial", 8));
  const int ch = static_cast<int>(param(p, "channels", 2));
  const int depth = static_cast<int>(param(p, "blocks", 4));
  const int classes = static_cast<int>(param(p, "classes", 3));
  const double lambda = param(p, "lambda", 0.55);
  const double eps = param(p, "eps", 0.08);
  const double slack = param(p, "margin_slack", 1.05);
  const bool uncentered = param(p, "uncentered", 0.0) != 0.0;
  if (hw < 3 || ch < 1 || depth < 1 || classes < 2)
    throw ConfigError("contractive_cnn: bad dimensions");
  if (!(lambda > 0.0) || !(lambda < 1.0) || !(eps > 0.0) || !(slack > 1.0))
    throw ConfigError(
        "contractive_cnn: need 0 < lambda < 1, eps > 0, margin_slack > 1");

  Rng rng(seed);
  Instance inst;
  inst.id = std::move(id);
  inst.label = 0;
  inst.eps = eps;
  inst.x0 = uniform_vec(rng, hw * hw, -1.0, 1.0);
  inst.net.input_shape = {1, hw, hw};

  // Front-end block: unconstrained scale, its norm is simply reported.
  Conv2d front = random_conv(rng, 1, ch, 3, 0.8);
  const double l_front = conv_linf_norm(front);
  inst.net.layers.push_back(front);
  {
    Box pre = last_preact_box(inst.net, inst.x0, eps);
    Vec t = channel_mid_means(pre, ch);
    auto& fl = std::get<Conv2d>(inst.net.layers.back());
    for (int c = 0; c < ch; ++c) fl.bias[static_cast<size_t>(c)] = -t[static_cast<size_t>(c)];
  }
  inst.net.layers.push_back(Relu{});

  Vec block_norms(static_cast<size_t>(depth));
  int unstable = 0;
  for (int b = 0; b < depth; ++b) {
    Conv2d conv = random_conv(rng, ch, ch, 3, 1.0);
    const double n0 = conv_linf_norm(conv);
    if (n0 < 1e-9) throw GenerationError("contractive_cnn: degenerate draw");
    for (double& f : conv.filters) f *= lambda / n0;
    const double nb = conv_linf_norm(conv);
    block_norms[static_cast<size_t>(b)] = nb;
    inst.net.layers.push_back(std::move(conv));
    Box pre = last_preact_box(inst.net, inst.x0, eps);
    Vec t = channel_mid_means(pre, ch);
    auto& cl = std::get<Conv2d>(inst.net.layers.back());
    for (int c = 0; c < ch; ++c)
      cl.bias[static_cast<size_t>(c)] = -t[static_cast<size_t>(c)];
    pre = last_preact_box(inst.net, inst.x0, eps);
    unstable += count_straddles(pre);
    inst.net.layers.push_back(Relu{});
  }

  double lip = l_front;
  for (double nb : block_norms) lip *= nb;

  const int feat = ch * hw * hw;
  Mat head_w(classes, feat);
  Vec head_b(static_cast<size_t>(classes), 0.0);
  double gamma = 0.0;
  if (!uncentered) {
    Vec wy = normal_vec(rng, feat, 1.0);
    const double budget = l1_norm(wy) * lip * eps;
    gamma = slack * budget;
    // f_y = gamma + w_y . (phi(x) - phi(x0)); competitors are zero.
    Evaluation e0 = forward_eval(inst.net, inst.x0);
    const Vec& phi0 = e0.acts.back();
    double shift = 0.0;
    for (int j = 0; j < feat; ++j) {
      head_w.at(inst.label, j) = wy[static_cast<size_t>(j)];
      shift += wy[static_cast<size_t>(j)] * phi0[static_cast<size_t>(j)];
    }
    head_b[static_cast<size_t>(inst.label)] = gamma - shift;
  } else {
    head_w = normal_mat(rng, classes, feat, 0.7);
    head_b = normal_vec(rng, classes, 0.2);
  }
  inst.net.layers.push_back(Affine{std::move(head_w), std::move(head_b)});

  if (uncentered) {
    // Raise the label logit until every per-class margin clears its drift
    // budget by exactly `slack`.
    Evaluation e0 = forward_eval(inst.net, inst.x0);
    const auto& head = std::get<Affine>(inst.net.layers.back());
    double shift = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < classes; ++k) {
      if (k == inst.label) continue;
      double diff_l1 = 0.0;
      for (int j = 0; j < head.w.cols; ++j)
        diff_l1 += std::abs(head.w.at(inst.label, j) - head.w.at(k, j));
      const double need = slack * diff_l1 * lip * eps;
      const double mu0 = e0.logits()[static_cast<size_t>(inst.label)] -
                         e0.logits()[static_cast<size_t>(k)];
      shift = std::max(shift, need - mu0);
    }
    std::get<Affine>(inst.net.layers.back())
        .b[static_cast<size_t>(inst.label)] += shift;
  }
  inst.net.validate();

  Certificate& c = inst.cert;
  c.family = kFamilyContractive;
  c.robust = true;
  c.scalars["blocks"] = depth;
  c.scalars["lambda"] = lambda;
  c.scalars["l_front"] = l_front;
  c.scalars["lip"] = lip;
  c.scalars["margin_slack"] = slack;
  c.scalars["uncentered"] = uncentered ? 1.0 : 0.0;
  c.scalars["gamma"] = gamma;
  c.scalars["unstable_units"] = unstable;
  c.scalars["margin_x0"] = margin(inst.net, inst.x0, inst.label).value;
  c.scalars["ibp_margin_lower"] =
      ibp_margin_lower(inst.net, box_of({inst.x0, inst.eps}), inst.label);
  c.vectors["block_norms"] = std::move(block_norms);

  CheckReport rep = check_certificate(inst);
  if (!rep.ok())
    throw GenerationError("contractive_cnn " + inst.id + ": " +
                          rep.failures.front());
  return inst;
}

CheckReport check_contractive(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const int depth = static_cast<int>(c.scalar("blocks"));
  const double slack = c.scalar("margin_slack");
  const Vec* bn = c.vector("block_norms");
  if (depth < 1 || bn == nullptr || bn->size() != static_cast<size_t>(depth)) {
    rep.fail("block bookkeeping missing");
    return rep;
  }
  if (!c.robust) rep.fail("family is Lipschitz-certified robust; flag off");
  if (!(slack > 1.0)) rep.fail("margin slack must exceed 1");

  // Expected layout: front conv, relu, depth x (conv, relu), affine head.
  const size_t want_layers = 2 + 2 * static_cast<size_t>(depth) + 1;
  if (inst.net.layers.size() != want_layers) {
    rep.fail("unexpected layer count");
    return rep;
  }
  const auto* front = std::get_if<Conv2d>(&inst.net.layers[0]);
  const auto* head = std::get_if<Affine>(&inst.net.layers.back());
  if (front == nullptr || head == nullptr ||
      !std::holds_alternative<Relu>(inst.net.layers[1])) {
    rep.fail("front block or head malformed");
    return rep;
  }
  const double l_front = conv_linf_norm(*front);
  if (!close(l_front, c.scalar("l_front"), 1e-12))
    rep.fail("front norm drifted: " + fmt(l_front));

  double lip = l_front;
  for (int b = 0; b < depth; ++b) {
    const auto* conv = std::get_if<Conv2d>(&inst.net.layers[2 + 2 * b]);
    if (conv == nullptr ||
        !std::holds_alternative<Relu>(inst.net.layers[3 + 2 * b])) {
      rep.fail("block " + std::to_string(b) + " malformed");
      return rep;
    }
    const double nb = conv_linf_norm(*conv);
    if (!close(nb, (*bn)[static_cast<size_t>(b)], 1e-12))
      rep.fail("block " + std::to_string(b) + " norm drifted: " + fmt(nb));
    if (!(nb < 1.0))
      rep.fail("block " + std::to_string(b) + " is not contractive");
    lip *= nb;
  }
  if (!close(lip, c.scalar("lip"), 1e-12))
    rep.fail("composed Lipschitz constant drifted: " + fmt(lip));

  Evaluation e0 = forward_eval(inst.net, inst.x0);
  const int classes = inst.net.num_classes();
  if (c.scalar("uncentered") == 0.0) {
    for (int k = 0; k < classes; ++k) {
      if (k == inst.label) continue;
      for (int j = 0; j < head->w.cols; ++j)
        if (head->w.at(k, j) != 0.0) {
          rep.fail("competitor logit is not constant");
          return rep;
        }
      if (head->b[static_cast<size_t>(k)] != 0.0)
        rep.fail("competitor bias nonzero");
    }
    const double gamma = c.scalar("gamma");
    double wl1 = 0.0;
    for (int j = 0; j < head->w.cols; ++j)
      wl1 += std::abs(head->w.at(inst.label, j));
    if (!(gamma > wl1 * lip * inst.eps))
      rep.fail("margin budget not cleared: gamma " + fmt(gamma) +
               " <= " + fmt(wl1 * lip * inst.eps));
    if (!close(gamma, slack * wl1 * lip * inst.eps, 1e-9))
      rep.fail("gamma does not match its slack");
    const double m0 = margin(inst.net, inst.x0, inst.label).value;
    if (!close(m0, gamma, 1e-9))
      rep.fail("nominal margin " + fmt(m0) + " != gamma " + fmt(gamma));
  } else {
    for (int k = 0; k < classes; ++k) {
      if (k == inst.label) continue;
      double diff_l1 = 0.0;
      for (int j = 0; j < head->w.cols; ++j)
        diff_l1 += std::abs(head->w.at(inst.label, j) - head->w.at(k, j));
      const double mu0 = e0.logits()[static_cast<size_t>(inst.label)] -
                         e0.logits()[static_cast<size_t>(k)];
      if (!(mu0 > diff_l1 * lip * inst.eps))
        rep.fail("class " + std::to_string(k) +
                 " margin does not clear its drift budget");
      if (mu0 < slack * diff_l1 * lip * inst.eps * (1.0 - 1e-9))
        rep.fail("class " + std::to_string(k) + " slack below certificate");
    }
  }
  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("margin_x0"), 1e-9)) rep.fail("margin_x0 drifted");
  const double ibp =
      ibp_margin_lower(inst.net, box_of({inst.x0, inst.eps}), inst.label);
  if (!close(ibp, c.scalar("ibp_margin_lower"), 1e-12))
    rep.fail("stored interval bound drifted");
  return rep;
}

// ---------------------------------------------------------------------------
// Paired-bias CNN.  Channel pairs share one filter and differ only in bias
// (b = -t + delta vs c = -t - delta), so each per-unit ReLU difference lies
// in [0, 2 delta] for *every* input; a head that averages the differences on
// top of a bias gamma therefore has margin >= gamma globally, no matter how
// unstable the individual units look to a relaxation.
// ---------------------------------------------------------------------------

Instance gen_paired_bias(const GenParams& p, std::uint64_t seed,
                         std::string id) {
  const int hw = static_cast<int>(param(p, "spatial", 6));
  const int up_ch = static_cast<int>(param(p, "upstream_channels", 2));
  const int pairs = static_cast<int>(param(p, "pairs", 3));
  const double eps = param(p, "eps", 0.1);
  const double gamma = param(p, "gamma", 0.2);
  const double delta_frac = param(p, "delta_frac", 0.35);
  if (hw < 3 || up_ch < 1 || pairs < 1)
    throw ConfigError("paired_bias_cnn: bad dimensions");
  if (!(eps > 0.0) || !(gamma > 0.0) || !(delta_frac > 0.0))
    throw ConfigError("paired_bias_cnn: eps/gamma/delta_frac must be positive");

  Rng rng(seed);
  Instance inst;
  inst.id = std::move(id);
  inst.label = 0;
  inst.eps = eps;
  inst.x0 = uniform_vec(rng, hw * hw, -1.0, 1.0);
  inst.net.input_shape = {1, hw, hw};

  inst.net.layers.push_back(random_conv(rng, 1, up_ch, 3, 0.9));
  inst.net.layers.push_back(Relu{});

  // Paired conv: channels 2i and 2i+1 share filter taps; bias set from the
  // zero-bias response intervals below.
  Conv2d paired;
  paired.in_ch = up_ch;
  paired.out_ch = 2 * pairs;
  paired.kh = paired.kw = 3;
  paired.stride = 1;
  paired.pad = 1;
  const int per = up_ch * 9;
  paired.filters.assign(static_cast<size_t>(2 * pairs) * per, 0.0);
  for (int i = 0; i < pairs; ++i) {
    for (int t = 0; t < per; ++t) {
      const double f = 0.9 * rng.normal();
      paired.filters[static_cast<size_t>((2 * i) * per + t)] = f;
      paired.filters[static_cast<size_t>((2 * i + 1) * per + t)] = f;
    }
  }
  paired.bias.assign(static_cast<size_t>(2 * pairs), 0.0);
  inst.net.layers.push_back(std::move(paired));

  Box pre = last_preact_box(inst.net, inst.x0, eps);
  const int sp = hw * hw;
  Vec t_center(static_cast<size_t>(pairs)), delta(static_cast<size_t>(pairs));
  {
    auto& pl = std::get<Conv2d>(inst.net.layers.back());
    for (int i = 0; i < pairs; ++i) {
      double mid = 0.0, half = 0.0;
      for (int u = 0; u < sp; ++u) {
        const size_t a = static_cast<size_t>(2 * i * sp + u);
        mid += (pre.lo[a] + pre.hi[a]) / 2.0;
        half += (pre.hi[a] - pre.lo[a]) / 2.0;
      }
      mid /= sp;
      half /= sp;
      t_center[static_cast<size_t>(i)] = mid;
      delta[static_cast<size_t>(i)] =
          std::max(delta_frac * half, 1e-6);
      pl.bias[static_cast<size_t>(2 * i)] =
          -mid + delta[static_cast<size_t>(i)];
      pl.bias[static_cast<size_t>(2 * i + 1)] =
          -mid - delta[static_cast<size_t>(i)];
    }
  }
  inst.net.layers.push_back(Relu{});

  const double coef = 1.0 / (static_cast<double>(pairs) * sp);
  Mat head_w(2, 2 * pairs * sp);
  for (int i = 0; i < pairs; ++i)
    for (int u = 0; u < sp; ++u) {
      head_w.at(0, 2 * i * sp + u) = coef;
      head_w.at(0, (2 * i + 1) * sp + u) = -coef;
    }
  inst.net.layers.push_back(Affine{std::move(head_w), Vec{gamma, 0.0}});
  inst.net.validate();

  Certificate& c = inst.cert;
  c.family = kFamilyPairedBias;
  c.robust = true;
  c.scalars["pairs"] = pairs;
  c.scalars["gamma"] = gamma;
  c.scalars["spatial_units"] = sp;
  c.scalars["margin_x0"] = margin(inst.net, inst.x0, inst.label).value;
  c.scalars["ibp_margin_lower"] =
      ibp_margin_lower(inst.net, box_of({inst.x0, inst.eps}), inst.label);
  c.vectors["t_center"] = std::move(t_center);
  c.vectors["delta"] = std::move(delta);

  CheckReport rep = check_certificate(inst);
  if (!rep.ok())
    throw GenerationError("paired_bias_cnn " + inst.id + ": " +
                          rep.failures.front());
  return inst;
}

CheckReport check_paired_bias(const Instance& inst) {
  CheckReport rep;
  const Certificate& c = inst.cert;
  const int pairs = static_cast<int>(c.scalar("pairs"));
  const double gamma = c.scalar("gamma");
  const Vec* tc = c.vector("t_center");
  const Vec* dl = c.vector("delta");
  if (pairs < 1 || tc == nullptr || dl == nullptr ||
      tc->size() != static_cast<size_t>(pairs) ||
      dl->size() != static_cast<size_t>(pairs)) {
    rep.fail("pair bookkeeping missing");
    return rep;
  }
  if (!c.robust) rep.fail("family certifies a global bound; robust flag off");
  if (!(gamma > 0.0)) rep.fail("gamma must be positive");
  if (inst.net.layers.size() != 5) {
    rep.fail("expected upstream conv, relu, paired conv, relu, head");
    return rep;
  }
  const auto* paired = std::get_if<Conv2d>(&inst.net.layers[2]);
  const auto* head = std::get_if<Affine>(&inst.net.layers.back());
  if (paired == nullptr || head == nullptr ||
      paired->out_ch != 2 * pairs) {
    rep.fail("paired conv malformed");
    return rep;
  }
  const int per = paired->in_ch * paired->kh * paired->kw;
  for (int i = 0; i < pairs; ++i) {
    for (int t = 0; t < per; ++t)
      if (paired->filters[static_cast<size_t>(2 * i * per + t)] !=
          paired->filters[static_cast<size_t>((2 * i + 1) * per + t)]) {
        rep.fail("pair " + std::to_string(i) + " filters not shared");
        return rep;
      }
    const double b = paired->bias[static_cast<size_t>(2 * i)];
    const double cc = paired->bias[static_cast<size_t>(2 * i + 1)];
    if (!(b > cc)) {
      rep.fail("pair " + std::to_string(i) + " biases not ordered");
      return rep;
    }
    if (!close((b - cc) / 2.0, (*dl)[static_cast<size_t>(i)], 1e-12))
      rep.fail("pair " + std::to_string(i) + " half-gap drifted");
    if (!close(-(b + cc) / 2.0, (*tc)[static_cast<size_t>(i)], 1e-9))
      rep.fail("pair " + std::to_string(i) + " center drifted");
  }

  const int sp = static_cast<int>(c.scalar("spatial_units"));
  if (head->w.rows != 2 || head->w.cols != 2 * pairs * sp) {
    rep.fail("head dimensions wrong");
    return rep;
  }
  const double coef = 1.0 / (static_cast<double>(pairs) * sp);
  for (int i = 0; i < pairs; ++i)
    for (int u = 0; u < sp; ++u) {
      if (head->w.at(0, 2 * i * sp + u) != coef ||
          head->w.at(0, (2 * i + 1) * sp + u) != -coef) {
        rep.fail("head does not average the pair differences");
        return rep;
      }
    }
  for (int j = 0; j < head->w.cols; ++j)
    if (head->w.at(1, j) != 0.0) {
      rep.fail("competitor logit not constant");
      return rep;
    }
  if (head->b[0] != gamma || head->b[1] != 0.0)
    rep.fail("head biases disagree with gamma");

  // Bias centers must come from the zero-bias response intervals.
  {
    Network partial;
    partial.input_shape = inst.net.input_shape;
    partial.layers.assign(inst.net.layers.begin(), inst.net.layers.begin() + 3);
    std::get<Conv2d>(partial.layers[2]).bias.assign(
        static_cast<size_t>(2 * pairs), 0.0);
    Box pre = ibp_forward(partial, box_of({inst.x0, inst.eps})).boxes.back();
    for (int i = 0; i < pairs; ++i) {
      double mid = 0.0;
      for (int u = 0; u < sp; ++u) {
        const size_t a = static_cast<size_t>(2 * i * sp + u);
        mid += (pre.lo[a] + pre.hi[a]) / 2.0;
      }
      mid /= sp;
      if (!close(mid, (*tc)[static_cast<size_t>(i)], 1e-9))
        rep.fail("pair " + std::to_string(i) +
                 " center does not match its response interval");
    }
  }

  const double m0 = margin(inst.net, inst.x0, inst.label).value;
  if (!close(m0, c.scalar("margin_x0"), 1e-9)) rep.fail("margin_x0 drifted");
  if (m0 < gamma * (1.0 - 1e-9))
    rep.fail("nominal margin " + fmt(m0) + " fell below gamma " + fmt(gamma));
  const double ibp =
      ibp_margin_lower(inst.net, box_of({inst.x0, inst.eps}), inst.label);
  if (!close(ibp, c.scalar("ibp_margin_lower"), 1e-12))
    rep.fail("stored interval bound drifted");
  return rep;
}

}  // namespace certbench

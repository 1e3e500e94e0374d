#include "certbench/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "certbench/errors.hpp"
#include "certbench/rng.hpp"

namespace certbench {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

double operator_norm_2(const Mat& m) {
  if (m.rows == 0 || m.cols == 0) return 0.0;
  Rng rng(0x5eed0f0ull);
  Vec v(m.cols);
  for (auto& x : v) x = rng.normal();
  double nv = l2_norm(v);
  for (auto& x : v) x /= nv;
  Vec u(m.rows), w(m.cols);
  double sigma = 0.0;
  for (int it = 0; it < 10000; ++it) {
    matvec(m, v.data(), u.data());
    std::fill(w.begin(), w.end(), 0.0);
    matvec_t_acc(m, u.data(), w.data());
    const double nw = l2_norm(w);
    if (nw == 0.0) return 0.0;
    for (int i = 0; i < m.cols; ++i) v[i] = w[i] / nw;
    const double next = l2_norm(u);
    if (it > 0 && std::fabs(next - sigma) <= 1e-10 * std::max(1.0, next)) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma;
}

namespace {

void check_finite(const Vec& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw StructuralError(std::string("non-finite parameter in ") + what);
}

double ipow(double z, int d) {
  double r = 1.0, base = z;
  int e = d;
  while (e > 0) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

struct ShapeWalker {
  const Network& net;
  Shape cur;

  explicit ShapeWalker(const Network& n) : net(n), cur(n.input_shape) {}

  Shape advance(const Layer& layer, int layer_idx) {
    const int64_t numel = shape_numel(cur);
    auto fail = [&](const std::string& msg) {
      std::ostringstream os;
      os << "layer " << layer_idx << ": " << msg << " (input shape "
         << shape_str(cur) << ")";
      throw StructuralError(os.str());
    };

    if (const auto* l = std::get_if<Affine>(&layer)) {
      if (l->w.cols != numel) fail("affine width mismatch");
      if (static_cast<int>(l->b.size()) != l->w.rows) fail("affine bias size");
      cur = {l->w.rows};
    } else if (const auto* l = std::get_if<Conv2d>(&layer)) {
      if (cur.size() != 3) fail("conv input must be (c,h,w)");
      if (cur[0] != l->in_ch) fail("conv channel mismatch");
      const int h = cur[1], w = cur[2];
      if (l->stride < 1 || l->pad < 0) fail("conv stride/pad");
      const int hn = h + 2 * l->pad - l->kh;
      const int wn = w + 2 * l->pad - l->kw;
      if (hn < 0 || wn < 0 || hn % l->stride || wn % l->stride)
        fail("conv geometry");
      if (static_cast<int64_t>(l->filters.size()) !=
          static_cast<int64_t>(l->out_ch) * l->in_ch * l->kh * l->kw)
        fail("conv filter size");
      if (static_cast<int>(l->bias.size()) != l->out_ch) fail("conv bias size");
      cur = {l->out_ch, hn / l->stride + 1, wn / l->stride + 1};
    } else if (std::holds_alternative<Relu>(layer)) {
      // shape preserved
    } else if (const auto* l = std::get_if<MonomialPower>(&layer)) {
      if (l->degree < 1) fail("monomial degree must be >= 1");
    } else if (std::holds_alternative<RowSoftmax>(layer)) {
      if (cur.size() != 2) fail("row softmax needs a (n,m) input");
    } else if (const auto* l = std::get_if<BilinearScore>(&layer)) {
      if (cur.size() != 2) fail("bilinear score needs a (n,dt) input");
      if (l->m.rows != cur[1] || l->m.cols != cur[1]) fail("bilinear M shape");
      cur = {cur[0], cur[0]};
    } else if (const auto* l = std::get_if<LinearAttnScore>(&layer)) {
      if (cur.size() != 2) fail("linear attention needs a (n,dt) input");
      if (l->wq.rows != cur[1] || l->wk.rows != cur[1] ||
          l->wq.cols != l->wk.cols)
        fail("linear attention projection shapes");
      if (l->zeta <= 0.0) fail("linear attention offset must be positive");
      cur = {cur[0], cur[0]};
    } else if (std::holds_alternative<RowNormalize>(layer)) {
      if (cur.size() != 2) fail("row normalize needs a (n,m) input");
    } else if (const auto* l = std::get_if<ValueProject>(&layer)) {
      if (net.input_shape.size() != 2)
        fail("value projection requires a (n,dt) network input");
      if (cur.size() != 2 || cur[1] != net.input_shape[0])
        fail("value projection chain input must be (r,n)");
      if (l->wv.rows != net.input_shape[1]) fail("value projection wv shape");
      cur = {cur[0], l->wv.cols};
    } else if (const auto* l = std::get_if<Reshape>(&layer)) {
      if (shape_numel(l->target) != numel) fail("reshape numel mismatch");
      cur = l->target;
    } else {
      fail("unknown layer kind");
    }
    return cur;
  }
};

}  // namespace

int Network::input_dim() const {
  return static_cast<int>(shape_numel(input_shape));
}

int Network::num_classes() const {
  auto shapes = layer_shapes();
  const Shape& out = shapes.empty() ? input_shape : shapes.back();
  return static_cast<int>(shape_numel(out));
}

std::vector<Shape> Network::layer_shapes() const {
  ShapeWalker walker(*this);
  std::vector<Shape> out;
  out.reserve(layers.size());
  for (size_t l = 0; l < layers.size(); ++l)
    out.push_back(walker.advance(layers[l], static_cast<int>(l)));
  return out;
}

void Network::validate() const {
  if (input_shape.empty() || shape_numel(input_shape) < 1)
    throw StructuralError("empty input shape");
  for (int d : input_shape)
    if (d < 1) throw StructuralError("nonpositive input dimension");
  auto shapes = layer_shapes();  // throws on mismatch
  const Shape& out = shapes.empty() ? input_shape : shapes.back();
  if (out.size() != 1 || out[0] < 2)
    throw StructuralError("network must end in a flat logit vector, c >= 2");
  for (size_t l = 0; l < layers.size(); ++l) {
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Affine>) {
            check_finite(layer.w.a, "affine weights");
            check_finite(layer.b, "affine bias");
          } else if constexpr (std::is_same_v<T, Conv2d>) {
            check_finite(layer.filters, "conv filters");
            check_finite(layer.bias, "conv bias");
          } else if constexpr (std::is_same_v<T, BilinearScore>) {
            check_finite(layer.m.a, "bilinear M");
          } else if constexpr (std::is_same_v<T, LinearAttnScore>) {
            check_finite(layer.wq.a, "wq");
            check_finite(layer.wk.a, "wk");
          } else if constexpr (std::is_same_v<T, ValueProject>) {
            check_finite(layer.wv.a, "wv");
          }
        },
        layers[l]);
  }
}

int Network::relu_count() const {
  ShapeWalker walker(*this);
  int count = 0;
  for (size_t l = 0; l < layers.size(); ++l) {
    if (std::holds_alternative<Relu>(layers[l]))
      count += static_cast<int>(shape_numel(walker.cur));
    if (const auto* la = std::get_if<LinearAttnScore>(&layers[l]))
      count += 2 * walker.cur[0] * la->wq.cols;
    walker.advance(layers[l], static_cast<int>(l));
  }
  return count;
}

Vec PerturbationBox::lo() const {
  Vec v = x0;
  for (auto& x : v) x -= eps;
  return v;
}

Vec PerturbationBox::hi() const {
  Vec v = x0;
  for (auto& x : v) x += eps;
  return v;
}

// ---- forward -----------------------------------------------------------------

namespace {

void forward_layer(const Network& net, const Layer& layer, const Shape& in_shape,
                   const Shape& out_shape, const Vec& in, const Vec& x0_input,
                   Vec& out) {
  out.resize(shape_numel(out_shape));
  if (const auto* l = std::get_if<Affine>(&layer)) {
    for (int r = 0; r < l->w.rows; ++r)
      out[r] = dot(l->w.row(r), in.data(), l->w.cols) + l->b[r];
  } else if (const auto* l = std::get_if<Conv2d>(&layer)) {
    const int h = in_shape[1], w = in_shape[2];
    const int ho = out_shape[1], wo = out_shape[2];
    for (int co = 0; co < l->out_ch; ++co) {
      const double* fco =
          l->filters.data() + static_cast<size_t>(co) * l->in_ch * l->kh * l->kw;
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = l->bias[co];
          const int iy0 = oy * l->stride - l->pad;
          const int ix0 = ox * l->stride - l->pad;
          for (int ci = 0; ci < l->in_ch; ++ci) {
            const double* fc = fco + static_cast<size_t>(ci) * l->kh * l->kw;
            const double* ic = in.data() + static_cast<size_t>(ci) * h * w;
            for (int ky = 0; ky < l->kh; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < l->kw; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                acc += fc[ky * l->kw + kx] * ic[iy * w + ix];
              }
            }
          }
          out[(static_cast<size_t>(co) * ho + oy) * wo + ox] = acc;
        }
      }
    }
  } else if (std::holds_alternative<Relu>(layer)) {
    for (size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  } else if (const auto* l = std::get_if<MonomialPower>(&layer)) {
    for (size_t i = 0; i < in.size(); ++i) out[i] = ipow(in[i], l->degree);
  } else if (std::holds_alternative<RowSoftmax>(layer)) {
    const int n = in_shape[0], m = in_shape[1];
    for (int r = 0; r < n; ++r) {
      const double* z = in.data() + static_cast<size_t>(r) * m;
      double* a = out.data() + static_cast<size_t>(r) * m;
      double zmax = z[0];
      for (int j = 1; j < m; ++j) zmax = std::max(zmax, z[j]);
      double sum = 0.0;
      for (int j = 0; j < m; ++j) {
        a[j] = std::exp(z[j] - zmax);
        sum += a[j];
      }
      for (int j = 0; j < m; ++j) a[j] /= sum;
    }
  } else if (const auto* l = std::get_if<BilinearScore>(&layer)) {
    const int n = in_shape[0], dt = in_shape[1];
    Vec xm(static_cast<size_t>(n) * dt);
    matmul(in.data(), n, dt, l->m.a.data(), dt, xm.data());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out[static_cast<size_t>(i) * n + j] =
            dot(xm.data() + static_cast<size_t>(i) * dt,
                in.data() + static_cast<size_t>(j) * dt, dt);
  } else if (const auto* l = std::get_if<LinearAttnScore>(&layer)) {
    const int n = in_shape[0], dt = in_shape[1], dk = l->wq.cols;
    Vec q(static_cast<size_t>(n) * dk), k(static_cast<size_t>(n) * dk);
    matmul(in.data(), n, dt, l->wq.a.data(), dk, q.data());
    matmul(in.data(), n, dt, l->wk.a.data(), dk, k.data());
    for (auto& v : q) v = (v > 0.0 ? v : 0.0) + l->zeta;
    for (auto& v : k) v = (v > 0.0 ? v : 0.0) + l->zeta;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out[static_cast<size_t>(i) * n + j] =
            dot(q.data() + static_cast<size_t>(i) * dk,
                k.data() + static_cast<size_t>(j) * dk, dk);
  } else if (std::holds_alternative<RowNormalize>(layer)) {
    const int n = in_shape[0], m = in_shape[1];
    for (int r = 0; r < n; ++r) {
      const double* wrow = in.data() + static_cast<size_t>(r) * m;
      double* a = out.data() + static_cast<size_t>(r) * m;
      double sum = 0.0;
      for (int j = 0; j < m; ++j) sum += wrow[j];
      if (!(sum > 0.0))
        throw NumericError("row normalize: nonpositive row sum");
      for (int j = 0; j < m; ++j) a[j] = wrow[j] / sum;
    }
  } else if (const auto* l = std::get_if<ValueProject>(&layer)) {
    const int n = net.input_shape[0], dt = net.input_shape[1];
    const int r = in_shape[0], dv = l->wv.cols;
    Vec v(static_cast<size_t>(n) * dv);
    matmul(x0_input.data(), n, dt, l->wv.a.data(), dv, v.data());
    matmul(in.data(), r, n, v.data(), dv, out.data());
  } else if (std::holds_alternative<Reshape>(layer)) {
    std::copy(in.begin(), in.end(), out.begin());
  }
}

}  // namespace

void forward_eval(const Network& net, const Vec& x, Evaluation& out) {
  if (static_cast<int64_t>(x.size()) != shape_numel(net.input_shape))
    throw StructuralError("forward: input size mismatch");
  out.acts.resize(net.layers.size() + 1);
  out.acts[0] = x;
  ShapeWalker walker(net);
  Shape in_shape = net.input_shape;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const Shape out_shape = walker.advance(net.layers[l], static_cast<int>(l));
    forward_layer(net, net.layers[l], in_shape, out_shape, out.acts[l],
                  out.acts[0], out.acts[l + 1]);
    in_shape = out_shape;
  }
}

Evaluation forward_eval(const Network& net, const Vec& x) {
  Evaluation e;
  forward_eval(net, x, e);
  return e;
}

MarginReport margin_of_logits(const Vec& logits, int y) {
  const int c = static_cast<int>(logits.size());
  if (y < 0 || y >= c) throw StructuralError("margin: label out of range");
  MarginReport rep;
  rep.per_class.assign(c, std::numeric_limits<double>::infinity());
  rep.value = std::numeric_limits<double>::infinity();
  for (int k = 0; k < c; ++k) {
    if (k == y) continue;
    rep.per_class[k] = logits[y] - logits[k];
    if (rep.per_class[k] < rep.value) {
      rep.value = rep.per_class[k];
      rep.argmin_class = k;
    }
  }
  return rep;
}

MarginReport margin(const Network& net, const Vec& x, int y) {
  Evaluation e = forward_eval(net, x);
  return margin_of_logits(e.logits(), y);
}

// ---- backward ----------------------------------------------------------------

namespace {

// gin is preallocated and zeroed by the caller.
void backward_layer(const Network& net, const Layer& layer,
                    const Shape& in_shape, const Shape& out_shape,
                    const Vec& in, const Vec& out, const Vec& gout, Vec& gin,
                    bool& at_kink) {
  (void)net;
  if (const auto* l = std::get_if<Affine>(&layer)) {
    matvec_t_acc(l->w, gout.data(), gin.data());
  } else if (const auto* l = std::get_if<Conv2d>(&layer)) {
    const int h = in_shape[1], w = in_shape[2];
    const int ho = out_shape[1], wo = out_shape[2];
    for (int co = 0; co < l->out_ch; ++co) {
      const double* fco =
          l->filters.data() + static_cast<size_t>(co) * l->in_ch * l->kh * l->kw;
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double g = gout[(static_cast<size_t>(co) * ho + oy) * wo + ox];
          if (g == 0.0) continue;
          const int iy0 = oy * l->stride - l->pad;
          const int ix0 = ox * l->stride - l->pad;
          for (int ci = 0; ci < l->in_ch; ++ci) {
            const double* fc = fco + static_cast<size_t>(ci) * l->kh * l->kw;
            double* gc = gin.data() + static_cast<size_t>(ci) * h * w;
            for (int ky = 0; ky < l->kh; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < l->kw; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                gc[iy * w + ix] += g * fc[ky * l->kw + kx];
              }
            }
          }
        }
      }
    }
  } else if (std::holds_alternative<Relu>(layer)) {
    for (size_t i = 0; i < in.size(); ++i) {
      if (in[i] == 0.0) at_kink = true;
      gin[i] = in[i] > 0.0 ? gout[i] : 0.0;
    }
  } else if (const auto* l = std::get_if<MonomialPower>(&layer)) {
    for (size_t i = 0; i < in.size(); ++i)
      gin[i] = gout[i] * l->degree * ipow(in[i], l->degree - 1);
  } else if (std::holds_alternative<RowSoftmax>(layer)) {
    const int n = in_shape[0], m = in_shape[1];
    for (int r = 0; r < n; ++r) {
      const double* a = out.data() + static_cast<size_t>(r) * m;
      const double* g = gout.data() + static_cast<size_t>(r) * m;
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += a[j] * g[j];
      double* gi = gin.data() + static_cast<size_t>(r) * m;
      for (int j = 0; j < m; ++j) gi[j] = a[j] * (g[j] - s);
    }
  } else if (const auto* l = std::get_if<BilinearScore>(&layer)) {
    const int n = in_shape[0], dt = in_shape[1];
    Vec xm(static_cast<size_t>(n) * dt), xmt(static_cast<size_t>(n) * dt);
    matmul(in.data(), n, dt, l->m.a.data(), dt, xm.data());
    // x M^T
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < dt; ++c) {
        double acc = 0.0;
        for (int k = 0; k < dt; ++k)
          acc += in[static_cast<size_t>(i) * dt + k] * l->m.at(c, k);
        xmt[static_cast<size_t>(i) * dt + c] = acc;
      }
    // gin = G (X M^T) + G^T (X M)
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < dt; ++c) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          acc += gout[static_cast<size_t>(i) * n + j] *
                 xmt[static_cast<size_t>(j) * dt + c];
          acc += gout[static_cast<size_t>(j) * n + i] *
                 xm[static_cast<size_t>(j) * dt + c];
        }
        gin[static_cast<size_t>(i) * dt + c] += acc;
      }
  } else if (const auto* l = std::get_if<LinearAttnScore>(&layer)) {
    const int n = in_shape[0], dt = in_shape[1], dk = l->wq.cols;
    Vec q(static_cast<size_t>(n) * dk), k(static_cast<size_t>(n) * dk);
    matmul(in.data(), n, dt, l->wq.a.data(), dk, q.data());
    matmul(in.data(), n, dt, l->wk.a.data(), dk, k.data());
    Vec fq(q), fk(k);
    for (auto& v : fq) v = (v > 0.0 ? v : 0.0) + l->zeta;
    for (auto& v : fk) v = (v > 0.0 ? v : 0.0) + l->zeta;
    Vec gq(static_cast<size_t>(n) * dk, 0.0), gk(static_cast<size_t>(n) * dk, 0.0);
    // gq = G fk, gk = G^T fq
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double g = gout[static_cast<size_t>(i) * n + j];
        if (g == 0.0) continue;
        for (int c = 0; c < dk; ++c) {
          gq[static_cast<size_t>(i) * dk + c] +=
              g * fk[static_cast<size_t>(j) * dk + c];
          gk[static_cast<size_t>(j) * dk + c] +=
              g * fq[static_cast<size_t>(i) * dk + c];
        }
      }
    for (size_t i = 0; i < gq.size(); ++i) {
      if (q[i] == 0.0 || k[i] == 0.0) at_kink = true;
      if (q[i] <= 0.0) gq[i] = 0.0;
      if (k[i] <= 0.0) gk[i] = 0.0;
    }
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < dt; ++c) {
        double acc = 0.0;
        for (int a = 0; a < dk; ++a) {
          acc += gq[static_cast<size_t>(i) * dk + a] * l->wq.at(c, a);
          acc += gk[static_cast<size_t>(i) * dk + a] * l->wk.at(c, a);
        }
        gin[static_cast<size_t>(i) * dt + c] += acc;
      }
  } else if (std::holds_alternative<RowNormalize>(layer)) {
    const int n = in_shape[0], m = in_shape[1];
    for (int r = 0; r < n; ++r) {
      const double* wrow = in.data() + static_cast<size_t>(r) * m;
      const double* a = out.data() + static_cast<size_t>(r) * m;
      const double* g = gout.data() + static_cast<size_t>(r) * m;
      double sum = 0.0, gs = 0.0;
      for (int j = 0; j < m; ++j) sum += wrow[j];
      for (int j = 0; j < m; ++j) gs += g[j] * a[j];
      double* gi = gin.data() + static_cast<size_t>(r) * m;
      for (int j = 0; j < m; ++j) gi[j] = (g[j] - gs) / sum;
    }
  } else if (std::holds_alternative<ValueProject>(layer)) {
    // needs the network input; dispatched separately in grad_logits
    throw StructuralError("value projection backward requires network input");
  } else if (std::holds_alternative<Reshape>(layer)) {
    for (size_t i = 0; i < gout.size(); ++i) gin[i] = gout[i];
  }
}

}  // namespace

GradResult grad_logits(const Network& net, const Evaluation& eval,
                       const Vec& seed) {
  auto shapes = net.layer_shapes();
  const size_t L = net.layers.size();
  if (eval.acts.size() != L + 1)
    throw StructuralError("grad: evaluation does not match network");
  GradResult res;
  Vec g = seed, gin;
  Vec gx0(eval.acts[0].size(), 0.0);
  for (size_t li = L; li-- > 0;) {
    const Shape& in_shape = li == 0 ? net.input_shape : shapes[li - 1];
    const Shape& out_shape = shapes[li];
    gin.assign(shape_numel(in_shape), 0.0);
    if (const auto* l = std::get_if<ValueProject>(&net.layers[li])) {
      // out = A (X wv), A = acts[li], X = acts[0]
      const int n = net.input_shape[0], dt = net.input_shape[1];
      const int r = in_shape[0], dv = l->wv.cols;
      const Vec& a = eval.acts[li];
      const Vec& x0in = eval.acts[0];
      Vec v(static_cast<size_t>(n) * dv);
      matmul(x0in.data(), n, dt, l->wv.a.data(), dv, v.data());
      // gA = G V^T
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j)
          gin[static_cast<size_t>(i) * n + j] =
              dot(g.data() + static_cast<size_t>(i) * dv,
                  v.data() + static_cast<size_t>(j) * dv, dv);
      // gX0 += (A^T G) wv^T
      Vec t(static_cast<size_t>(n) * dv, 0.0);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) {
          const double aij = a[static_cast<size_t>(i) * n + j];
          if (aij == 0.0) continue;
          for (int c = 0; c < dv; ++c)
            t[static_cast<size_t>(j) * dv + c] +=
                aij * g[static_cast<size_t>(i) * dv + c];
        }
      for (int j = 0; j < n; ++j)
        for (int c = 0; c < dt; ++c) {
          double acc = 0.0;
          for (int a2 = 0; a2 < dv; ++a2)
            acc += t[static_cast<size_t>(j) * dv + a2] * l->wv.at(c, a2);
          gx0[static_cast<size_t>(j) * dt + c] += acc;
        }
    } else {
      backward_layer(net, net.layers[li], in_shape, out_shape, eval.acts[li],
                     eval.acts[li + 1], g, gin, res.at_kink);
    }
    g.swap(gin);
  }
  for (size_t i = 0; i < g.size(); ++i) g[i] += gx0[i];
  res.grad = std::move(g);
  return res;
}

GradResult grad_margin(const Network& net, const Vec& x, int y, int k) {
  Evaluation e = forward_eval(net, x);
  const int c = static_cast<int>(e.logits().size());
  if (y < 0 || y >= c || k < 0 || k >= c || k == y)
    throw StructuralError("grad_margin: bad class pair");
  Vec seed(c, 0.0);
  seed[y] = 1.0;
  seed[k] = -1.0;
  return grad_logits(net, e, seed);
}

}  // namespace certbench

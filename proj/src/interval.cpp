#include "certbench/interval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "certbench/errors.hpp"

namespace certbench {

Box box_of(const PerturbationBox& pb) { return Box{pb.lo(), pb.hi()}; }

namespace {

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

// Interval affine image of `in` under row-major (rows x cols) weights.
void affine_box(const double* w, int rows, int cols, const double* bias,
                const Box& in, Box& out) {
  out.lo.assign(rows, 0.0);
  out.hi.assign(rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    double lo = bias ? bias[r] : 0.0, hi = lo;
    const double* wr = w + static_cast<size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) {
      const double v = wr[c];
      if (v >= 0.0) {
        lo += v * in.lo[c];
        hi += v * in.hi[c];
      } else {
        lo += v * in.hi[c];
        hi += v * in.lo[c];
      }
    }
    out.lo[r] = lo;
    out.hi[r] = hi;
  }
}

// Column-major variant: out has `cols_out` entries per row of `in` seen as a
// (rows_in x cols_in) interval matrix, weights (cols_in x cols_out).
void matbox_mul(const Box& in, int rows_in, int cols_in, const Mat& w,
                Box& out) {
  const int cols_out = w.cols;
  out.lo.assign(static_cast<size_t>(rows_in) * cols_out, 0.0);
  out.hi.assign(static_cast<size_t>(rows_in) * cols_out, 0.0);
  for (int i = 0; i < rows_in; ++i)
    for (int a = 0; a < cols_out; ++a) {
      double lo = 0.0, hi = 0.0;
      for (int b = 0; b < cols_in; ++b) {
        const double v = w.at(b, a);
        const size_t idx = static_cast<size_t>(i) * cols_in + b;
        if (v >= 0.0) {
          lo += v * in.lo[idx];
          hi += v * in.hi[idx];
        } else {
          lo += v * in.hi[idx];
          hi += v * in.lo[idx];
        }
      }
      const size_t o = static_cast<size_t>(i) * cols_out + a;
      out.lo[o] = lo;
      out.hi[o] = hi;
    }
}

void conv_box(const Conv2d& cv, const Shape& in_shape, const Shape& out_shape,
              const Box& in, Box& out) {
  const int h = in_shape[1], w = in_shape[2];
  const int ho = out_shape[1], wo = out_shape[2];
  out.lo.assign(shape_numel(out_shape), 0.0);
  out.hi.assign(shape_numel(out_shape), 0.0);
  for (int co = 0; co < cv.out_ch; ++co) {
    const double* fco =
        cv.filters.data() + static_cast<size_t>(co) * cv.in_ch * cv.kh * cv.kw;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double lo = cv.bias[co], hi = cv.bias[co];
        const int iy0 = oy * cv.stride - cv.pad;
        const int ix0 = ox * cv.stride - cv.pad;
        for (int ci = 0; ci < cv.in_ch; ++ci) {
          const double* fc = fco + static_cast<size_t>(ci) * cv.kh * cv.kw;
          const size_t base = static_cast<size_t>(ci) * h * w;
          for (int ky = 0; ky < cv.kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < cv.kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= w) continue;
              const double v = fc[ky * cv.kw + kx];
              const size_t idx = base + static_cast<size_t>(iy) * w + ix;
              if (v >= 0.0) {
                lo += v * in.lo[idx];
                hi += v * in.hi[idx];
              } else {
                lo += v * in.hi[idx];
                hi += v * in.lo[idx];
              }
            }
          }
        }
        const size_t o = (static_cast<size_t>(co) * ho + oy) * wo + ox;
        out.lo[o] = lo;
        out.hi[o] = hi;
      }
  }
}

// Exact bounds of z_j / sum_l z_l style ratios via monotonicity: the entry is
// increasing in its own logit and decreasing in every other one.
void softmax_row_bounds(const double* zlo, const double* zhi, int m,
                        double* alo, double* ahi) {
  for (int j = 0; j < m; ++j) {
    // upper bound: own logit high, others low
    double mx = zhi[j];
    for (int l = 0; l < m; ++l)
      if (l != j) mx = std::max(mx, zlo[l]);
    double num = std::exp(zhi[j] - mx), den = num;
    for (int l = 0; l < m; ++l)
      if (l != j) den += std::exp(zlo[l] - mx);
    ahi[j] = num / den;
    // lower bound: own logit low, others high
    mx = zlo[j];
    for (int l = 0; l < m; ++l)
      if (l != j) mx = std::max(mx, zhi[l]);
    num = std::exp(zlo[j] - mx);
    den = num;
    for (int l = 0; l < m; ++l)
      if (l != j) den += std::exp(zhi[l] - mx);
    alo[j] = num / den;
  }
}

}  // namespace

void ibp_forward(const Network& net, const Box& input, IbpTrace& out) {
  if (input.lo.size() != input.hi.size() ||
      static_cast<int64_t>(input.lo.size()) != shape_numel(net.input_shape))
    throw StructuralError("ibp: input box size mismatch");
  for (size_t i = 0; i < input.lo.size(); ++i)
    if (!(input.lo[i] <= input.hi[i]))
      throw StructuralError("ibp: empty input interval");
  auto shapes = net.layer_shapes();
  out.boxes.resize(net.layers.size() + 1);
  out.boxes[0] = input;
  Shape in_shape = net.input_shape;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    const Box& in = out.boxes[li];
    Box& nxt = out.boxes[li + 1];
    const Shape& out_shape = shapes[li];
    const Layer& layer = net.layers[li];

    if (const auto* l = std::get_if<Affine>(&layer)) {
      affine_box(l->w.a.data(), l->w.rows, l->w.cols, l->b.data(), in, nxt);
    } else if (const auto* l = std::get_if<Conv2d>(&layer)) {
      conv_box(*l, in_shape, out_shape, in, nxt);
    } else if (std::holds_alternative<Relu>(layer)) {
      nxt.lo.resize(in.size());
      nxt.hi.resize(in.size());
      for (size_t i = 0; i < in.size(); ++i) {
        nxt.lo[i] = std::max(0.0, in.lo[i]);
        nxt.hi[i] = std::max(0.0, in.hi[i]);
      }
    } else if (const auto* l = std::get_if<MonomialPower>(&layer)) {
      nxt.lo.resize(in.size());
      nxt.hi.resize(in.size());
      const int d = l->degree;
      for (size_t i = 0; i < in.size(); ++i) {
        const double plo = ipow(in.lo[i], d), phi = ipow(in.hi[i], d);
        if (d % 2 == 1) {
          nxt.lo[i] = plo;
          nxt.hi[i] = phi;
        } else if (in.lo[i] >= 0.0) {
          nxt.lo[i] = plo;
          nxt.hi[i] = phi;
        } else if (in.hi[i] <= 0.0) {
          nxt.lo[i] = phi;
          nxt.hi[i] = plo;
        } else {
          nxt.lo[i] = 0.0;
          nxt.hi[i] = std::max(plo, phi);
        }
      }
    } else if (std::holds_alternative<RowSoftmax>(layer)) {
      const int n = in_shape[0], m = in_shape[1];
      nxt.lo.resize(in.size());
      nxt.hi.resize(in.size());
      for (int r = 0; r < n; ++r) {
        const size_t off = static_cast<size_t>(r) * m;
        softmax_row_bounds(in.lo.data() + off, in.hi.data() + off, m,
                           nxt.lo.data() + off, nxt.hi.data() + off);
      }
    } else if (const auto* l = std::get_if<BilinearScore>(&layer)) {
      const int n = in_shape[0], dt = in_shape[1];
      Box t;
      matbox_mul(in, n, dt, l->m, t);  // T = X M, interval affine
      nxt.lo.assign(static_cast<size_t>(n) * n, 0.0);
      nxt.hi.assign(static_cast<size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double lo = 0.0, hi = 0.0;
          for (int b = 0; b < dt; ++b) {
            double plo, phi;
            const size_t ti = static_cast<size_t>(i) * dt + b;
            const size_t xj = static_cast<size_t>(j) * dt + b;
            interval_product(t.lo[ti], t.hi[ti], in.lo[xj], in.hi[xj], plo,
                             phi);
            lo += plo;
            hi += phi;
          }
          nxt.lo[static_cast<size_t>(i) * n + j] = lo;
          nxt.hi[static_cast<size_t>(i) * n + j] = hi;
        }
    } else if (const auto* l = std::get_if<LinearAttnScore>(&layer)) {
      const int n = in_shape[0], dt = in_shape[1], dk = l->wq.cols;
      Box q, k;
      matbox_mul(in, n, dt, l->wq, q);
      matbox_mul(in, n, dt, l->wk, k);
      for (size_t i = 0; i < q.lo.size(); ++i) {
        q.lo[i] = std::max(0.0, q.lo[i]) + l->zeta;
        q.hi[i] = std::max(0.0, q.hi[i]) + l->zeta;
        k.lo[i] = std::max(0.0, k.lo[i]) + l->zeta;
        k.hi[i] = std::max(0.0, k.hi[i]) + l->zeta;
      }
      nxt.lo.assign(static_cast<size_t>(n) * n, 0.0);
      nxt.hi.assign(static_cast<size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double lo = 0.0, hi = 0.0;
          for (int a = 0; a < dk; ++a) {
            const size_t qi = static_cast<size_t>(i) * dk + a;
            const size_t kj = static_cast<size_t>(j) * dk + a;
            lo += q.lo[qi] * k.lo[kj];  // all factors are >= zeta > 0
            hi += q.hi[qi] * k.hi[kj];
          }
          nxt.lo[static_cast<size_t>(i) * n + j] = lo;
          nxt.hi[static_cast<size_t>(i) * n + j] = hi;
        }
    } else if (std::holds_alternative<RowNormalize>(layer)) {
      const int n = in_shape[0], m = in_shape[1];
      nxt.lo.resize(in.size());
      nxt.hi.resize(in.size());
      for (int r = 0; r < n; ++r) {
        const size_t off = static_cast<size_t>(r) * m;
        double lo_rowsum = 0.0;
        bool nonneg = true;
        for (int j = 0; j < m; ++j) {
          lo_rowsum += in.lo[off + j];
          nonneg = nonneg && in.lo[off + j] >= 0.0;
        }
        if (!nonneg || !(lo_rowsum > 0.0))
          throw NumericError(
              "row normalize bounds require nonnegative entries with a "
              "positive row sum");
        for (int j = 0; j < m; ++j) {
          double rest_lo = 0.0, rest_hi = 0.0;
          for (int t = 0; t < m; ++t) {
            if (t == j) continue;
            rest_lo += in.lo[off + t];
            rest_hi += in.hi[off + t];
          }
          nxt.hi[off + j] = in.hi[off + j] / (in.hi[off + j] + rest_lo);
          nxt.lo[off + j] = in.lo[off + j] / (in.lo[off + j] + rest_hi);
        }
      }
    } else if (const auto* l = std::get_if<ValueProject>(&layer)) {
      const int n = net.input_shape[0], dt = net.input_shape[1];
      const int r = in_shape[0], dv = l->wv.cols;
      Box v;
      matbox_mul(out.boxes[0], n, dt, l->wv, v);
      nxt.lo.assign(static_cast<size_t>(r) * dv, 0.0);
      nxt.hi.assign(static_cast<size_t>(r) * dv, 0.0);
      for (int i = 0; i < r; ++i)
        for (int a = 0; a < dv; ++a) {
          double lo = 0.0, hi = 0.0;
          for (int j = 0; j < n; ++j) {
            double plo, phi;
            const size_t ai = static_cast<size_t>(i) * n + j;
            const size_t vj = static_cast<size_t>(j) * dv + a;
            interval_product(in.lo[ai], in.hi[ai], v.lo[vj], v.hi[vj], plo,
                             phi);
            lo += plo;
            hi += phi;
          }
          nxt.lo[static_cast<size_t>(i) * dv + a] = lo;
          nxt.hi[static_cast<size_t>(i) * dv + a] = hi;
        }
    } else if (std::holds_alternative<Reshape>(layer)) {
      nxt = in;
    }
    in_shape = out_shape;
  }
}

IbpTrace ibp_forward(const Network& net, const Box& input) {
  IbpTrace t;
  ibp_forward(net, input, t);
  return t;
}

double margin_lower_of(const Box& logit_box, int y) {
  double worst = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < logit_box.hi.size(); ++k)
    if (static_cast<int>(k) != y) worst = std::max(worst, logit_box.hi[k]);
  return logit_box.lo[y] - worst;
}

double ibp_margin_lower(const Network& net, const Box& input, int y) {
  IbpTrace t = ibp_forward(net, input);
  return margin_lower_of(t.logits(), y);
}

}  // namespace certbench

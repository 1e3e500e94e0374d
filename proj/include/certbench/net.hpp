#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "certbench/linalg.hpp"

namespace certbench {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// ---- layer kinds -----------------------------------------------------------

// y = w x + b on the flattened input.
struct Affine {
  Mat w;
  Vec b;
};

// Zero-padded 2-D convolution, input (ci,h,w) -> (co,ho,wo).
// filters laid out (co,ci,kh,kw) row-major.
struct Conv2d {
  int in_ch = 0, out_ch = 0, kh = 0, kw = 0, stride = 1, pad = 0;
  Vec filters;
  Vec bias;
};

struct Relu {};

// Entrywise z^degree, degree >= 1.
struct MonomialPower {
  int degree = 2;
};

// Row-wise softmax on a (n,m) matrix.
struct RowSoftmax {};

// S = X M X^T on token matrix X (n,dt); M is (dt,dt).
struct BilinearScore {
  Mat m;
};

// W_ij = <phi(X wq)_i, phi(X wk)_j> with phi(z) = relu(z) + zeta.
// wq, wk: (dt, dk).  Produces the raw (n,n) weight matrix.
struct LinearAttnScore {
  Mat wq, wk;
  double zeta = 0.01;
};

// A_ij = W_ij / sum_l W_il; requires strictly positive row sums.
struct RowNormalize {};

// out = A (X wv) where A is the chain input and X is the *network* input
// interpreted with the network input shape (n,dt); wv: (dt,dv).
struct ValueProject {
  Mat wv;
};

// Pure metadata; numel must match.
struct Reshape {
  Shape target;
};

using Layer = std::variant<Affine, Conv2d, Relu, MonomialPower, RowSoftmax,
                           BilinearScore, LinearAttnScore, RowNormalize,
                           ValueProject, Reshape>;

// ---- network ----------------------------------------------------------------

// An ordered layer chain.  The final layer output must be flat with c >= 2
// entries (the logits).
struct Network {
  Shape input_shape;
  std::vector<Layer> layers;

  int input_dim() const;
  int num_classes() const;
  // Output shape of each layer; index l is the output of layers[l].
  std::vector<Shape> layer_shapes() const;
  // Throws StructuralError on shape mismatch or non-finite parameters.
  void validate() const;
  // Number of coordinatewise ReLU units, including the phi units inside
  // LinearAttnScore.
  int relu_count() const;
};

struct PerturbationBox {
  Vec x0;
  double eps = 0.0;

  Vec lo() const;
  Vec hi() const;
};

// ---- evaluation --------------------------------------------------------------

struct Evaluation {
  // acts[0] is the input; acts[l+1] the output of layers[l].
  std::vector<Vec> acts;
  const Vec& logits() const { return acts.back(); }
};

void forward_eval(const Network& net, const Vec& x, Evaluation& out);
Evaluation forward_eval(const Network& net, const Vec& x);

struct MarginReport {
  double value = 0.0;   // min_k (f_y - f_k)
  int argmin_class = -1;
  Vec per_class;        // per_class[k] = f_y - f_k; entry y is +inf
};

MarginReport margin(const Network& net, const Vec& x, int y);
MarginReport margin_of_logits(const Vec& logits, int y);

struct GradResult {
  Vec grad;
  // True when some ReLU unit sat exactly at its kink; the returned vector is
  // then a one-sided subgradient (slope-0 convention at the kink).
  bool at_kink = false;
};

// Gradient of sum_i seed[i] * f_i(x) with respect to x; eval must come from
// forward_eval on the same network.
GradResult grad_logits(const Network& net, const Evaluation& eval,
                       const Vec& seed);
// Gradient of the pairwise margin f_y - f_k.
GradResult grad_margin(const Network& net, const Vec& x, int y, int k);

}  // namespace certbench

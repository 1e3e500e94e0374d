#include "support/ref_phases.hpp"

#include <cmath>
#include <stdexcept>

#include "support/ref_simplex.hpp"

namespace refsupport {

using certbench::LpProblem;
using certbench::Network;
using certbench::Shape;
using certbench::Vec;

namespace {

struct Aff {
  Vec a;  // over the d inputs
  double c = 0.0;
};

// Trace the network under a fixed relu pattern.  Returns the logit
// expressions; appends one sign constraint per relu unit to `rows`.
std::vector<Aff> trace_pattern(const Network& net, int d, uint64_t pattern,
                               int nvars, std::vector<LpProblem::Row>& rows) {
  std::vector<Aff> cur(d);
  for (int i = 0; i < d; ++i) {
    cur[i].a.assign(nvars, 0.0);
    cur[i].a[i] = 1.0;
  }
  int bit = 0;
  Shape shape = net.input_shape;
  for (const auto& layer : net.layers) {
    if (const auto* l = std::get_if<certbench::Affine>(&layer)) {
      std::vector<Aff> nxt(l->w.rows);
      for (int r = 0; r < l->w.rows; ++r) {
        nxt[r].a.assign(nvars, 0.0);
        nxt[r].c = l->b[r];
        for (int c = 0; c < l->w.cols; ++c) {
          const double w = l->w.at(r, c);
          nxt[r].c += w * cur[c].c;
          for (int j = 0; j < nvars; ++j) nxt[r].a[j] += w * cur[c].a[j];
        }
      }
      cur = std::move(nxt);
      shape = {l->w.rows};
    } else if (std::holds_alternative<certbench::Relu>(layer)) {
      for (auto& e : cur) {
        const bool active = (pattern >> bit) & 1;
        ++bit;
        if (active) {
          // preact >= 0 stays, expression passes through
          LpProblem::Row r{e.a, -e.c, 'G'};
          rows.push_back(std::move(r));
        } else {
          LpProblem::Row r{e.a, -e.c, 'L'};
          rows.push_back(std::move(r));
          e.a.assign(nvars, 0.0);
          e.c = 0.0;
        }
      }
    } else if (const auto* l = std::get_if<certbench::Reshape>(&layer)) {
      shape = l->target;
    } else {
      throw std::runtime_error("ref phases: relu networks only");
    }
  }
  return cur;
}

int count_relus(const Network& net) {
  int n = 0;
  auto shapes = net.layer_shapes();
  Shape cur = net.input_shape;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (std::holds_alternative<certbench::Relu>(net.layers[l]))
      n += static_cast<int>(certbench::shape_numel(cur));
    cur = shapes[l];
  }
  return n;
}

}  // namespace

double ref_margin_min(const Network& net, const Vec& lo, const Vec& hi,
                      int y) {
  const int d = net.input_dim();
  const int relus = count_relus(net);
  if (relus > 20) throw std::runtime_error("ref phases: too many units");
  const int c = net.num_classes();
  double best = std::numeric_limits<double>::infinity();
  for (uint64_t pat = 0; pat < (uint64_t{1} << relus); ++pat) {
    std::vector<LpProblem::Row> rows;
    std::vector<Aff> logits = trace_pattern(net, d, pat, d, rows);
    for (int k = 0; k < c; ++k) {
      if (k == y) continue;
      LpProblem p;
      p.set_dims(d);
      p.lower = lo;
      p.upper = hi;
      p.rows = rows;
      for (int j = 0; j < d; ++j) p.c[j] = logits[y].a[j] - logits[k].a[j];
      RefLpResult r = ref_lp_solve(p);
      if (r.status == 0)
        best = std::min(best, r.objective + logits[y].c - logits[k].c);
    }
  }
  return best;
}

double ref_flip_radius(const Network& net, const Vec& x0, int y,
                       const Vec& dom_lo, const Vec& dom_hi) {
  const int d = net.input_dim();
  const int relus = count_relus(net);
  if (relus > 20) throw std::runtime_error("ref phases: too many units");
  const int c = net.num_classes();
  const int nvars = d + 1;  // x, t
  double best = std::numeric_limits<double>::infinity();
  for (uint64_t pat = 0; pat < (uint64_t{1} << relus); ++pat) {
    std::vector<LpProblem::Row> rows;
    std::vector<Aff> logits = trace_pattern(net, d, pat, nvars, rows);
    for (int k = 0; k < c; ++k) {
      if (k == y) continue;
      LpProblem p;
      p.set_dims(nvars);
      for (int j = 0; j < d; ++j) {
        p.lower[j] = dom_lo[j];
        p.upper[j] = dom_hi[j];
      }
      p.lower[d] = 0.0;
      p.c[d] = 1.0;
      p.rows = rows;
      for (int j = 0; j < d; ++j) {
        LpProblem::Row r1{Vec(nvars, 0.0), x0[j], 'L'};
        r1.a[j] = 1.0;
        r1.a[d] = -1.0;
        p.rows.push_back(std::move(r1));
        LpProblem::Row r2{Vec(nvars, 0.0), -x0[j], 'L'};
        r2.a[j] = -1.0;
        r2.a[d] = -1.0;
        p.rows.push_back(std::move(r2));
      }
      LpProblem::Row flip{Vec(nvars, 0.0),
                          logits[k].c - logits[y].c, 'L'};
      for (int j = 0; j < nvars; ++j)
        flip.a[j] = logits[y].a[j] - logits[k].a[j];
      p.rows.push_back(std::move(flip));
      RefLpResult r = ref_lp_solve(p);
      if (r.status == 0) best = std::min(best, r.objective);
    }
  }
  return best;
}

}  // namespace refsupport

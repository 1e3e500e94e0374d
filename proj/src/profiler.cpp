#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "certbench/errors.hpp"
#include "certbench/profiler.hpp"

namespace certbench {
namespace {

// Margin gradient at a sample: differentiate against the class that attains
// the margin minimum there.
Vec sample_grad(const Network& net, const Vec& x, int y) {
  const MarginReport m = margin(net, x, y);
  return grad_margin(net, x, y, m.argmin_class).grad;
}

template <typename Fn>
void for_each_sample(int n, ExecMode mode, const Fn& fn) {
  if (mode == ExecMode::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n; ++i) fn(i);
  } else {
    for (int i = 0; i < n; ++i) fn(i);
  }
}

// Range (max - min) of the derivative of s^degree over [lo, hi].  The
// derivative is monotone on each side of zero, so the extremes sit at the
// endpoints, plus zero itself when the interval straddles it.
double power_slope_range(int degree, double lo, double hi) {
  if (degree <= 1) return 0.0;
  const double d = static_cast<double>(degree);
  auto slope = [&](double s) { return d * std::pow(s, degree - 1); };
  double mn = std::min(slope(lo), slope(hi));
  double mx = std::max(slope(lo), slope(hi));
  if (lo < 0.0 && 0.0 < hi) {
    mn = std::min(mn, 0.0);
    mx = std::max(mx, 0.0);
  }
  return mx - mn;
}

// Range of the diagonal softmax/normalize slope a(1-a) over the reachable
// output interval [lo, hi] (a subset of [0,1]); extremes at the endpoints or
// at the vertex a = 1/2.
double sigmoidal_slope_range(double lo, double hi) {
  auto slope = [](double a) { return a * (1.0 - a); };
  double mn = std::min(slope(lo), slope(hi));
  double mx = std::max(slope(lo), slope(hi));
  if (lo < 0.5 && 0.5 < hi) mx = std::max(mx, 0.25);
  return mx - mn;
}

}  // namespace

std::vector<Vec> sample_points(const PerturbationBox& box, Rng& rng, int n) {
  if (n < 2) throw ConfigError("sampler needs at least 2 points");
  const int dim = static_cast<int>(box.x0.size());
  const Vec lo = box.lo();
  const Vec hi = box.hi();

  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(n));
  out.push_back(box.x0);

  // Corner block: every extreme of a random coordinate subset, the rest of
  // the coordinates pinned at x0.  Shrink the subset if the budget is tight.
  int sub = std::min(10, dim);
  while (sub > 0 && (1 << sub) > n - 2) --sub;
  std::vector<int> subset(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) subset[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < sub; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(dim - i)));
    std::swap(subset[static_cast<std::size_t>(i)], subset[static_cast<std::size_t>(j)]);
  }
  for (int mask = 0; mask < (1 << sub); ++mask) {
    Vec x = box.x0;
    for (int b = 0; b < sub; ++b) {
      const std::size_t coord = static_cast<std::size_t>(subset[static_cast<std::size_t>(b)]);
      x[coord] = (mask >> b) & 1 ? hi[coord] : lo[coord];
    }
    out.push_back(std::move(x));
  }

  const int rest = n - static_cast<int>(out.size());
  const int n_uniform = (rest + 1) / 2;
  for (int s = 0; s < rest; ++s) {
    Vec x(static_cast<std::size_t>(dim));
    if (s < n_uniform) {
      for (int i = 0; i < dim; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        x[si] = rng.uniform(lo[si], hi[si]);
      }
    } else {
      // Boundary-biased: snap each coordinate to lo or hi with probability
      // 1/4 each, draw uniformly otherwise.
      for (int i = 0; i < dim; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const double pick = rng.uniform();
        if (pick < 0.25) {
          x[si] = lo[si];
        } else if (pick < 0.5) {
          x[si] = hi[si];
        } else {
          x[si] = rng.uniform(lo[si], hi[si]);
        }
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

double m_min_hat(const Network& net, int y, const std::vector<Vec>& samples,
                 ExecMode mode) {
  if (samples.empty()) throw ConfigError("margin floor needs samples");
  const int n = static_cast<int>(samples.size());
  std::vector<double> vals(static_cast<std::size_t>(n));
  for_each_sample(n, mode, [&](int i) {
    vals[static_cast<std::size_t>(i)] =
        margin(net, samples[static_cast<std::size_t>(i)], y).value;
  });
  double mn = vals[0];
  for (double v : vals) mn = std::min(mn, v);
  return mn;
}

UnstableReport unstable_fraction(const Network& net, const PerturbationBox& box,
                                 double tau_slope) {
  const IbpTrace trace = ibp_forward(net, box_of(box));
  UnstableReport rep;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Box& in = trace.boxes[l];
    const Box& outb = trace.boxes[l + 1];
    if (std::holds_alternative<Relu>(net.layers[l])) {
      for (std::size_t j = 0; j < in.size(); ++j) {
        ++rep.total;
        if (in.lo[j] < 0.0 && 0.0 < in.hi[j]) ++rep.unstable;
      }
    } else if (const auto* mp = std::get_if<MonomialPower>(&net.layers[l])) {
      for (std::size_t j = 0; j < in.size(); ++j) {
        ++rep.total;
        if (power_slope_range(mp->degree, in.lo[j], in.hi[j]) > tau_slope)
          ++rep.unstable;
      }
    } else if (std::holds_alternative<RowSoftmax>(net.layers[l])) {
      for (std::size_t j = 0; j < outb.size(); ++j) {
        ++rep.total;
        if (sigmoidal_slope_range(outb.lo[j], outb.hi[j]) > tau_slope)
          ++rep.unstable;
      }
    } else if (const auto* att = std::get_if<LinearAttnScore>(&net.layers[l])) {
      // The feature-map kinks live on the query/key projections; bound each
      // projection entry with exact affine interval arithmetic on the input
      // box.
      const int dt = att->wq.rows;
      const int dk = att->wq.cols;
      const int tok = static_cast<int>(in.size()) / dt;
      for (const Mat* w : {&att->wq, &att->wk}) {
        for (int t = 0; t < tok; ++t) {
          for (int a = 0; a < dk; ++a) {
            double plo = 0.0, phi = 0.0;
            for (int f = 0; f < dt; ++f) {
              const std::size_t idx = static_cast<std::size_t>(t * dt + f);
              const double c = w->at(f, a);
              const double v1 = c * in.lo[idx], v2 = c * in.hi[idx];
              plo += std::min(v1, v2);
              phi += std::max(v1, v2);
            }
            ++rep.total;
            if (plo < 0.0 && 0.0 < phi) ++rep.unstable;
          }
        }
      }
    }
  }
  rep.fraction =
      rep.total == 0 ? 0.0
                     : static_cast<double>(rep.unstable) / static_cast<double>(rep.total);
  return rep;
}

double a_tau(const Network& net, int y, const std::vector<Vec>& samples,
             double tau_grid, ExecMode mode, int* cells_out, double* l_c_out) {
  if (samples.empty()) throw ConfigError("gradient cells need samples");
  if (!(tau_grid > 0.0)) throw ConfigError("tau_grid must be positive");
  const int n = static_cast<int>(samples.size());
  std::vector<Vec> grads(static_cast<std::size_t>(n));
  for_each_sample(n, mode, [&](int i) {
    grads[static_cast<std::size_t>(i)] =
        sample_grad(net, samples[static_cast<std::size_t>(i)], y);
  });
  double l_c = 0.0;
  for (const Vec& g : grads) l_c = std::max(l_c, l1_norm(g));
  if (l_c_out) *l_c_out = l_c;
  if (l_c == 0.0) {
    if (cells_out) *cells_out = 1;
    return 0.0;  // single (vanishing) gradient behavior
  }
  const double cell = l_c * tau_grid;
  std::set<std::vector<std::int64_t>> cells;
  for (const Vec& g : grads) {
    std::vector<std::int64_t> q(g.size());
    for (std::size_t j = 0; j < g.size(); ++j)
      q[j] = static_cast<std::int64_t>(std::floor(g[j] / cell));
    cells.insert(std::move(q));
  }
  if (cells_out) *cells_out = static_cast<int>(cells.size());
  return std::log(static_cast<double>(cells.size()));
}

double d_eff(const Network& net, int y, const std::vector<Vec>& samples,
             double eta, ExecMode mode) {
  if (samples.empty()) throw ConfigError("participation ratio needs samples");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  const int n = static_cast<int>(samples.size());
  std::vector<double> ratio(static_cast<std::size_t>(n));
  for_each_sample(n, mode, [&](int i) {
    const Vec g = sample_grad(net, samples[static_cast<std::size_t>(i)], y);
    double l1 = 0.0, l2sq = 0.0;
    for (double v : g) {
      l1 += std::abs(v);
      l2sq += v * v;
    }
    ratio[static_cast<std::size_t>(i)] = l1 * l1 / (l2sq + eta);
  });
  double acc = 0.0;
  for (double v : ratio) acc += v;
  return acc / static_cast<double>(n);
}

DifficultyProfile profile(const Instance& inst, const ProfileConfig& cfg) {
  if (cfg.n_samples < 2) throw ConfigError("profile needs n_samples >= 2");
  const PerturbationBox box{inst.x0, inst.eps};
  Rng rng(cfg.seed);
  std::vector<Vec> samples = sample_points(box, rng, cfg.n_samples);
  // A stored counterexample is the strongest sample available: include it so
  // the margin floor of a nonrobust instance goes negative deterministically.
  if (const Vec* w = inst.cert.vector("witness"))
    if (w->size() == inst.x0.size()) samples.push_back(*w);

  DifficultyProfile p;
  p.n_samples = static_cast<int>(samples.size());
  p.seed = cfg.seed;
  p.tau_slope = cfg.tau_slope;
  p.tau_grid = cfg.tau_grid;
  p.eta = cfg.eta;
  p.m_min_hat = m_min_hat(inst.net, inst.label, samples, cfg.mode);
  p.l_ibp = ibp_margin_lower(inst.net, box_of(box), inst.label);
  p.g_ibp = g_ibp_value(p.m_min_hat, p.l_ibp, cfg.eta);
  const UnstableReport ur = unstable_fraction(inst.net, box, cfg.tau_slope);
  p.unstable_units = ur.unstable;
  p.total_units = ur.total;
  p.u_fraction = ur.fraction;
  p.a_tau = a_tau(inst.net, inst.label, samples, cfg.tau_grid, cfg.mode,
                  &p.grad_cells, &p.l_c);
  p.d_eff = d_eff(inst.net, inst.label, samples, cfg.eta, cfg.mode);
  return p;
}

AucResult timeout_auc(const std::vector<double>& values,
                      const std::vector<int>& is_timeout) {
  AucResult res;
  if (values.size() != is_timeout.size())
    throw ConfigError("AUC inputs must align");
  const std::size_t n = values.size();
  std::size_t n_pos = 0;
  for (int f : is_timeout) n_pos += f ? 1u : 0u;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return res;  // undefined, reported as such

  // Midrank assignment: sort by value, average ranks across ties.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (is_timeout[k]) rank_sum_pos += rank[k];
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  res.value = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
  res.defined = true;
  return res;
}

}  // namespace certbench

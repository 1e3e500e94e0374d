#pragma once

#include <cstdint>
#include <vector>

#include "certbench/certificate.hpp"
#include "certbench/interval.hpp"
#include "certbench/net.hpp"
#include "certbench/oracle.hpp"
#include "certbench/rng.hpp"

namespace certbench {

// Difficulty profile of one verification instance: sampled margin floor,
// certified-bound gap, unstable-unit fraction, gradient-cell complexity, and
// participation-ratio dimension, together with every knob that shaped them.
struct DifficultyProfile {
  double m_min_hat = 0.0;   // min sampled margin
  double l_ibp = 0.0;       // certified interval lower bound on the margin
  double g_ibp = 0.0;       // (m_min_hat - l_ibp) / (|m_min_hat| + eta)
  double u_fraction = 0.0;  // unstable units / total activation units
  double a_tau = 0.0;       // log of the number of distinct gradient cells
  double d_eff = 0.0;       // mean participation ratio of sampled gradients
  double l_c = 0.0;         // max sampled gradient l1 norm (A_tau scale)
  int unstable_units = 0;
  int total_units = 0;
  int grad_cells = 0;
  int n_samples = 0;
  std::uint64_t seed = 0;
  double tau_slope = 0.0;
  double tau_grid = 0.0;
  double eta = 0.0;
};

struct ProfileConfig {
  int n_samples = 2048;
  double tau_slope = 0.01;
  double tau_grid = 0.1;
  double eta = 1e-9;
  std::uint64_t seed = 0;
  ExecMode mode = ExecMode::Parallel;
};

// Mixture sampler over the perturbation box.  The first points are
// deterministic: x0 itself, then every corner of a random coordinate subset
// of size min(10, dim) with the remaining coordinates pinned at x0.  Half of
// the remaining budget is uniform; the other half snaps each coordinate to
// lo or hi with probability 1/4 each and draws uniformly otherwise.
std::vector<Vec> sample_points(const PerturbationBox& box, Rng& rng, int n);

// Exact minimum of the sampled margins; negative means the sampler already
// found a counterexample.
double m_min_hat(const Network& net, int y, const std::vector<Vec>& samples,
                 ExecMode mode = ExecMode::Parallel);

inline double g_ibp_value(double m_min, double l_ibp, double eta) {
  return (m_min - l_ibp) / (std::abs(m_min) + eta);
}

// Unstable-unit count over all activation units: a ReLU-style unit is
// unstable when its preactivation interval straddles zero strictly, a smooth
// unit (monomial power, softmax coordinate) when its analytic slope range
// across the reachable interval exceeds tau_slope.
struct UnstableReport {
  int unstable = 0;
  int total = 0;
  double fraction = 0.0;  // 0 when the network has no activation units
};
UnstableReport unstable_fraction(const Network& net, const PerturbationBox& box,
                                 double tau_slope);

// log(#distinct coordinatewise-quantized margin gradients) over the samples;
// cells/l_c_out report the count and the empirical gradient scale.
double a_tau(const Network& net, int y, const std::vector<Vec>& samples,
             double tau_grid, ExecMode mode = ExecMode::Parallel,
             int* cells_out = nullptr, double* l_c_out = nullptr);

// Mean participation ratio |grad|_1^2 / (|grad|_2^2 + eta) of the sampled
// margin gradients; 0 when every gradient vanishes, at most the dimension.
double d_eff(const Network& net, int y, const std::vector<Vec>& samples,
             double eta, ExecMode mode = ExecMode::Parallel);

// Full pipeline.  Deterministic given cfg: the sampler stream is seeded from
// cfg.seed, reductions run in fixed order in both exec modes, and a stored
// counterexample witness (if the certificate carries one) joins the sample
// set so nonrobust instances surface a negative m_min_hat.
DifficultyProfile profile(const Instance& inst, const ProfileConfig& cfg);

// Rank-based (Mann-Whitney) AUC of `values` against binary timeout flags,
// ties counted half; undefined when either class is empty.
struct AucResult {
  double value = 0.5;
  bool defined = false;
};
AucResult timeout_auc(const std::vector<double>& values,
                      const std::vector<int>& is_timeout);

}  // namespace certbench

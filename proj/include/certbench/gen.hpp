#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "certbench/certificate.hpp"
#include "certbench/oracle.hpp"
#include "certbench/rng.hpp"

namespace certbench {

// Knob bag for one generator call.  Families read the keys they know and
// fall back to documented defaults, so config rows only list overrides.
using GenParams = std::map<std::string, double>;

inline double param(const GenParams& p, const std::string& key, double dflt) {
  auto it = p.find(key);
  return it == p.end() ? dflt : it->second;
}

// Family tags used in certificates, manifests, and config rows.
inline constexpr const char* kFamilyMeap = "meap";
inline constexpr const char* kFamilyExactRadius = "exact_radius";
inline constexpr const char* kFamilyConstBox = "const_box";
inline constexpr const char* kFamilyCorner = "corner";
inline constexpr const char* kFamilyContractive = "contractive_cnn";
inline constexpr const char* kFamilyPairedBias = "paired_bias_cnn";
inline constexpr const char* kFamilySoftmaxOrder = "softmax_order";
inline constexpr const char* kFamilyDominantKey = "dominant_key";
inline constexpr const char* kFamilyPolynomial = "polynomial";

// Each generator returns one instance whose certificate already passed the
// family checker; they throw GenerationError when the sampled parameters
// cannot be rescued after bounded retries.

// Fully-connected ReLU families.
Instance gen_meap(const GenParams& p, std::uint64_t seed, std::string id);
Instance gen_exact_radius(const GenParams& p, std::uint64_t seed,
                          std::string id);
Instance gen_const_box(const GenParams& p, std::uint64_t seed, std::string id);
Instance gen_corner(const GenParams& p, std::uint64_t seed, std::string id);

// Convolutional families.
Instance gen_contractive(const GenParams& p, std::uint64_t seed,
                         std::string id);
Instance gen_paired_bias(const GenParams& p, std::uint64_t seed,
                         std::string id);

// Attention families.
Instance gen_softmax_order(const GenParams& p, std::uint64_t seed,
                           std::string id);
Instance gen_dominant_key(const GenParams& p, std::uint64_t seed,
                          std::string id);

// Polynomial family.
Instance gen_polynomial(const GenParams& p, std::uint64_t seed,
                        std::string id);

// Closed-form certificate constants, shared by generators, checkers, and
// tests.  score_gap_constant bounds how much one nominal score gap can close
// under an entrywise-eps token perturbation; linear_drift_bound bounds the
// row-wise attention-output drift of a normalized nonnegative-kernel
// attention module with dominance ratio rho.
inline double score_gap_constant(double m_op, double diff_norm,
                                 double query_norm, int d_tok, double eps) {
  const double rd = std::sqrt(static_cast<double>(d_tok));
  return rd * m_op * (diff_norm + 2.0 * query_norm) +
         2.0 * eps * static_cast<double>(d_tok) * m_op;
}

inline double linear_drift_bound(double rho, double value_spread, double eps,
                                 double l_v) {
  const double c = 2.0 / (1.0 + rho);
  return c * value_spread + (1.0 + c) * eps * l_v;
}

// --- polynomial-family support, exposed so tests can drive each stage ---

// Real roots of an ascending-coefficient polynomial inside [-t_max, t_max]:
// dense-grid sign-change bracketing, bisection, then one Newton polish.
// Roots of even multiplicity (no sign change) may be missed; downstream the
// separation check is the safety net for anything bracketing cannot see.
// Throws ConfigError on the identically-zero polynomial.
std::vector<double> real_roots_univariate(const std::vector<double>& coeffs,
                                          double t_max);

// Ascending coefficients of t -> f_0 - f_1 restricted to the line a + t v
// for a two-class affine/monomial-power/affine network.
std::vector<double> margin_line_coeffs(const Network& net, const Vec& a,
                                       const Vec& v);

// Random point on the decision surface: slices with random lines through a
// random anchor until a root with an informative gradient (l1 norm >= 1e-8)
// appears.  Throws GenerationError once max_tries lines come up empty.
Vec sample_boundary_point(const Network& net, Rng& rng, int max_tries);

// Multistart projected-gradient minimization of the squared class margin
// over the eps-box around x0.  pass <=> the smallest value found stays at or
// above threshold, i.e. no numerical boundary intersection was detected.
struct SeparationReport {
  double min_margin_sq = 0.0;
  bool pass = false;
};
SeparationReport separation_check(const Network& net, const Vec& x0,
                                  double eps, int restarts, int iters,
                                  double threshold, std::uint64_t seed,
                                  ExecMode mode = ExecMode::Parallel);

// Family-specific certificate recomputation (called via check_certificate).
CheckReport check_meap(const Instance& inst);
CheckReport check_exact_radius(const Instance& inst);
CheckReport check_const_box(const Instance& inst);
CheckReport check_corner(const Instance& inst);
CheckReport check_contractive(const Instance& inst);
CheckReport check_paired_bias(const Instance& inst);
CheckReport check_softmax_order(const Instance& inst);
CheckReport check_dominant_key(const Instance& inst);
CheckReport check_polynomial(const Instance& inst);

// Generate by family tag; throws ConfigError for an unknown tag.
Instance generate_instance(const std::string& family, const GenParams& p,
                           std::uint64_t seed, std::string id);

}  // namespace certbench

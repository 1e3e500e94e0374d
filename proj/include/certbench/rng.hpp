#pragma once

#include <cstdint>

namespace certbench {

// Deterministic PRNG (xoshiro256++) with explicit distribution code so that
// streams are reproducible bit-for-bit across standard libraries.  All
// randomness in the generators flows through this class; std::random is not
// used anywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0,1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Log-uniform on [lo, hi], lo > 0.
  double log_uniform(double lo, double hi);
  // Standard normal via the polar method (no trig, fully deterministic).
  double normal();
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  // Random sign, +1 or -1.
  double sign();

 private:
  uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Mixes words into a single well-scrambled 64-bit seed (splitmix64 chain).
uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c);

// FNV-1a of a string, used to derive per-constructor seed streams.
uint64_t hash_str(const char* s);

}  // namespace certbench

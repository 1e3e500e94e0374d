// Compares the OpenMP-parallel kernels against their serial reference paths
// on representative instances: wall time, speedup, and bitwise agreement of
// every result (both paths reduce in fixed order, so they must match).
//
// Usage: bench_kernels [repeats]   (default 3; best-of-N is reported)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "certbench/campaign.hpp"
#include "certbench/gen.hpp"
#include "certbench/oracle.hpp"
#include "certbench/profiler.hpp"

using namespace certbench;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double best_ms(int repeats, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

int failures = 0;

void report(const char* name, double serial_ms, double parallel_ms,
            bool match) {
  std::printf("%-28s %10.1f ms %10.1f ms %8.2fx   %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, match ? "match" : "MISMATCH");
  if (!match) ++failures;
}

bool same_profile(const DifficultyProfile& a, const DifficultyProfile& b) {
  return a.m_min_hat == b.m_min_hat && a.l_ibp == b.l_ibp &&
         a.g_ibp == b.g_ibp && a.u_fraction == b.u_fraction &&
         a.a_tau == b.a_tau && a.d_eff == b.d_eff && a.l_c == b.l_c &&
         a.unstable_units == b.unstable_units &&
         a.total_units == b.total_units && a.grad_cells == b.grad_cells;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 3;
  if (repeats < 1) {
    std::fprintf(stderr, "usage: bench_kernels [repeats >= 1]\n");
    return 2;
  }
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (compiled without OpenMP)\n");
#endif
  std::printf("%-28s %13s %13s %9s   %s\n", "kernel", "serial", "parallel",
              "speedup", "results");

  // Dense conv net: the attack's forward/backward passes dominate.
  Instance cnn = generate_instance(
      kFamilyContractive,
      {{"spatial", 8}, {"channels", 12}, {"blocks", 4}}, 2024, "bench-cnn");
  {
    AttackOptions a;
    a.random_samples = 2000;
    a.restarts = 24;
    a.steps = 80;
    a.seed = 99;
    PerturbationBox box{cnn.x0, cnn.eps};
    AttackResult rs, rp;
    const double ts = best_ms(repeats, [&] {
      AttackOptions o = a;
      o.mode = ExecMode::Serial;
      rs = attack_search(cnn.net, box, cnn.label, o);
    });
    const double tp = best_ms(repeats, [&] {
      AttackOptions o = a;
      o.mode = ExecMode::Parallel;
      rp = attack_search(cnn.net, box, cnn.label, o);
    });
    report("attack_search (conv net)", ts, tp,
           rs.best_margin == rp.best_margin && rs.success == rp.success);
  }

  // Polynomial boundary-separation check: many independent descent starts.
  Instance poly = generate_instance(
      kFamilyPolynomial,
      {{"dim", 24}, {"hidden", 64}, {"degree", 4}, {"delta", 0.004}}, 77,
      "bench-poly");
  {
    SeparationReport ss, sp;
    const double ts = best_ms(repeats, [&] {
      ss = separation_check(poly.net, poly.x0, poly.eps, 64, 500, 1e-6, 31,
                            ExecMode::Serial);
    });
    const double tp = best_ms(repeats, [&] {
      sp = separation_check(poly.net, poly.x0, poly.eps, 64, 500, 1e-6, 31,
                            ExecMode::Parallel);
    });
    report("separation_check (poly)", ts, tp,
           ss.min_margin_sq == sp.min_margin_sq && ss.pass == sp.pass);
  }

  // Difficulty profile: sampling, gradient, and cell passes.
  Instance meap = generate_instance(kFamilyMeap, {{"dim", 80}, {"pairs", 12}},
                                    51, "bench-meap");
  {
    ProfileConfig cfg;
    cfg.n_samples = 4096;
    cfg.seed = 5;
    DifficultyProfile ps, pp;
    const double ts = best_ms(repeats, [&] {
      ProfileConfig c = cfg;
      c.mode = ExecMode::Serial;
      ps = profile(meap, c);
    });
    const double tp = best_ms(repeats, [&] {
      ProfileConfig c = cfg;
      c.mode = ExecMode::Parallel;
      pp = profile(meap, c);
    });
    report("profile (relu pairs)", ts, tp, same_profile(ps, pp));
  }
  Instance attn = generate_instance(kFamilyDominantKey,
                                    {{"tokens", 4}, {"token_dim", 8}}, 63,
                                    "bench-attn");
  {
    ProfileConfig cfg;
    cfg.n_samples = 4096;
    cfg.seed = 5;
    DifficultyProfile ps, pp;
    const double ts = best_ms(repeats, [&] {
      ProfileConfig c = cfg;
      c.mode = ExecMode::Serial;
      ps = profile(attn, c);
    });
    const double tp = best_ms(repeats, [&] {
      ProfileConfig c = cfg;
      c.mode = ExecMode::Parallel;
      pp = profile(attn, c);
    });
    report("profile (attention)", ts, tp, same_profile(ps, pp));
  }

  if (failures != 0) {
    std::printf("\n%d kernel(s) disagreed between serial and parallel\n",
                failures);
    return 1;
  }
  std::printf("\nall kernels agree bitwise between serial and parallel\n");
  return 0;
}

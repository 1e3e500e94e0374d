// certbench: generate, profile, validate, and analyze robustness-verification
// instances whose ground-truth labels carry machine-checkable certificates.

#include <cstdint>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "certbench/campaign.hpp"
#include "certbench/errors.hpp"

namespace {

// 0 = success, 1 = gate/validation failure, 2 = usage/config error.
constexpr int kOk = 0;
constexpr int kGateFailure = 1;
constexpr int kUsageError = 2;

std::vector<std::pair<std::string, std::string>> parse_pairs(
    const std::vector<std::string>& raw) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& s : raw) {
    const size_t comma = s.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 >= s.size() ||
        s.find(',', comma + 1) != std::string::npos) {
      throw certbench::ConfigError(
          "--pair expects two comma-separated column names, got '" + s + "'");
    }
    out.emplace_back(s.substr(0, comma), s.substr(comma + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "certbench: robustness-verification instances with proven ground-truth "
      "labels -- generator, difficulty profiler, validator, and outcome "
      "analyzer"};
  app.require_subcommand(1);

  // generate
  std::string gen_config, gen_out;
  int gen_jobs = 1;
  std::uint64_t gen_seed = 0;
  bool gen_f32 = false;
  CLI::App* generate = app.add_subcommand(
      "generate", "generate a campaign of certified instances from a config");
  generate->add_option("--config", gen_config, "campaign config (JSON)")
      ->required();
  generate->add_option("--out", gen_out, "output directory")->required();
  generate->add_option("--jobs", gen_jobs, "parallel generation workers")
      ->check(CLI::Range(1, 1024));
  CLI::Option* gen_seed_opt = generate->add_option(
      "--seed", gen_seed, "master seed override (defaults to the config's)");
  generate->add_flag("--float32", gen_f32,
                     "emit float32 network tensors instead of float64");

  // profile
  std::vector<std::string> prof_in;
  std::string prof_out;
  int prof_samples = 2048;
  double prof_tau_grid = 0.1, prof_tau_slope = 0.01;
  std::uint64_t prof_seed = 0;
  CLI::App* profile = app.add_subcommand(
      "profile", "estimate difficulty profiles and write them as CSV");
  profile
      ->add_option("--in", prof_in,
                   "instance directory, or explicit manifest/.onnx+.vnnlib "
                   "files")
      ->required()
      ->expected(-1);
  profile->add_option("--out", prof_out, "output CSV path")->required();
  profile->add_option("--samples", prof_samples, "sample budget per instance")
      ->check(CLI::Range(1, 10000000));
  profile->add_option("--tau-grid", prof_tau_grid,
                      "gradient-cell quantization step")
      ->check(CLI::PositiveNumber);
  profile->add_option("--tau-slope", prof_tau_slope,
                      "smooth-unit instability slope threshold")
      ->check(CLI::PositiveNumber);
  profile->add_option("--seed", prof_seed, "master sampling seed");

  // validate
  std::string val_in, val_budget;
  CLI::App* validate = app.add_subcommand(
      "validate", "re-check every emitted instance in a directory from disk");
  validate->add_option("--in", val_in, "instance directory")->required();
  validate->add_option(
      "--budget", val_budget,
      "attack budget, e.g. samples=10000,restarts=100,steps=200");

  // analyze
  std::string an_outcomes, an_profiles, an_out;
  int an_bins = 5;
  std::vector<std::string> an_pairs;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "timeout AUC per profile component plus binned-rate grids");
  analyze->add_option("--outcomes", an_outcomes, "verifier outcomes CSV")
      ->required();
  analyze->add_option("--profiles", an_profiles, "difficulty profiles CSV")
      ->required();
  analyze->add_option("--out", an_out, "output directory")->required();
  analyze->add_option("--bins", an_bins, "bins per grid axis")
      ->check(CLI::Range(1, 64));
  analyze->add_option("--pair", an_pairs,
                      "component pair for a rate grid, e.g. u_fraction,d_eff "
                      "(repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsageError;
  }

  try {
    if (generate->parsed()) {
      certbench::CampaignConfig cfg =
          certbench::read_campaign_config(gen_config);
      certbench::GenerateOptions opts;
      opts.jobs = gen_jobs;
      if (gen_seed_opt->count() > 0) opts.seed_override = gen_seed;
      opts.downcast_f32 = gen_f32;
      opts.log = &std::cout;
      const certbench::GenerateReport rep =
          certbench::run_generate(cfg, gen_out, opts);
      return rep.ok() ? kOk : kGateFailure;
    }
    if (profile->parsed()) {
      certbench::ProfileRunOptions opts;
      opts.base.n_samples = prof_samples;
      opts.base.tau_grid = prof_tau_grid;
      opts.base.tau_slope = prof_tau_slope;
      opts.base.seed = prof_seed;
      opts.log = &std::cout;
      certbench::run_profile(prof_in, prof_out, opts);
      return kOk;
    }
    if (validate->parsed()) {
      certbench::ValidateOptions opts;
      opts.attack = certbench::parse_attack_budget(val_budget);
      opts.log = &std::cout;
      const certbench::ValidateReport rep =
          certbench::run_validate(val_in, opts);
      return rep.ok() ? kOk : kGateFailure;
    }
    if (analyze->parsed()) {
      certbench::AnalyzeOptions opts;
      opts.bins = an_bins;
      if (!an_pairs.empty()) opts.pairs = parse_pairs(an_pairs);
      opts.log = &std::cout;
      certbench::run_analyze(an_outcomes, an_profiles, an_out, opts);
      return kOk;
    }
  } catch (const certbench::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const certbench::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kGateFailure;
  }
  return kUsageError;
}

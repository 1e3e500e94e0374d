#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "certbench/emit.hpp"
#include "certbench/gen.hpp"
#include "certbench/oracle.hpp"
#include "certbench/profiler.hpp"

namespace certbench {

// ---- campaign configuration ---------------------------------------------------

// One generation request: a family tag, parameter overrides, and an expansion
// count.  Expanded copies share parameters but receive distinct ordinals,
// hence distinct seeds and ids.
struct CampaignRow {
  std::string family;
  GenParams params;
  int count = 1;
  std::string note;  // free text kept for documentation; never interpreted
};

struct CampaignConfig {
  std::uint64_t seed = 0;  // master seed; the config file must provide one
  std::vector<CampaignRow> rows;
};

// Config document shape:
//   {"schema": "certbench-campaign-v1", "seed": 1234,
//    "rows": [{"family": "meap", "count": 1, "note": "...",
//              "params": {"dim": 100, "eps": 0.05}}, ...]}
// "schema" and "notes" (a list of free-text strings) are optional; "seed" is
// mandatory.  Unknown keys, unknown families, unknown parameter names, and
// non-finite parameter values raise ConfigError naming the offending row.
// Parameter values may be JSON numbers or booleans (true/false -> 1/0).
CampaignConfig parse_campaign_config(const std::string& text);
CampaignConfig read_campaign_config(const std::string& path);

// Sorted parameter names a family accepts; ConfigError for unknown families.
const std::vector<std::string>& family_param_names(const std::string& family);

// Per-instance seed.  It depends only on the master seed, the family tag,
// and the instance's 1-based ordinal within its family, so rows of one
// family can be reordered or interleaved with other families' rows without
// reseeding anything.
std::uint64_t row_seed(std::uint64_t master, const std::string& family,
                       int ordinal);

// "meap-007": family tag plus 1-based zero-padded ordinal.
std::string instance_id(const std::string& family, int ordinal);

// "samples=2000,restarts=20,steps=100,step_frac=0.25" -> options, starting
// from `base`.  Unknown keys or unparsable values raise ConfigError.
AttackOptions parse_attack_budget(const std::string& spec,
                                  const AttackOptions& base = {});

// ---- generate -------------------------------------------------------------------

struct GenerateOptions {
  int jobs = 1;                                // worker threads over instances
  std::optional<std::uint64_t> seed_override;  // wins over the config seed
  AttackOptions attack;     // gate budget; seed and mode are derived per id
  bool downcast_f32 = false;  // emit float32 ONNX tensors instead of float64
  std::ostream* log = nullptr;  // summary table sink (nullptr = silent)
};

struct InstanceOutcome {
  std::string id;
  std::string family;
  bool robust = false;
  double eps = 0.0;
  // Attack-oracle result: best (lowest) margin found for robust instances,
  // margin at the stored witness for nonrobust ones.
  double oracle_margin = 0.0;
  std::vector<std::string> failures;  // empty <=> instance emitted and clean

  bool ok() const { return failures.empty(); }
};

struct GenerateReport {
  std::vector<InstanceOutcome> instances;
  int failed = 0;

  bool ok() const { return failed == 0; }
};

// Expands the config, generates every instance (in parallel when jobs > 1),
// re-runs the certificate checks, subjects robust instances to the attack
// oracle, and emits <id>.onnx / <id>.vnnlib / <id>.json plus a summary.csv
// into out_dir.  Instances that fail the gate are reported and NOT emitted.
// The emitted tree is byte-identical for a fixed config and master seed,
// independent of jobs.  ConfigError aborts the whole run (bad row);
// generation-level failures are recorded per instance instead.
GenerateReport run_generate(const CampaignConfig& cfg,
                            const std::string& out_dir,
                            const GenerateOptions& opts);

// ---- validate -------------------------------------------------------------------

struct ValidateOptions {
  AttackOptions attack;         // oracle budget for robust instances
  std::ostream* log = nullptr;  // per-instance report sink
};

struct ValidateReport {
  std::vector<InstanceOutcome> instances;
  int failed = 0;

  bool ok() const { return failed == 0; }
};

// Re-checks every manifest in a directory from disk: reads the manifest, the
// ONNX network, and the VNNLIB spec; cross-checks them against each other;
// re-runs check_certificate; and re-runs the attack oracle on robust
// instances.  Every violation is collected (one instance's corruption never
// hides another's).  Files that fail to load are reported as violations.
ValidateReport run_validate(const std::string& in_dir,
                            const ValidateOptions& opts);

// ---- profile --------------------------------------------------------------------

struct ProfileRunOptions {
  ProfileConfig base;  // n_samples / tau knobs / master seed / exec mode
  std::ostream* log = nullptr;
};

// Difficulty profiles as CSV, one row per instance, sorted by id.  `inputs`
// is either a single directory (scanned for manifests) or an explicit list
// of files: manifests, or extension-paired <stem>.onnx + <stem>.vnnlib pairs
// for instances produced elsewhere (family column "external").  Each
// instance is profiled with seed mix_seed(master, hash(id)), so results do
// not depend on scan order.  Returns the number of rows written.
int run_profile(const std::vector<std::string>& inputs,
                const std::string& out_csv, const ProfileRunOptions& opts);

// ---- analyze --------------------------------------------------------------------

struct AnalyzeOptions {
  int bins = 5;  // per-axis bin count of the 2-D timeout-rate grids
  // Component pairs for the grids; both names must be numeric columns of the
  // profiles CSV.
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"u_fraction", "d_eff"}};
  std::ostream* log = nullptr;
};

struct AucRow {
  std::string verifier;   // outcome-file verifier tag, or "all" when pooled
  std::string component;  // m_min_hat | g_ibp | u_fraction | a_tau | d_eff
  AucResult auc;
  int timeouts = 0;
  int solved = 0;
};

struct AnalyzeResult {
  std::vector<AucRow> rows;
  int observations = 0;  // joined (instance, verifier) pairs, errors excluded
};

// Joins a verifier-outcome CSV (columns: id, outcome, optional verifier;
// outcomes UNSAT/SAT/TIMEOUT/ERROR, ERROR rows dropped) with a profiles CSV
// (as written by run_profile) on id, then writes per-component timeout AUCs
// (auc.csv, auc.txt) and 2-D binned timeout-rate grids (grid_<x>_vs_<y>.csv
// and .txt) into out_dir.
AnalyzeResult run_analyze(const std::string& outcomes_csv,
                          const std::string& profiles_csv,
                          const std::string& out_dir,
                          const AnalyzeOptions& opts);

// ---- CSV ------------------------------------------------------------------------

// Minimal delimited-text support for outcome/profile tables: header plus
// comma-separated rows, no quoting (field values must not contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; -1 when absent.
  int col(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);  // ParseError with line numbers
CsvTable read_csv(const std::string& path);

}  // namespace certbench

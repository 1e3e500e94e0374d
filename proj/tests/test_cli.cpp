// Batch orchestration: campaign configs, seed derivation, generation with
// the emission gate, disk revalidation, profile CSVs, and outcome analysis.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "certbench/campaign.hpp"
#include "certbench/emit.hpp"
#include "certbench/errors.hpp"
#include "certbench/gen.hpp"
#include "certbench/rng.hpp"
#include "json.hpp"

using namespace certbench;
namespace fs = std::filesystem;

namespace {

// Scratch directory that cleans up after itself.
struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name) : path("cli_test_" + name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& leaf) const {
    return (path / leaf).string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(static_cast<bool>(out));
  out << text;
}

// Cheap campaign exercising three structurally different families; the
// attack budget is trimmed so the gate still runs but stays fast.
const char* kSmallConfig = R"({
  "schema": "certbench-campaign-v1",
  "seed": 424242,
  "rows": [
    {"family": "meap",
     "params": {"dim": 16, "pairs": 3, "eps": 0.1, "gamma": 0.02}},
    {"family": "exact_radius", "count": 2,
     "params": {"dim": 2, "width": 4, "depth": 2, "eps_frac": 0.9}},
    {"family": "polynomial",
     "params": {"dim": 5, "hidden": 10, "degree": 4, "delta": 0.002}}
  ]
})";

AttackOptions small_budget() {
  AttackOptions a;
  a.random_samples = 500;
  a.restarts = 8;
  a.steps = 40;
  return a;
}

GenerateReport generate_small(const std::string& out_dir, int jobs = 1) {
  CampaignConfig cfg = parse_campaign_config(kSmallConfig);
  GenerateOptions opts;
  opts.jobs = jobs;
  opts.attack = small_budget();
  return run_generate(cfg, out_dir, opts);
}

// Relative file listing with byte contents, for tree equality checks.
std::map<std::string, std::string> tree_bytes(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), dir).string()] = slurp(e.path().string());
    }
  }
  return out;
}

}  // namespace

TEST_CASE("campaign config parses rows, params, counts, and notes") {
  CampaignConfig cfg = parse_campaign_config(R"({
    "schema": "certbench-campaign-v1",
    "seed": 7,
    "notes": ["free text", "more text"],
    "rows": [
      {"family": "meap", "note": "a", "params": {"dim": 20, "eps": 0.25}},
      {"family": "corner", "count": 3, "params": {"robust": true}},
      {"family": "polynomial"}
    ]
  })");
  CHECK(cfg.seed == 7);
  REQUIRE(cfg.rows.size() == 3);
  CHECK(cfg.rows[0].family == "meap");
  CHECK(cfg.rows[0].note == "a");
  CHECK(cfg.rows[0].count == 1);
  CHECK(cfg.rows[0].params.at("dim") == 20.0);
  CHECK(cfg.rows[0].params.at("eps") == 0.25);
  CHECK(cfg.rows[1].count == 3);
  CHECK(cfg.rows[1].params.at("robust") == 1.0);  // booleans become 0/1
  CHECK(cfg.rows[2].params.empty());

  // Empty campaign: no rows key at all.
  CampaignConfig empty = parse_campaign_config(R"({"seed": 1})");
  CHECK(empty.rows.empty());
}

TEST_CASE("campaign config rejects malformed documents with row numbers") {
  // Broken JSON carries the parser's byte offset.
  CHECK_THROWS_WITH_AS(parse_campaign_config("{\"seed\": "),
                       doctest::Contains("byte"), ParseError);
  // The master seed is mandatory and must be a nonnegative integer.
  CHECK_THROWS_WITH_AS(parse_campaign_config(R"({"rows": []})"),
                       doctest::Contains("master seed"), ConfigError);
  CHECK_THROWS_AS(parse_campaign_config(R"({"seed": -3})"), ConfigError);
  CHECK_THROWS_AS(parse_campaign_config(R"({"seed": 0.5})"), ConfigError);
  CHECK_THROWS_AS(parse_campaign_config(R"([1, 2])"), ConfigError);
  // Unknown keys anywhere are refused.
  CHECK_THROWS_WITH_AS(
      parse_campaign_config(R"({"seed": 1, "extra": 0})"),
      doctest::Contains("unknown key 'extra'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_campaign_config(
          R"({"seed": 1, "rows": [{"family": "meap", "dim": 3}]})"),
      doctest::Contains("config row 1"), ConfigError);
  // Unknown family and unknown parameter name both name the row.
  CHECK_THROWS_WITH_AS(
      parse_campaign_config(
          R"({"seed": 1, "rows": [{"family": "meap"}, {"family": "nope"}]})"),
      doctest::Contains("config row 2"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_campaign_config(
          R"({"seed": 1, "rows": [{"family": "meap",
                                   "params": {"width": 4}}]})"),
      doctest::Contains("unknown parameter 'width'"), ConfigError);
  // Parameter values must be finite numbers or booleans.
  CHECK_THROWS_WITH_AS(
      parse_campaign_config(
          R"({"seed": 1, "rows": [{"family": "meap",
                                   "params": {"eps": "big"}}]})"),
      doctest::Contains("must be a number"), ConfigError);
  CHECK_THROWS_AS(
      parse_campaign_config(
          R"({"seed": 1, "rows": [{"family": "meap",
                                   "params": {"eps": 1e999}}]})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_campaign_config(
          R"({"seed": 1, "rows": [{"family": "meap", "count": 0}]})"),
      ConfigError);
  // Config-level schema tag, when present, must match.
  CHECK_THROWS_AS(parse_campaign_config(R"({"seed": 1, "schema": "other"})"),
                  ConfigError);
}

TEST_CASE("per-instance seeds depend only on master, family, and ordinal") {
  const std::uint64_t master = 99;
  // A family's seeds never move when other families' rows are added around
  // it, because the ordinal counts within the family only.
  CampaignConfig a = parse_campaign_config(R"({
    "seed": 99,
    "rows": [{"family": "meap", "count": 2}]
  })");
  CampaignConfig b = parse_campaign_config(R"({
    "seed": 99,
    "rows": [
      {"family": "corner"},
      {"family": "meap"},
      {"family": "polynomial"},
      {"family": "meap"}
    ]
  })");
  CHECK(row_seed(master, "meap", 1) == row_seed(99, "meap", 1));
  for (int ord = 1; ord <= 2; ++ord) {
    CHECK(row_seed(a.seed, "meap", ord) == row_seed(b.seed, "meap", ord));
  }
  // Distinct coordinates give distinct seeds.
  std::set<std::uint64_t> seen;
  for (int ord = 1; ord <= 50; ++ord) {
    seen.insert(row_seed(master, "meap", ord));
    seen.insert(row_seed(master, "corner", ord));
    seen.insert(row_seed(master + 1, "meap", ord));
  }
  CHECK(seen.size() == 150);
  CHECK(instance_id("meap", 7) == "meap-007");
  CHECK(instance_id("paired_bias_cnn", 123) == "paired_bias_cnn-123");
}

TEST_CASE("attack budget specs parse into options") {
  AttackOptions base;
  AttackOptions a = parse_attack_budget("", base);
  CHECK(a.random_samples == base.random_samples);
  CHECK(a.restarts == base.restarts);
  a = parse_attack_budget("samples=2000,restarts=20,steps=50,step_frac=0.25",
                          base);
  CHECK(a.random_samples == 2000);
  CHECK(a.restarts == 20);
  CHECK(a.steps == 50);
  CHECK(a.step_frac == 0.25);
  a = parse_attack_budget("samples=0", base);
  CHECK(a.random_samples == 0);
  CHECK(a.restarts == base.restarts);
  CHECK_THROWS_AS(parse_attack_budget("samples=ten", base), ConfigError);
  CHECK_THROWS_AS(parse_attack_budget("budget=3", base), ConfigError);
  CHECK_THROWS_AS(parse_attack_budget("samples", base), ConfigError);
  CHECK_THROWS_AS(parse_attack_budget("steps=0", base), ConfigError);
  CHECK_THROWS_AS(parse_attack_budget("step_frac=-1", base), ConfigError);
}

TEST_CASE("generate emits files, summary, and a clean report") {
  TmpDir tmp("generate");
  std::ostringstream log;
  CampaignConfig cfg = parse_campaign_config(kSmallConfig);
  GenerateOptions opts;
  opts.attack = small_budget();
  opts.log = &log;
  GenerateReport rep = run_generate(cfg, tmp.str(), opts);

  REQUIRE(rep.instances.size() == 4);  // count:2 expands the radius row
  CHECK(rep.ok());
  CHECK(rep.failed == 0);
  const std::vector<std::string> ids = {"meap-001", "exact_radius-001",
                                        "exact_radius-002", "polynomial-001"};
  for (size_t i = 0; i < ids.size(); ++i) {
    CHECK(rep.instances[i].id == ids[i]);
    CHECK(rep.instances[i].ok());
    CHECK(fs::exists(tmp.sub(ids[i] + ".onnx")));
    CHECK(fs::exists(tmp.sub(ids[i] + ".vnnlib")));
    CHECK(fs::exists(tmp.sub(ids[i] + ".json")));
  }
  // Robust instances carry the attack's best margin, which must be positive.
  for (const InstanceOutcome& o : rep.instances) {
    if (o.robust) CHECK(o.oracle_margin > 0.0);
  }

  // The manifest round-trips into a checkable instance.
  Manifest m = read_manifest(tmp.sub("meap-001.json"));
  CHECK(m.id == "meap-001");
  CHECK(m.family == "meap");
  CHECK(m.seed == row_seed(cfg.seed, "meap", 1));
  CHECK(m.params.at("dim") == 16.0);
  Instance inst = instance_from(m, read_back(tmp.sub("meap-001.onnx")));
  CHECK(check_certificate(inst).ok());

  // Summary CSV: one line per instance plus header, all ok.
  CsvTable summary = parse_csv(slurp(tmp.sub("summary.csv")));
  REQUIRE(summary.rows.size() == 4);
  const int sc = summary.col("status");
  const int seedc = summary.col("seed");
  REQUIRE(sc >= 0);
  REQUIRE(seedc >= 0);
  for (const auto& row : summary.rows) CHECK(row[size_t(sc)] == "ok");
  CHECK(summary.rows[0][size_t(seedc)] ==
        std::to_string(row_seed(cfg.seed, "meap", 1)));

  // The log mentions each id and the final tally.
  const std::string text = log.str();
  for (const std::string& id : ids) {
    CHECK(text.find(id) != std::string::npos);
  }
  CHECK(text.find("4 instances, 4 emitted, 0 failures") != std::string::npos);
}

TEST_CASE("generate is byte-identical across reruns and worker counts") {
  TmpDir a("det_a"), b("det_b"), c("det_c");
  generate_small(a.str(), 1);
  generate_small(b.str(), 1);
  generate_small(c.str(), 3);
  const auto ta = tree_bytes(a.str());
  const auto tb = tree_bytes(b.str());
  const auto tc = tree_bytes(c.str());
  REQUIRE(ta.size() == 13);  // 4 instances x 3 files + summary.csv
  CHECK(ta == tb);
  CHECK(ta == tc);

  // A different master seed changes the tree.
  CampaignConfig cfg = parse_campaign_config(kSmallConfig);
  GenerateOptions opts;
  opts.attack = small_budget();
  opts.seed_override = 171717;
  TmpDir d("det_d");
  run_generate(cfg, d.str(), opts);
  CHECK(tree_bytes(d.str()) != ta);
}

TEST_CASE("eps_frac above one yields a nonrobust instance with a witness") {
  TmpDir tmp("nonrobust");
  CampaignConfig cfg = parse_campaign_config(R"({
    "seed": 5151,
    "rows": [{"family": "exact_radius",
              "params": {"dim": 2, "width": 4, "depth": 2,
                         "eps_frac": 1.2}}]
  })");
  GenerateOptions opts;
  opts.attack = small_budget();
  GenerateReport rep = run_generate(cfg, tmp.str(), opts);
  REQUIRE(rep.instances.size() == 1);
  CHECK(rep.ok());
  CHECK_FALSE(rep.instances[0].robust);
  // The reported oracle margin is the margin at the stored witness: negative.
  CHECK(rep.instances[0].oracle_margin < 0.0);

  Manifest m = read_manifest(tmp.sub("exact_radius-001.json"));
  CHECK(m.ground_truth == "nonrobust");
  CHECK_FALSE(m.cert.robust);
  const Vec* w = m.cert.vector("witness");
  REQUIRE(w != nullptr);
  Instance inst =
      instance_from(m, read_back(tmp.sub("exact_radius-001.onnx")));
  CHECK(check_certificate(inst).ok());
  // The witness misclassifies while the center does not.
  CHECK(margin(inst.net, *w, inst.label).value < 0.0);
  CHECK(margin(inst.net, inst.x0, inst.label).value > 0.0);
}

TEST_CASE("empty campaigns succeed and bad rows abort with context") {
  TmpDir tmp("edge");
  GenerateOptions opts;
  opts.attack = small_budget();

  GenerateReport rep =
      run_generate(parse_campaign_config(R"({"seed": 3})"), tmp.str(), opts);
  CHECK(rep.ok());
  CHECK(rep.instances.empty());
  CHECK(fs::exists(tmp.sub("summary.csv")));  // header-only table

  // Generator-level parameter rejections surface as config errors naming the
  // row; nothing is emitted.
  CampaignConfig bad = parse_campaign_config(R"({
    "seed": 3,
    "rows": [{"family": "meap"},
             {"family": "polynomial", "params": {"degree": -2}}]
  })");
  TmpDir tmp2("edge2");
  CHECK_THROWS_WITH_AS(run_generate(bad, tmp2.str(), opts),
                       doctest::Contains("config row 2"), ConfigError);
  CHECK_FALSE(fs::exists(tmp2.sub("meap-001.onnx")));
}

TEST_CASE("validate passes a fresh tree and pinpoints corruption") {
  TmpDir tmp("validate");
  generate_small(tmp.str());
  ValidateOptions vopts;
  vopts.attack = small_budget();

  ValidateReport clean = run_validate(tmp.str(), vopts);
  REQUIRE(clean.instances.size() == 4);
  CHECK(clean.ok());
  for (const InstanceOutcome& o : clean.instances) CHECK(o.ok());

  // Corrupt one stored weight: flip a payload byte near the end of the
  // meap network (tensor raw data lives after the graph's node section).
  const std::string onnx_path = tmp.sub("meap-001.onnx");
  std::string bytes = slurp(onnx_path);
  bytes[bytes.size() - 9] = static_cast<char>(bytes[bytes.size() - 9] ^ 0x40);
  spill(onnx_path, bytes);

  ValidateReport dirty = run_validate(tmp.str(), vopts);
  CHECK(dirty.failed == 1);
  int flagged = 0;
  for (const InstanceOutcome& o : dirty.instances) {
    if (o.id == "meap-001") {
      CHECK_FALSE(o.ok());
      ++flagged;
    } else {
      CHECK(o.ok());  // one instance's corruption never hides another's
    }
  }
  CHECK(flagged == 1);
}

TEST_CASE("validate cross-checks the manifest against the vnnlib box") {
  TmpDir tmp("validate_manifest");
  generate_small(tmp.str());
  ValidateOptions vopts;
  vopts.attack = small_budget();

  // Tamper with the manifest's eps: the certificate was proved for the old
  // box, so the recheck and the vnnlib cross-check both fire.
  const std::string mpath = tmp.sub("polynomial-001.json");
  nlohmann::json j = nlohmann::json::parse(slurp(mpath));
  const double eps = j["instance"]["eps"].get<double>();
  j["instance"]["eps"] = eps * 2.0;
  spill(mpath, j.dump(2) + "\n");

  ValidateReport rep = run_validate(tmp.str(), vopts);
  CHECK(rep.failed == 1);
  bool saw_drift = false;
  for (const InstanceOutcome& o : rep.instances) {
    if (o.id != "polynomial-001") continue;
    CHECK_FALSE(o.ok());
    for (const std::string& f : o.failures) {
      if (f.find("radius drifted") != std::string::npos) saw_drift = true;
    }
  }
  CHECK(saw_drift);

  // A deleted network file is reported, not fatal.
  fs::remove(tmp.sub("meap-001.onnx"));
  ValidateReport gone = run_validate(tmp.str(), vopts);
  CHECK(gone.failed == 2);

  // An empty directory validates trivially.
  TmpDir empty("validate_empty");
  ValidateReport none = run_validate(empty.str(), vopts);
  CHECK(none.ok());
  CHECK(none.instances.empty());
  CHECK_THROWS_AS(run_validate(empty.sub("missing"), vopts), ParseError);
}

TEST_CASE("profile writes one deterministic row per instance") {
  TmpDir tmp("profile");
  generate_small(tmp.str());
  ProfileRunOptions popts;
  popts.base.n_samples = 128;
  popts.base.seed = 777;

  const std::string csv1 = tmp.sub("prof1.csv");
  const std::string csv2 = tmp.sub("prof2.csv");
  CHECK(run_profile({tmp.str()}, csv1, popts) == 4);
  CHECK(run_profile({tmp.str()}, csv2, popts) == 4);
  CHECK(slurp(csv1) == slurp(csv2));  // deterministic re-run equality

  CsvTable t = parse_csv(slurp(csv1));
  REQUIRE(t.rows.size() == 4);
  const std::vector<std::string> want_cols = {
      "id",         "family",     "ground_truth", "label",
      "eps",        "m_min_hat",  "l_ibp",        "g_ibp",
      "u_fraction", "a_tau",      "d_eff",        "l_c",
      "unstable_units", "total_units", "grad_cells", "n_samples",
      "seed",       "tau_slope",  "tau_grid",     "eta"};
  for (const std::string& c : want_cols) CHECK(t.col(c) >= 0);
  // Rows are sorted by id regardless of directory scan order.
  std::vector<std::string> ids;
  for (const auto& r : t.rows) ids.push_back(r[size_t(t.col("id"))]);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  // Profile seeds are id-keyed: distinct per row.
  std::set<std::string> seeds;
  for (const auto& r : t.rows) seeds.insert(r[size_t(t.col("seed"))]);
  CHECK(seeds.size() == 4);
  CHECK(t.rows[0][size_t(t.col("n_samples"))] == "128");
}

TEST_CASE("profile accepts an external onnx+vnnlib pair") {
  TmpDir tmp("profile_pair");
  // Hand-build an instance with no manifest: a constant-on-box network has
  // A_tau = 0, which doubles as the analyzer-facing sanity value.
  Instance inst = generate_instance(kFamilyConstBox,
                                    {{"dim", 8}, {"latent", 4}}, 3131,
                                    "external-check");
  write_onnx(inst.net, tmp.sub("mynet.onnx"));
  PerturbationBox box{inst.x0, inst.eps};
  write_vnnlib(box, inst.label, inst.net.num_classes(), tmp.sub("mynet.vnnlib"));

  ProfileRunOptions popts;
  popts.base.n_samples = 96;
  const std::string csv = tmp.sub("prof.csv");
  CHECK(run_profile({tmp.sub("mynet.onnx"), tmp.sub("mynet.vnnlib")}, csv,
                    popts) == 1);
  CsvTable t = parse_csv(slurp(csv));
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][size_t(t.col("id"))] == "mynet");
  CHECK(t.rows[0][size_t(t.col("family"))] == "external");
  CHECK(t.rows[0][size_t(t.col("ground_truth"))] == "unknown");
  CHECK(t.rows[0][size_t(t.col("label"))] ==
        std::to_string(inst.label));
  // Constant-on-box: every sampled gradient is identical, one cell.
  CHECK(t.rows[0][size_t(t.col("a_tau"))] == "0.0");

  // Missing inputs and unpairable stems are parse errors.
  CHECK_THROWS_AS(
      run_profile({tmp.sub("nope.onnx")}, tmp.sub("x.csv"), popts),
      ParseError);
  CHECK_THROWS_AS(run_profile({tmp.sub("mynet.onnx")}, tmp.sub("x.csv"),
                              popts),
                  ParseError);
  CHECK_THROWS_AS(run_profile({}, tmp.sub("x.csv"), popts), ConfigError);
}

TEST_CASE("csv reader handles headers, widths, and crlf") {
  CsvTable t = parse_csv("a,b,c\n1,2,3\r\n4,5,6\n\n");
  CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][2] == "6");
  CHECK(t.col("b") == 1);
  CHECK(t.col("missing") == -1);
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2,3\n"),
                       doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_AS(parse_csv(""), ParseError);
  CHECK_THROWS_AS(read_csv("cli_test_no_such_file.csv"), ParseError);
}

TEST_CASE("analyze computes exact rank AUCs and writes grids") {
  TmpDir tmp("analyze");
  // Five instances; u_fraction separates timeouts perfectly, m_min_hat is
  // anti-separating, g_ibp is constant.  Hand AUCs: 1.0, 0.0, 0.5.
  spill(tmp.sub("profiles.csv"),
        "id,m_min_hat,g_ibp,u_fraction,a_tau,d_eff\n"
        "i1,0.9,2.0,0.1,0.0,1.0\n"
        "i2,0.8,2.0,0.2,0.5,2.0\n"
        "i3,0.7,2.0,0.3,1.0,3.0\n"
        "i4,0.6,2.0,0.4,1.5,4.0\n"
        "i5,0.5,2.0,0.5,2.0,5.0\n");
  spill(tmp.sub("outcomes.csv"),
        "id,verifier,outcome\n"
        "i1,v,UNSAT\n"
        "i2,v,SAT\n"
        "i3,v,UNSAT\n"
        "i4,v,TIMEOUT\n"
        "i5,v,TIMEOUT\n");
  AnalyzeOptions aopts;
  aopts.bins = 2;
  AnalyzeResult res = run_analyze(tmp.sub("outcomes.csv"),
                                  tmp.sub("profiles.csv"), tmp.str(), aopts);
  CHECK(res.observations == 5);
  REQUIRE(res.rows.size() == 5);  // one verifier, five components
  std::map<std::string, double> auc;
  for (const AucRow& r : res.rows) {
    CHECK(r.verifier == "v");
    CHECK(r.auc.defined);
    CHECK(r.timeouts == 2);
    CHECK(r.solved == 3);
    auc[r.component] = r.auc.value;
  }
  CHECK(auc.at("u_fraction") == 1.0);
  CHECK(auc.at("m_min_hat") == 0.0);
  CHECK(auc.at("g_ibp") == 0.5);
  CHECK(auc.at("d_eff") == 1.0);

  // The written auc.csv agrees with the returned rows.
  CsvTable t = parse_csv(slurp(tmp.sub("auc.csv")));
  REQUIRE(t.rows.size() == 5);
  for (const auto& row : t.rows) {
    CHECK(auc.at(row[size_t(t.col("component"))]) ==
          std::strtod(row[size_t(t.col("auc"))].c_str(), nullptr));
    CHECK(row[size_t(t.col("defined"))] == "true");
  }
  CHECK(fs::exists(tmp.sub("auc.txt")));

  // Default grid pair u_fraction x d_eff with 2 bins: timeouts live in the
  // high-u, high-d_eff corner.
  CsvTable g = parse_csv(slurp(tmp.sub("grid_u_fraction_vs_d_eff.csv")));
  REQUIRE(g.rows.size() == 4);
  int total = 0, timeouts = 0;
  for (const auto& row : g.rows) {
    total += std::atoi(row[size_t(g.col("count"))].c_str());
    timeouts += std::atoi(row[size_t(g.col("timeouts"))].c_str());
  }
  CHECK(total == 5);
  CHECK(timeouts == 2);
  // Last csv row is the (high x, high y) cell: u in (0.3, 0.5], both
  // timeouts plus the solved i3 boundary... i3 u=0.3 falls in the low bin,
  // so the cell holds i4, i5 only -> rate 1.
  const auto& hi = g.rows[3];
  CHECK(hi[size_t(g.col("count"))] == "2");
  CHECK(hi[size_t(g.col("timeouts"))] == "2");
  CHECK(hi[size_t(g.col("rate"))] == "1.0");
  CHECK(fs::exists(tmp.sub("grid_u_fraction_vs_d_eff.txt")));
}

TEST_CASE("analyze pools verifiers, drops errors, flags unknowns") {
  TmpDir tmp("analyze_pool");
  spill(tmp.sub("profiles.csv"),
        "id,m_min_hat,g_ibp,u_fraction,a_tau,d_eff\n"
        "i1,0.9,2.0,0.1,0.0,1.0\n"
        "i2,0.8,2.0,0.2,0.5,2.0\n");
  spill(tmp.sub("outcomes.csv"),
        "id,verifier,outcome\n"
        "i1,v1,TIMEOUT\n"
        "i2,v1,UNSAT\n"
        "i1,v2,ERROR\n"
        "i2,v2,timeout\n");  // case-insensitive outcomes
  AnalyzeResult res = run_analyze(tmp.sub("outcomes.csv"),
                                  tmp.sub("profiles.csv"), tmp.str(), {});
  CHECK(res.observations == 3);  // the ERROR row is excluded
  // v1, v2, and the pooled "all" row set.
  std::set<std::string> verifiers;
  for (const AucRow& r : res.rows) verifiers.insert(r.verifier);
  CHECK(verifiers == std::set<std::string>{"v1", "v2", "all"});
  for (const AucRow& r : res.rows) {
    if (r.verifier == "v2") {
      // Single class (only a timeout): AUC undefined.
      CHECK_FALSE(r.auc.defined);
      CHECK(r.auc.value == 0.5);
    }
    if (r.verifier == "all" && r.component == "u_fraction") {
      // Timeouts u = {0.1, 0.2}, solved u = {0.2}: one loss, one tie.
      CHECK(r.auc.value == doctest::Approx(0.25).epsilon(1e-12));
    }
  }

  // Unknown outcome tokens and missing ids are parse errors.
  spill(tmp.sub("bad.csv"), "id,outcome\ni1,MAYBE\n");
  CHECK_THROWS_WITH_AS(run_analyze(tmp.sub("bad.csv"), tmp.sub("profiles.csv"),
                                   tmp.str(), {}),
                       doctest::Contains("unknown outcome"), ParseError);
  spill(tmp.sub("orphan.csv"), "id,outcome\nmystery,UNSAT\n");
  CHECK_THROWS_WITH_AS(run_analyze(tmp.sub("orphan.csv"),
                                   tmp.sub("profiles.csv"), tmp.str(), {}),
                       doctest::Contains("no profile row"), ParseError);
  // Grid pairs must name existing columns.
  AnalyzeOptions bad_pair;
  bad_pair.pairs = {{"u_fraction", "nonsense"}};
  CHECK_THROWS_AS(run_analyze(tmp.sub("outcomes.csv"), tmp.sub("profiles.csv"),
                              tmp.str(), bad_pair),
                  ParseError);
}

TEST_CASE("command line binary maps outcomes to exit codes") {
  // Exercises the installed binary when the test runs from the build tree;
  // exit codes: 0 ok, 1 gate/validation failure, 2 usage error.
  if (!fs::exists("certbench")) {
    MESSAGE("certbench binary not next to the test runner; skipping");
    return;
  }
  TmpDir tmp("exit_codes");
  spill(tmp.sub("cfg.json"), R"({
    "seed": 11,
    "rows": [{"family": "exact_radius",
              "params": {"dim": 2, "width": 3, "depth": 1,
                         "eps_frac": 0.9, "retries": 60}}]
  })");
  auto run = [](const std::string& cmd) {
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
  };
  const std::string base = "./certbench";
  CHECK(run(base + " generate --config " + tmp.sub("cfg.json") + " --out " +
            tmp.sub("out") + " > /dev/null 2>&1") == 0);
  CHECK(run(base + " validate --in " + tmp.sub("out") +
            " --budget samples=200,restarts=4 > /dev/null 2>&1") == 0);
  CHECK(run(base + " profile --in " + tmp.sub("out") + " --out " +
            tmp.sub("p.csv") + " --samples 64 > /dev/null 2>&1") == 0);
  // Usage errors: unknown flag, missing required option, bad config.
  CHECK(run(base + " generate --nope > /dev/null 2>&1") == 2);
  CHECK(run(base + " generate --config " + tmp.sub("missing.json") +
            " --out " + tmp.sub("x") + " > /dev/null 2>&1") == 2);
  spill(tmp.sub("bad.json"), R"({"rows": []})");
  CHECK(run(base + " generate --config " + tmp.sub("bad.json") + " --out " +
            tmp.sub("x") + " > /dev/null 2>&1") == 2);
  // Validation failure after corrupting a weight byte: exit 1.
  {
    std::string bytes = slurp(tmp.sub("out/exact_radius-001.onnx"));
    bytes[bytes.size() - 9] =
        static_cast<char>(bytes[bytes.size() - 9] ^ 0x40);
    spill(tmp.sub("out/exact_radius-001.onnx"), bytes);
  }
  CHECK(run(base + " validate --in " + tmp.sub("out") +
            " --budget samples=200,restarts=4 > /dev/null 2>&1") == 1);
  // Help exits 0.
  CHECK(run(base + " --help > /dev/null 2>&1") == 0);
}

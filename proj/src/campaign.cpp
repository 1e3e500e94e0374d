#include "certbench/campaign.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "certbench/errors.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace certbench {
namespace {

// Shortest decimal that round-trips; keeps CSV and summary output stable
// across reruns without dragging 17-digit noise through every cell.
std::string num_str(double v) { return json(v).dump(); }

std::string slurp(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(std::string("cannot open ") + what + ": " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ResourceError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw ResourceError("write failed: " + path);
}

std::string row_prefix(int row_index) {
  return "config row " + std::to_string(row_index + 1) + ": ";
}

const std::map<std::string, std::vector<std::string>>& param_name_table() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {kFamilyMeap,
       {"dim", "eps", "gamma", "gamma_spread", "instability_ratio", "pairs"}},
      {kFamilyExactRadius,
       {"classes", "depth", "dim", "dom_radius", "eps_frac", "node_budget",
        "retries", "width"}},
      {kFamilyConstBox,
       {"classes", "dim", "eps", "gamma", "latent", "psi_depth", "psi_width",
        "slack"}},
      {kFamilyCorner,
       {"active_dim", "classes", "dim", "eps", "gamma_frac", "hinge_scale",
        "hinges", "robust"}},
      {kFamilyContractive,
       {"blocks", "channels", "classes", "eps", "lambda", "margin_slack",
        "spatial", "uncentered"}},
      {kFamilyPairedBias,
       {"delta_frac", "eps", "gamma", "pairs", "spatial",
        "upstream_channels"}},
      {kFamilySoftmaxOrder,
       {"classes", "eps", "margin_slack", "retries", "score_scale",
        "token_dim", "tokens", "value_dim"}},
      {kFamilyDominantKey,
       {"classes", "eps", "gate_scale", "margin_factor", "noise_scale",
        "retries", "token_dim", "tokens", "value_dim", "zeta"}},
      {kFamilyPolynomial,
       {"degree", "delta", "dim", "hidden", "r", "retries"}},
  };
  return table;
}

// One fully expanded generation job.
struct Planned {
  int row = 0;      // 0-based config row, for error messages
  int ordinal = 0;  // 1-based within the family
  std::uint64_t seed = 0;
  std::string id;
  const CampaignRow* src = nullptr;
};

std::vector<Planned> expand_plan(const CampaignConfig& cfg,
                                 std::uint64_t master) {
  std::vector<Planned> plan;
  std::map<std::string, int> ordinals;
  for (size_t r = 0; r < cfg.rows.size(); ++r) {
    const CampaignRow& row = cfg.rows[r];
    for (int c = 0; c < row.count; ++c) {
      Planned p;
      p.row = static_cast<int>(r);
      p.ordinal = ++ordinals[row.family];
      p.seed = row_seed(master, row.family, p.ordinal);
      p.id = instance_id(row.family, p.ordinal);
      p.src = &row;
      plan.push_back(std::move(p));
    }
  }
  return plan;
}

// Maximum coordinate scale of a box; drift tolerances for re-parsed VNNLIB
// bounds are relative to it because the printed bounds carry 12+ significant
// digits of their own magnitude, not of eps.
double box_scale(const Vec& x0, double eps) {
  double s = 1.0;
  for (double v : x0) s = std::max(s, std::abs(v) + eps);
  return s;
}

void log_line(std::ostream* log, const std::string& line) {
  if (log != nullptr) *log << line << "\n";
}

std::string outcome_line(const InstanceOutcome& o) {
  std::ostringstream ss;
  ss << "  " << std::left << std::setw(22) << o.id << std::setw(18) << o.family
     << std::setw(11) << (o.robust ? "robust" : "nonrobust") << "eps="
     << std::setw(12) << num_str(o.eps) << " oracle_margin=" << std::setw(14)
     << num_str(o.oracle_margin) << (o.ok() ? " ok" : " FAIL");
  std::string line = ss.str();
  for (const std::string& f : o.failures) line += "\n      - " + f;
  return line;
}

// Attack seeds are derived, never taken from options, so identical trees
// come out of identical configs regardless of --jobs or call sites.
constexpr std::uint64_t kGateSalt = 0x67617465u;      // "gate"
constexpr std::uint64_t kValidateSalt = 0x76616c64u;  // "vald"

AttackResult run_gate_attack(const Instance& inst, AttackOptions a,
                             std::uint64_t salt) {
  a.seed = mix_seed(hash_str(inst.id.c_str()), salt);
  PerturbationBox box{inst.x0, inst.eps};
  return attack_search(inst.net, box, inst.label, a);
}

// Shared post-generation / post-load vetting: certificate recheck plus the
// attack oracle.  Robust labels must survive the attack; nonrobust labels
// report the margin at their stored witness (check_common already enforces
// that it flips the label).
InstanceOutcome vet_instance(const Instance& inst, const AttackOptions& budget,
                             std::uint64_t salt) {
  InstanceOutcome o;
  o.id = inst.id;
  o.family = inst.cert.family;
  o.robust = inst.cert.robust;
  o.eps = inst.eps;
  CheckReport rep = check_certificate(inst);
  for (const std::string& f : rep.failures) o.failures.push_back("certificate: " + f);
  if (inst.cert.robust) {
    AttackResult res = run_gate_attack(inst, budget, salt);
    o.oracle_margin = res.best_margin;
    if (res.success) {
      o.failures.push_back("attack oracle found margin " +
                           num_str(res.best_margin) + " <= 0 inside the box");
    }
  } else {
    const Vec* w = inst.cert.vector("witness");
    o.oracle_margin = (w != nullptr && w->size() == inst.x0.size())
                          ? margin(inst.net, *w, inst.label).value
                          : std::numeric_limits<double>::quiet_NaN();
  }
  return o;
}

std::vector<fs::path> manifest_paths(const std::string& dir) {
  fs::path root(dir);
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw ParseError("not a directory: " + dir);
  }
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// A loaded-from-disk instance plus the manifest fields the CSV keeps.
struct LoadedInstance {
  std::string id;
  std::string family;
  std::string ground_truth;
  Instance inst;
};

LoadedInstance load_from_manifest(const fs::path& manifest_path) {
  Manifest m = read_manifest(manifest_path.string());
  fs::path dir = manifest_path.parent_path();
  Network net = read_back((dir / m.onnx_file).string());
  LoadedInstance li;
  li.id = m.id;
  li.family = m.family;
  li.ground_truth = m.ground_truth;
  li.inst = instance_from(m, std::move(net));
  return li;
}

LoadedInstance load_from_pair(const fs::path& onnx_path,
                              const fs::path& vnnlib_path) {
  Network net = read_back(onnx_path.string());
  VnnlibSpec spec = read_vnnlib(vnnlib_path.string());
  if (spec.classes != net.num_classes()) {
    throw ParseError("vnnlib declares " + std::to_string(spec.classes) +
                     " outputs but the network has " +
                     std::to_string(net.num_classes()) + ": " +
                     vnnlib_path.string());
  }
  if (static_cast<int>(spec.lo.size()) != net.input_dim()) {
    throw ParseError("vnnlib declares " + std::to_string(spec.lo.size()) +
                     " inputs but the network has " +
                     std::to_string(net.input_dim()) + ": " +
                     vnnlib_path.string());
  }
  PerturbationBox box = spec.box();
  LoadedInstance li;
  li.id = onnx_path.stem().string();
  li.family = "external";
  li.ground_truth = "unknown";
  li.inst.id = li.id;
  li.inst.net = std::move(net);
  li.inst.x0 = box.x0;
  li.inst.eps = box.eps;
  li.inst.label = spec.label;
  li.inst.cert.family = "external";
  li.inst.cert.robust = true;  // unknown; nothing downstream relies on it
  return li;
}

const std::vector<std::string>& auc_components() {
  static const std::vector<std::string> comps = {"m_min_hat", "g_ibp",
                                                 "u_fraction", "a_tau",
                                                 "d_eff"};
  return comps;
}

// One joined (instance, verifier) observation for the analyzer.
struct Observation {
  std::string verifier;
  int is_timeout = 0;
  std::vector<double> comp;  // auc_components() order
  double grid_x = 0.0, grid_y = 0.0;  // filled per grid pair
  int profile_row = 0;
};

double parse_num_field(const std::string& s, const std::string& what,
                       size_t line) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("csv line " + std::to_string(line) + ": " + what +
                     " is not a number: '" + s + "'");
  }
}

std::string upper_copy(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

// ---- configuration ---------------------------------------------------------------

const std::vector<std::string>& family_param_names(const std::string& family) {
  const auto& table = param_name_table();
  auto it = table.find(family);
  if (it == table.end()) {
    std::string known;
    for (const auto& kv : table) {
      if (!known.empty()) known += ", ";
      known += kv.first;
    }
    throw ConfigError("unknown constructor family '" + family +
                      "' (known: " + known + ")");
  }
  return it->second;
}

std::uint64_t row_seed(std::uint64_t master, const std::string& family,
                       int ordinal) {
  return mix_seed(master, hash_str(family.c_str()),
                  static_cast<std::uint64_t>(ordinal));
}

std::string instance_id(const std::string& family, int ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d", ordinal);
  return family + "-" + buf;
}

CampaignConfig parse_campaign_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("campaign config parse error at byte " +
                     std::to_string(e.byte) + ": " + e.what());
  } catch (const json::exception& e) {
    // e.g. numeric overflow: a value problem, not a framing problem
    throw ConfigError(std::string("campaign config: ") + e.what());
  }
  if (!j.is_object()) {
    throw ConfigError("campaign config: top level must be an object");
  }
  static const std::set<std::string> top_keys = {"schema", "seed", "rows",
                                                 "notes"};
  for (const auto& item : j.items()) {
    if (top_keys.count(item.key()) == 0) {
      throw ConfigError("campaign config: unknown key '" + item.key() + "'");
    }
  }
  if (j.contains("schema") &&
      (!j["schema"].is_string() ||
       j["schema"].get<std::string>() != "certbench-campaign-v1")) {
    throw ConfigError(
        "campaign config: schema must be \"certbench-campaign-v1\"");
  }
  if (!j.contains("seed")) {
    throw ConfigError("campaign config: master seed is mandatory");
  }
  const json& js = j["seed"];
  if (!js.is_number_integer() && !js.is_number_unsigned()) {
    throw ConfigError("campaign config: seed must be an unsigned integer");
  }
  if (js.is_number_integer() && !js.is_number_unsigned() &&
      js.get<std::int64_t>() < 0) {
    throw ConfigError("campaign config: seed must be an unsigned integer");
  }
  CampaignConfig cfg;
  cfg.seed = js.get<std::uint64_t>();
  if (j.contains("notes")) {
    const json& notes = j["notes"];
    if (!notes.is_array()) {
      throw ConfigError("campaign config: notes must be a list of strings");
    }
    for (const json& n : notes) {
      if (!n.is_string()) {
        throw ConfigError("campaign config: notes must be a list of strings");
      }
    }
  }
  if (!j.contains("rows")) return cfg;
  const json& rows = j["rows"];
  if (!rows.is_array()) {
    throw ConfigError("campaign config: rows must be a list");
  }
  static const std::set<std::string> row_keys = {"family", "params", "count",
                                                 "note"};
  for (size_t r = 0; r < rows.size(); ++r) {
    const std::string pre = row_prefix(static_cast<int>(r));
    const json& jr = rows[r];
    if (!jr.is_object()) throw ConfigError(pre + "row must be an object");
    for (const auto& item : jr.items()) {
      if (row_keys.count(item.key()) == 0) {
        throw ConfigError(pre + "unknown key '" + item.key() + "'");
      }
    }
    CampaignRow row;
    if (!jr.contains("family") || !jr["family"].is_string()) {
      throw ConfigError(pre + "family (a string) is mandatory");
    }
    row.family = jr["family"].get<std::string>();
    const std::vector<std::string>* names = nullptr;
    try {
      names = &family_param_names(row.family);
    } catch (const ConfigError& e) {
      throw ConfigError(pre + e.what());
    }
    if (jr.contains("count")) {
      const json& jc = jr["count"];
      if (!jc.is_number_integer() && !jc.is_number_unsigned()) {
        throw ConfigError(pre + "count must be an integer");
      }
      const std::int64_t c = jc.get<std::int64_t>();
      if (c < 1 || c > 100000) {
        throw ConfigError(pre + "count must be between 1 and 100000");
      }
      row.count = static_cast<int>(c);
    }
    if (jr.contains("note")) {
      if (!jr["note"].is_string()) {
        throw ConfigError(pre + "note must be a string");
      }
      row.note = jr["note"].get<std::string>();
    }
    if (jr.contains("params")) {
      const json& jp = jr["params"];
      if (!jp.is_object()) {
        throw ConfigError(pre + "params must be an object");
      }
      for (const auto& item : jp.items()) {
        const std::string& key = item.key();
        if (!std::binary_search(names->begin(), names->end(), key)) {
          throw ConfigError(pre + "unknown parameter '" + key +
                            "' for family '" + row.family + "'");
        }
        const json& v = item.value();
        double d = 0.0;
        if (v.is_boolean()) {
          d = v.get<bool>() ? 1.0 : 0.0;
        } else if (v.is_number()) {
          d = v.get<double>();
        } else {
          throw ConfigError(pre + "parameter '" + key +
                            "' must be a number or boolean");
        }
        if (!std::isfinite(d)) {
          throw ConfigError(pre + "parameter '" + key +
                            "' must be finite");
        }
        row.params[key] = d;
      }
    }
    cfg.rows.push_back(std::move(row));
  }
  return cfg;
}

CampaignConfig read_campaign_config(const std::string& path) {
  return parse_campaign_config(slurp(path, "campaign config"));
}

AttackOptions parse_attack_budget(const std::string& spec,
                                  const AttackOptions& base) {
  AttackOptions out = base;
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    const std::string part = spec.substr(pos, comma - pos);
    pos = comma + 1;
    if (part.empty()) continue;
    const size_t eq = part.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("budget: expected key=value, got '" + part + "'");
    }
    const std::string key = part.substr(0, eq);
    const std::string val = part.substr(eq + 1);
    double num = 0.0;
    try {
      size_t used = 0;
      num = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("budget: value of '" + key + "' is not a number: '" +
                        val + "'");
    }
    if (key == "samples") {
      out.random_samples = static_cast<int>(num);
      if (out.random_samples < 0 || num != std::floor(num)) {
        throw ConfigError("budget: samples must be a nonnegative integer");
      }
    } else if (key == "restarts") {
      out.restarts = static_cast<int>(num);
      if (out.restarts < 0 || num != std::floor(num)) {
        throw ConfigError("budget: restarts must be a nonnegative integer");
      }
    } else if (key == "steps") {
      out.steps = static_cast<int>(num);
      if (out.steps < 1 || num != std::floor(num)) {
        throw ConfigError("budget: steps must be a positive integer");
      }
    } else if (key == "step_frac") {
      out.step_frac = num;
      if (!(num > 0.0) || !std::isfinite(num)) {
        throw ConfigError("budget: step_frac must be positive");
      }
    } else {
      throw ConfigError("budget: unknown key '" + key +
                        "' (known: samples, restarts, steps, step_frac)");
    }
  }
  return out;
}

// ---- generate --------------------------------------------------------------------

GenerateReport run_generate(const CampaignConfig& cfg,
                            const std::string& out_dir,
                            const GenerateOptions& opts) {
  const std::uint64_t master =
      opts.seed_override.has_value() ? *opts.seed_override : cfg.seed;
  const std::vector<Planned> plan = expand_plan(cfg, master);

  struct Slot {
    InstanceOutcome out;
    std::string onnx, vnnlib, manifest;
    bool emit = false;
    std::string config_error;  // aborts the campaign when non-empty
  };
  std::vector<Slot> slots(plan.size());

  auto work = [&](size_t i) {
    const Planned& p = plan[i];
    Slot& slot = slots[i];
    slot.out.id = p.id;
    slot.out.family = p.src->family;
    try {
      Instance inst =
          generate_instance(p.src->family, p.src->params, p.seed, p.id);
      slot.out = vet_instance(inst, opts.attack, kGateSalt);
      if (slot.out.ok()) {
        OnnxOptions oo;
        oo.downcast_f32 = opts.downcast_f32;
        slot.onnx = onnx_bytes(inst.net, oo);
        PerturbationBox box{inst.x0, inst.eps};
        slot.vnnlib = vnnlib_text(box, inst.label, inst.net.num_classes());
        Manifest m = make_manifest(inst, p.src->params, p.seed,
                                   p.id + ".onnx", p.id + ".vnnlib", nullptr,
                                   opts.downcast_f32);
        slot.manifest = manifest_json(m);
        slot.emit = true;
      }
    } catch (const ConfigError& e) {
      slot.config_error =
          row_prefix(p.row) + "(" + p.src->family + ") " + e.what();
      slot.out.failures.push_back(std::string("config: ") + e.what());
    } catch (const std::exception& e) {
      slot.out.failures.push_back(std::string("generation failed: ") +
                                  e.what());
    }
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1 || plan.size() < 2) {
    for (size_t i = 0; i < plan.size(); ++i) work(i);
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (long long i = 0; i < static_cast<long long>(plan.size()); ++i) {
      work(static_cast<size_t>(i));
    }
#else
    for (size_t i = 0; i < plan.size(); ++i) work(i);
#endif
  }

  for (const Slot& slot : slots) {
    if (!slot.config_error.empty()) throw ConfigError(slot.config_error);
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw ResourceError("cannot create output directory: " + out_dir + ": " +
                        ec.message());
  }

  GenerateReport report;
  std::string summary =
      "id,family,ground_truth,eps,seed,oracle_margin,status\n";
  for (size_t i = 0; i < plan.size(); ++i) {
    const Planned& p = plan[i];
    Slot& slot = slots[i];
    if (slot.emit) {
      const fs::path dir(out_dir);
      spill((dir / (p.id + ".onnx")).string(), slot.onnx);
      spill((dir / (p.id + ".vnnlib")).string(), slot.vnnlib);
      spill((dir / (p.id + ".json")).string(), slot.manifest);
    }
    summary += p.id + "," + p.src->family + "," +
               (slot.out.robust ? "robust" : "nonrobust") + "," +
               num_str(slot.out.eps) + "," + std::to_string(p.seed) + "," +
               num_str(slot.out.oracle_margin) + "," +
               (slot.out.ok() ? "ok" : "fail") + "\n";
    log_line(opts.log, outcome_line(slot.out));
    if (!slot.out.ok()) ++report.failed;
    report.instances.push_back(std::move(slot.out));
  }
  spill((fs::path(out_dir) / "summary.csv").string(), summary);
  log_line(opts.log, std::to_string(plan.size()) + " instances, " +
                         std::to_string(plan.size() - report.failed) +
                         " emitted, " + std::to_string(report.failed) +
                         " failures");
  return report;
}

// ---- validate --------------------------------------------------------------------

ValidateReport run_validate(const std::string& in_dir,
                            const ValidateOptions& opts) {
  const std::vector<fs::path> manifests = manifest_paths(in_dir);
  ValidateReport report;
  if (manifests.empty()) {
    log_line(opts.log, "no manifests found in " + in_dir);
    return report;
  }
  for (const fs::path& mp : manifests) {
    InstanceOutcome out;
    out.id = mp.stem().string();
    try {
      Manifest m = read_manifest(mp.string());
      const fs::path dir = mp.parent_path();
      Network net = read_back((dir / m.onnx_file).string());
      VnnlibSpec spec = read_vnnlib((dir / m.vnnlib_file).string());
      Instance inst = instance_from(m, std::move(net));

      out.id = m.id;
      out.family = m.family;
      std::vector<std::string> pre;
      if ((m.ground_truth == "robust") != m.cert.robust) {
        pre.push_back("manifest ground_truth disagrees with its certificate");
      }
      if (spec.classes != inst.net.num_classes()) {
        pre.push_back("vnnlib output count disagrees with the network");
      }
      if (spec.label != m.label) {
        pre.push_back("vnnlib label disagrees with the manifest");
      }
      if (spec.lo.size() != m.x0.size()) {
        pre.push_back("vnnlib input count disagrees with the manifest");
      } else {
        const PerturbationBox rec = spec.box();
        const double tol = 1e-9 * box_scale(m.x0, m.eps);
        double center_drift = 0.0;
        for (size_t i = 0; i < m.x0.size(); ++i) {
          center_drift =
              std::max(center_drift, std::abs(rec.x0[i] - m.x0[i]));
        }
        if (center_drift > tol) {
          pre.push_back("vnnlib box center drifted from the manifest by " +
                        num_str(center_drift));
        }
        if (std::abs(rec.eps - m.eps) > tol) {
          pre.push_back("vnnlib box radius drifted from the manifest by " +
                        num_str(std::abs(rec.eps - m.eps)));
        }
      }
      out = vet_instance(inst, opts.attack, kValidateSalt);
      out.failures.insert(out.failures.begin(), pre.begin(), pre.end());
    } catch (const std::exception& e) {
      out.failures.push_back(std::string("load failed: ") + e.what());
    }
    log_line(opts.log, outcome_line(out));
    if (!out.ok()) ++report.failed;
    report.instances.push_back(std::move(out));
  }
  log_line(opts.log,
           std::to_string(report.instances.size()) + " instances checked, " +
               std::to_string(report.failed) + " with violations");
  return report;
}

// ---- profile ---------------------------------------------------------------------

int run_profile(const std::vector<std::string>& inputs,
                const std::string& out_csv, const ProfileRunOptions& opts) {
  if (inputs.empty()) throw ConfigError("profile: no inputs given");

  std::vector<LoadedInstance> items;
  std::error_code ec;
  if (inputs.size() == 1 && fs::is_directory(inputs[0], ec)) {
    for (const fs::path& mp : manifest_paths(inputs[0])) {
      items.push_back(load_from_manifest(mp));
    }
  } else {
    // Explicit files: manifests load directly; bare networks pair with the
    // specification that shares their stem.
    std::map<std::string, std::pair<fs::path, fs::path>> pairs;
    for (const std::string& raw : inputs) {
      fs::path p(raw);
      if (!fs::is_regular_file(p, ec)) {
        throw ParseError("cannot open input: " + raw);
      }
      const std::string ext = p.extension().string();
      if (ext == ".json") {
        items.push_back(load_from_manifest(p));
      } else if (ext == ".onnx") {
        pairs[(p.parent_path() / p.stem()).string()].first = p;
      } else if (ext == ".vnnlib") {
        pairs[(p.parent_path() / p.stem()).string()].second = p;
      } else {
        throw ParseError("unsupported input (expected .json, .onnx or "
                         ".vnnlib): " + raw);
      }
    }
    for (const auto& kv : pairs) {
      if (kv.second.first.empty() || kv.second.second.empty()) {
        throw ParseError("input '" + kv.first +
                         "' needs both an .onnx and a .vnnlib file");
      }
      items.push_back(load_from_pair(kv.second.first, kv.second.second));
    }
  }

  std::sort(items.begin(), items.end(),
            [](const LoadedInstance& a, const LoadedInstance& b) {
              return a.id < b.id;
            });
  for (size_t i = 1; i < items.size(); ++i) {
    if (items[i].id == items[i - 1].id) {
      throw ParseError("duplicate instance id: " + items[i].id);
    }
  }

  std::string csv =
      "id,family,ground_truth,label,eps,m_min_hat,l_ibp,g_ibp,u_fraction,"
      "a_tau,d_eff,l_c,unstable_units,total_units,grad_cells,n_samples,seed,"
      "tau_slope,tau_grid,eta\n";
  for (const LoadedInstance& li : items) {
    ProfileConfig cfg = opts.base;
    cfg.seed = mix_seed(opts.base.seed, hash_str(li.id.c_str()));
    const DifficultyProfile prof = profile(li.inst, cfg);
    csv += li.id + "," + li.family + "," + li.ground_truth + "," +
           std::to_string(li.inst.label) + "," + num_str(li.inst.eps) + "," +
           num_str(prof.m_min_hat) + "," + num_str(prof.l_ibp) + "," +
           num_str(prof.g_ibp) + "," + num_str(prof.u_fraction) + "," +
           num_str(prof.a_tau) + "," + num_str(prof.d_eff) + "," +
           num_str(prof.l_c) + "," + std::to_string(prof.unstable_units) +
           "," + std::to_string(prof.total_units) + "," +
           std::to_string(prof.grad_cells) + "," +
           std::to_string(prof.n_samples) + "," + std::to_string(prof.seed) +
           "," + num_str(prof.tau_slope) + "," + num_str(prof.tau_grid) +
           "," + num_str(prof.eta) + "\n";
    log_line(opts.log, "  profiled " + li.id);
  }
  spill(out_csv, csv);
  log_line(opts.log, std::to_string(items.size()) + " profiles written to " +
                         out_csv);
  return static_cast<int>(items.size());
}

// ---- analyze ---------------------------------------------------------------------

int CsvTable::col(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    std::vector<std::string> fields;
    size_t f = 0;
    while (true) {
      size_t comma = line.find(',', f);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(f));
        break;
      }
      fields.push_back(line.substr(f, comma - f));
      f = comma + 1;
    }
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else if (fields.size() != t.header.size()) {
      throw ParseError("csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(t.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    } else {
      t.rows.push_back(std::move(fields));
    }
    if (pos > text.size()) break;
  }
  if (t.header.empty()) throw ParseError("csv file has no header row");
  return t;
}

CsvTable read_csv(const std::string& path) {
  return parse_csv(slurp(path, "csv file"));
}

namespace {

int require_col(const CsvTable& t, const std::string& name,
                const std::string& what) {
  const int c = t.col(name);
  if (c < 0) {
    throw ParseError(what + " is missing the '" + name + "' column");
  }
  return c;
}

struct Grid {
  std::string cx, cy;
  int bins = 0;
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  std::vector<int> count, timeouts;  // bins x bins, row-major in y

  int& at(std::vector<int>& v, int ix, int iy) { return v[static_cast<size_t>(iy * bins + ix)]; }
};

int bin_index(double v, double lo, double hi, int bins) {
  if (!(hi > lo)) return 0;
  const double w = (hi - lo) / bins;
  int i = static_cast<int>(std::floor((v - lo) / w));
  return std::min(std::max(i, 0), bins - 1);
}

}  // namespace

AnalyzeResult run_analyze(const std::string& outcomes_csv,
                          const std::string& profiles_csv,
                          const std::string& out_dir,
                          const AnalyzeOptions& opts) {
  if (opts.bins < 1 || opts.bins > 64) {
    throw ConfigError("analyze: bins must be between 1 and 64");
  }
  const CsvTable outcomes = read_csv(outcomes_csv);
  const CsvTable profiles = read_csv(profiles_csv);
  const int oc_id = require_col(outcomes, "id", "outcomes csv");
  const int oc_out = require_col(outcomes, "outcome", "outcomes csv");
  const int oc_ver = outcomes.col("verifier");
  const int pc_id = require_col(profiles, "id", "profiles csv");
  std::vector<int> comp_cols;
  for (const std::string& c : auc_components()) {
    comp_cols.push_back(require_col(profiles, c, "profiles csv"));
  }

  std::map<std::string, size_t> profile_of;
  for (size_t r = 0; r < profiles.rows.size(); ++r) {
    const std::string& id = profiles.rows[r][static_cast<size_t>(pc_id)];
    if (!profile_of.emplace(id, r).second) {
      throw ParseError("profiles csv: duplicate id '" + id + "'");
    }
  }

  std::vector<Observation> obs;
  for (size_t r = 0; r < outcomes.rows.size(); ++r) {
    const auto& row = outcomes.rows[r];
    const std::string raw = upper_copy(row[static_cast<size_t>(oc_out)]);
    if (raw == "ERROR") continue;  // excluded from rate and rank statistics
    int flag = 0;
    if (raw == "TIMEOUT") {
      flag = 1;
    } else if (raw != "UNSAT" && raw != "SAT") {
      throw ParseError("outcomes csv line " + std::to_string(r + 2) +
                       ": unknown outcome '" +
                       row[static_cast<size_t>(oc_out)] +
                       "' (expected UNSAT, SAT, TIMEOUT or ERROR)");
    }
    const std::string& id = row[static_cast<size_t>(oc_id)];
    auto it = profile_of.find(id);
    if (it == profile_of.end()) {
      throw ParseError("outcomes csv line " + std::to_string(r + 2) +
                       ": no profile row for id '" + id + "'");
    }
    Observation o;
    o.verifier = (oc_ver >= 0 && !row[static_cast<size_t>(oc_ver)].empty())
                     ? row[static_cast<size_t>(oc_ver)]
                     : "all";
    o.is_timeout = flag;
    o.profile_row = static_cast<int>(it->second);
    for (size_t c = 0; c < comp_cols.size(); ++c) {
      o.comp.push_back(parse_num_field(
          profiles.rows[it->second][static_cast<size_t>(comp_cols[c])],
          auc_components()[c], it->second + 2));
    }
    obs.push_back(std::move(o));
  }

  std::set<std::string> verifier_set;
  for (const Observation& o : obs) verifier_set.insert(o.verifier);
  std::vector<std::string> verifiers(verifier_set.begin(), verifier_set.end());
  if (verifiers.size() > 1 && verifier_set.count("all") == 0) {
    verifiers.push_back("all");
  }

  AnalyzeResult result;
  result.observations = static_cast<int>(obs.size());
  std::string auc_csv = "verifier,component,auc,defined,timeouts,solved\n";
  std::ostringstream auc_txt;
  auc_txt << "timeout AUC per difficulty-profile component\n"
          << "(P[component of a timed-out instance > component of a solved "
             "one], ties half)\n\n"
          << std::left << std::setw(14) << "verifier" << std::setw(12)
          << "component" << std::setw(22) << "auc" << std::setw(10)
          << "timeouts" << std::setw(8) << "solved" << "\n";
  for (const std::string& v : verifiers) {
    const bool pooled = (v == "all" && verifier_set.count("all") == 0);
    for (size_t c = 0; c < auc_components().size(); ++c) {
      std::vector<double> values;
      std::vector<int> flags;
      for (const Observation& o : obs) {
        if (!pooled && o.verifier != v) continue;
        values.push_back(o.comp[c]);
        flags.push_back(o.is_timeout);
      }
      AucRow row;
      row.verifier = v;
      row.component = auc_components()[c];
      row.auc = timeout_auc(values, flags);
      for (int f : flags) (f != 0 ? row.timeouts : row.solved) += 1;
      auc_csv += v + "," + row.component + "," + num_str(row.auc.value) +
                 "," + (row.auc.defined ? "true" : "false") + "," +
                 std::to_string(row.timeouts) + "," +
                 std::to_string(row.solved) + "\n";
      auc_txt << std::left << std::setw(14) << v << std::setw(12)
              << row.component << std::setw(22)
              << (row.auc.defined ? num_str(row.auc.value) : "undefined")
              << std::setw(10) << row.timeouts << std::setw(8) << row.solved
              << "\n";
      result.rows.push_back(std::move(row));
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw ResourceError("cannot create output directory: " + out_dir + ": " +
                        ec.message());
  }
  spill((fs::path(out_dir) / "auc.csv").string(), auc_csv);
  spill((fs::path(out_dir) / "auc.txt").string(), auc_txt.str());
  if (opts.log != nullptr) *opts.log << auc_txt.str();

  for (const auto& pr : opts.pairs) {
    const int cx = require_col(profiles, pr.first, "profiles csv");
    const int cy = require_col(profiles, pr.second, "profiles csv");
    Grid g;
    g.cx = pr.first;
    g.cy = pr.second;
    g.bins = opts.bins;
    g.count.assign(static_cast<size_t>(g.bins) * g.bins, 0);
    g.timeouts.assign(static_cast<size_t>(g.bins) * g.bins, 0);
    std::vector<std::pair<double, double>> pts;
    for (const Observation& o : obs) {
      const auto& prow = profiles.rows[static_cast<size_t>(o.profile_row)];
      const size_t pline = static_cast<size_t>(o.profile_row) + 2;
      pts.emplace_back(parse_num_field(prow[static_cast<size_t>(cx)],
                                       pr.first, pline),
                       parse_num_field(prow[static_cast<size_t>(cy)],
                                       pr.second, pline));
    }
    if (!pts.empty()) {
      g.x_lo = g.x_hi = pts[0].first;
      g.y_lo = g.y_hi = pts[0].second;
      for (const auto& p : pts) {
        g.x_lo = std::min(g.x_lo, p.first);
        g.x_hi = std::max(g.x_hi, p.first);
        g.y_lo = std::min(g.y_lo, p.second);
        g.y_hi = std::max(g.y_hi, p.second);
      }
      for (size_t i = 0; i < pts.size(); ++i) {
        const int ix = bin_index(pts[i].first, g.x_lo, g.x_hi, g.bins);
        const int iy = bin_index(pts[i].second, g.y_lo, g.y_hi, g.bins);
        g.at(g.count, ix, iy) += 1;
        g.at(g.timeouts, ix, iy) += obs[i].is_timeout;
      }
    }

    const std::string base = "grid_" + g.cx + "_vs_" + g.cy;
    std::string grid_csv =
        g.cx + "_lo," + g.cx + "_hi," + g.cy + "_lo," + g.cy +
        "_hi,count,timeouts,rate\n";
    const double wx = (g.x_hi - g.x_lo) / g.bins;
    const double wy = (g.y_hi - g.y_lo) / g.bins;
    for (int iy = 0; iy < g.bins; ++iy) {
      for (int ix = 0; ix < g.bins; ++ix) {
        const int n = g.at(g.count, ix, iy);
        const int to = g.at(g.timeouts, ix, iy);
        grid_csv += num_str(g.x_lo + wx * ix) + "," +
                    num_str(g.x_lo + wx * (ix + 1)) + "," +
                    num_str(g.y_lo + wy * iy) + "," +
                    num_str(g.y_lo + wy * (iy + 1)) + "," +
                    std::to_string(n) + "," + std::to_string(to) + "," +
                    (n > 0 ? num_str(static_cast<double>(to) / n) : "") +
                    "\n";
      }
    }
    spill((fs::path(out_dir) / (base + ".csv")).string(), grid_csv);

    std::ostringstream txt;
    txt << "timeout rate over " << g.cx << " (columns, left = " << num_str(g.x_lo)
        << ", right = " << num_str(g.x_hi) << ") and " << g.cy
        << " (rows, top = " << num_str(g.y_hi) << ", bottom = "
        << num_str(g.y_lo) << ")\n";
    txt << "cells: timeouts/count, '.' = empty\n\n";
    for (int iy = g.bins - 1; iy >= 0; --iy) {
      for (int ix = 0; ix < g.bins; ++ix) {
        const int n = g.at(g.count, ix, iy);
        char cell[24];
        if (n == 0) {
          std::snprintf(cell, sizeof cell, "%9s", ".");
        } else {
          std::snprintf(cell, sizeof cell, "%9.2f",
                        static_cast<double>(g.at(g.timeouts, ix, iy)) / n);
        }
        txt << cell;
      }
      txt << "\n";
    }
    spill((fs::path(out_dir) / (base + ".txt")).string(), txt.str());
  }

  return result;
}

}  // namespace certbench

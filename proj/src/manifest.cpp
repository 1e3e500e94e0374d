#include <cmath>
#include <fstream>
#include <string>

#include "certbench/emit.hpp"
#include "certbench/errors.hpp"
#include "json.hpp"

namespace certbench {
namespace {

using nlohmann::json;

// nlohmann::json silently serializes non-finite doubles as null, which would
// corrupt a certificate on the way to disk; refuse instead.
void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v))
    throw StructuralError("manifest: non-finite value in " + what);
}

void require_finite(const Vec& v, const std::string& what) {
  for (double x : v) require_finite(x, what);
}

json profile_json(const DifficultyProfile& p) {
  json j;
  j["m_min_hat"] = p.m_min_hat;
  j["l_ibp"] = p.l_ibp;
  j["g_ibp"] = p.g_ibp;
  j["u_fraction"] = p.u_fraction;
  j["a_tau"] = p.a_tau;
  j["d_eff"] = p.d_eff;
  j["l_c"] = p.l_c;
  j["unstable_units"] = p.unstable_units;
  j["total_units"] = p.total_units;
  j["grad_cells"] = p.grad_cells;
  j["n_samples"] = p.n_samples;
  j["seed"] = p.seed;
  j["tau_slope"] = p.tau_slope;
  j["tau_grid"] = p.tau_grid;
  j["eta"] = p.eta;
  return j;
}

DifficultyProfile profile_from(const json& j) {
  DifficultyProfile p;
  p.m_min_hat = j.at("m_min_hat").get<double>();
  p.l_ibp = j.at("l_ibp").get<double>();
  p.g_ibp = j.at("g_ibp").get<double>();
  p.u_fraction = j.at("u_fraction").get<double>();
  p.a_tau = j.at("a_tau").get<double>();
  p.d_eff = j.at("d_eff").get<double>();
  p.l_c = j.at("l_c").get<double>();
  p.unstable_units = j.at("unstable_units").get<int>();
  p.total_units = j.at("total_units").get<int>();
  p.grad_cells = j.at("grad_cells").get<int>();
  p.n_samples = j.at("n_samples").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.tau_slope = j.at("tau_slope").get<double>();
  p.tau_grid = j.at("tau_grid").get<double>();
  p.eta = j.at("eta").get<double>();
  return p;
}

}  // namespace

std::string certificate_kind_for(const std::string& family) {
  if (family == kFamilyExactRadius) return "exact-milp";
  if (family == kFamilyPolynomial) return "numerical-separation";
  return "analytic";
}

Manifest make_manifest(const Instance& inst, const GenParams& params,
                       std::uint64_t seed, const std::string& onnx_file,
                       const std::string& vnnlib_file,
                       const DifficultyProfile* profile, bool downcast_f32) {
  Manifest m;
  m.id = inst.id;
  m.family = inst.cert.family;
  m.ground_truth = inst.cert.robust ? "robust" : "nonrobust";
  m.certificate_kind = certificate_kind_for(m.family);
  m.precision = downcast_f32 ? "float32" : "float64";
  m.seed = seed;
  m.label = inst.label;
  m.eps = inst.eps;
  m.x0 = inst.x0;
  m.dom_lo = inst.dom_lo;
  m.dom_hi = inst.dom_hi;
  m.params = params;
  m.cert = inst.cert;
  if (profile) m.profile = *profile;
  m.onnx_file = onnx_file;
  m.vnnlib_file = vnnlib_file;
  return m;
}

std::string manifest_json(const Manifest& m) {
  require_finite(m.eps, "eps");
  require_finite(m.x0, "x0");
  require_finite(m.dom_lo, "domain");
  require_finite(m.dom_hi, "domain");
  for (const auto& [k, v] : m.params) require_finite(v, "params." + k);
  for (const auto& [k, v] : m.cert.scalars)
    require_finite(v, "certificate.scalars." + k);
  for (const auto& [k, v] : m.cert.vectors)
    require_finite(v, "certificate.vectors." + k);

  json j;
  j["schema"] = m.schema;
  j["tool"] = {{"name", m.tool_name}, {"version", m.tool_version}};

  json inst;
  inst["id"] = m.id;
  inst["family"] = m.family;
  inst["seed"] = m.seed;
  inst["label"] = m.label;
  inst["eps"] = m.eps;
  inst["x0"] = m.x0;
  inst["ground_truth"] = m.ground_truth;
  if (!m.dom_lo.empty())
    inst["domain"] = {{"lo", m.dom_lo}, {"hi", m.dom_hi}};
  j["instance"] = inst;

  j["params"] = m.params;

  json cert;
  cert["kind"] = m.certificate_kind;
  cert["family"] = m.cert.family;
  cert["robust"] = m.cert.robust;
  cert["scalars"] = m.cert.scalars;
  cert["vectors"] = m.cert.vectors;
  j["certificate"] = cert;

  if (m.profile.has_value()) j["profile"] = profile_json(*m.profile);

  j["files"] = {{"onnx", m.onnx_file}, {"vnnlib", m.vnnlib_file}};
  j["precision"] = m.precision;
  return j.dump(2) + "\n";
}

std::size_t write_manifest(const Manifest& m, const std::string& path) {
  const std::string text = manifest_json(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.good()) throw ResourceError("cannot open for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out.good()) throw ResourceError("short write: " + path);
  return text.size();
}

std::size_t write_manifest(const Instance& inst,
                           const DifficultyProfile* profile,
                           const std::string& path) {
  return write_manifest(make_manifest(inst, {}, 0, "", "", profile), path);
}

Manifest parse_manifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest parse error at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
  try {
    Manifest m;
    m.schema = j.at("schema").get<std::string>();
    m.tool_name = j.at("tool").at("name").get<std::string>();
    m.tool_version = j.at("tool").at("version").get<std::string>();

    const json& inst = j.at("instance");
    m.id = inst.at("id").get<std::string>();
    m.family = inst.at("family").get<std::string>();
    m.seed = inst.at("seed").get<std::uint64_t>();
    m.label = inst.at("label").get<int>();
    m.eps = inst.at("eps").get<double>();
    m.x0 = inst.at("x0").get<Vec>();
    m.ground_truth = inst.at("ground_truth").get<std::string>();
    if (inst.contains("domain")) {
      m.dom_lo = inst.at("domain").at("lo").get<Vec>();
      m.dom_hi = inst.at("domain").at("hi").get<Vec>();
    }

    m.params = j.at("params").get<GenParams>();

    const json& cert = j.at("certificate");
    m.certificate_kind = cert.at("kind").get<std::string>();
    m.cert.family = cert.at("family").get<std::string>();
    m.cert.robust = cert.at("robust").get<bool>();
    m.cert.scalars =
        cert.at("scalars").get<std::map<std::string, double>>();
    m.cert.vectors = cert.at("vectors").get<std::map<std::string, Vec>>();

    if (j.contains("profile")) m.profile = profile_from(j.at("profile"));

    m.onnx_file = j.at("files").at("onnx").get<std::string>();
    m.vnnlib_file = j.at("files").at("vnnlib").get<std::string>();
    m.precision = j.at("precision").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest is missing or mistypes a field: ") +
                     e.what());
  }
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw ParseError("cannot open manifest: " + path);
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return parse_manifest(text);
}

Instance instance_from(const Manifest& m, Network net) {
  Instance inst;
  inst.id = m.id;
  inst.net = std::move(net);
  inst.x0 = m.x0;
  inst.label = m.label;
  inst.eps = m.eps;
  inst.dom_lo = m.dom_lo;
  inst.dom_hi = m.dom_hi;
  inst.cert = m.cert;
  return inst;
}

}  // namespace certbench

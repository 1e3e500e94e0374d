#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "certbench/certificate.hpp"
#include "certbench/gen.hpp"
#include "certbench/net.hpp"
#include "certbench/profiler.hpp"

namespace certbench {

inline constexpr const char* kToolName = "certbench";
inline constexpr const char* kToolVersion = "0.1.0";

// ---- ONNX ------------------------------------------------------------------
//
// Networks are serialized as ONNX models (ir_version 7, opset 13) using only
// {Gemm, Relu, Conv, Add, Sub, Mul, Div, MatMul, Softmax, Pow, Transpose,
// Reshape, ReduceSum}.  Parameters are stored as raw little-endian float64
// initializers by default so the round trip is bit-exact; `downcast_f32`
// stores float32 instead (the precision in use is recorded in the manifest).
// The byte stream is a pure function of the network and options.

struct OnnxOptions {
  bool downcast_f32 = false;
};

std::string onnx_bytes(const Network& net, const OnnxOptions& opts = {});
std::size_t write_onnx(const Network& net, const std::string& path,
                       const OnnxOptions& opts = {});

// Parse a model produced by write_onnx (or any file restricted to the same
// operator compositions) back into a Network.  Malformed framing raises
// ParseError with the byte offset; well-formed files using unsupported
// operators or compositions raise StructuralError.
Network parse_onnx(const std::string& bytes);
Network read_back(const std::string& path);

// ---- VNNLIB ----------------------------------------------------------------
//
// The property file declares X_0..X_{d-1} and Y_0..Y_{c-1}, asserts the
// per-coordinate box, and asserts the counterexample disjunction
// (or over k != y of (>= Y_k Y_y)); a verifier answering UNSAT has proven
// robustness.  Bounds are printed with the fewest significant digits (12..17)
// whose parsed value does not fall outside the true box, so the printed box
// is always contained in the certified one.

std::string vnnlib_text(const PerturbationBox& box, int y, int c);
std::size_t write_vnnlib(const PerturbationBox& box, int y, int c,
                         const std::string& path);

struct VnnlibSpec {
  Vec lo, hi;
  int label = 0;
  int classes = 0;

  // Center/radius reconstruction: x0 = (lo+hi)/2, eps = max halfwidth.
  PerturbationBox box() const;
};

VnnlibSpec read_vnnlib(const std::string& path);
VnnlibSpec parse_vnnlib(const std::string& text);

// ---- Manifest ----------------------------------------------------------------
//
// Human-readable JSON sidecar carrying everything needed to re-check an
// instance from disk except the network itself (which lives in the ONNX
// file): identity, seed, label, box, domain, constructor parameters, the
// full certificate dump, the optional difficulty profile, and file paths.

std::string certificate_kind_for(const std::string& family);

struct Manifest {
  std::string schema = "certbench-manifest-v1";
  std::string tool_name = kToolName;
  std::string tool_version = kToolVersion;
  std::string id;
  std::string family;
  std::string ground_truth;      // "robust" | "nonrobust"
  std::string certificate_kind;  // analytic | exact-milp | numerical-separation
  std::string precision = "float64";
  std::uint64_t seed = 0;
  int label = 0;
  double eps = 0.0;
  Vec x0;
  Vec dom_lo, dom_hi;  // empty unless the instance uses a global domain
  GenParams params;
  Certificate cert;
  std::optional<DifficultyProfile> profile;
  std::string onnx_file, vnnlib_file;
};

Manifest make_manifest(const Instance& inst, const GenParams& params,
                       std::uint64_t seed, const std::string& onnx_file,
                       const std::string& vnnlib_file,
                       const DifficultyProfile* profile = nullptr,
                       bool downcast_f32 = false);

std::string manifest_json(const Manifest& m);
std::size_t write_manifest(const Manifest& m, const std::string& path);
// Convenience form matching the generation pipeline.
std::size_t write_manifest(const Instance& inst,
                           const DifficultyProfile* profile,
                           const std::string& path);

// Parse a manifest back.  Malformed JSON raises ParseError with the byte
// offset reported by the JSON parser; structurally incomplete documents
// raise ParseError naming the missing field.
Manifest read_manifest(const std::string& path);
Manifest parse_manifest(const std::string& text);

// Rebuild an Instance from a manifest plus its ONNX network.
Instance instance_from(const Manifest& m, Network net);

}  // namespace certbench

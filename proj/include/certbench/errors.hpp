#pragma once

#include <stdexcept>
#include <string>

namespace certbench {

// Malformed network structure: shape mismatch, unknown layer kind,
// non-finite parameters.
struct StructuralError : std::runtime_error {
  explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Solver breakdown: simplex cycling guard exceeded, singular basis,
// tolerance failure at termination.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Search budget exhausted (branch-and-bound node budget, corner budget).
// The caller may retry with a fresh sample; the instance is never mislabeled.
struct ResourceError : std::runtime_error {
  explicit ResourceError(const std::string& msg) : std::runtime_error(msg) {}
};

// A constructor ran out of resampling retries.
struct GenerationError : std::runtime_error {
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad campaign config: unknown constructor name, parameter out of the
// documented range. Messages carry the offending row index.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-format problem on read-back (ONNX or VNNLIB).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace certbench

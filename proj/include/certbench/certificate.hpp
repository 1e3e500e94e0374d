#pragma once

#include <map>
#include <string>

#include "certbench/net.hpp"

namespace certbench {

// Analytic proof payload attached to an instance.  `scalars` and `vectors`
// hold the family-specific frozen quantities (bounds, norms, witnesses);
// the checker recomputes each one from the network parameters and fails on
// any mismatch, so a manifest cannot drift from its network.
struct Certificate {
  std::string family;
  bool robust = false;
  std::map<std::string, double> scalars;
  std::map<std::string, Vec> vectors;

  double scalar(const std::string& key) const {
    auto it = scalars.find(key);
    if (it == scalars.end()) return std::numeric_limits<double>::quiet_NaN();
    return it->second;
  }
  const Vec* vector(const std::string& key) const {
    auto it = vectors.find(key);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

// One labeled verification problem: decide whether every input in the
// eps-box around x0 keeps the label.
struct Instance {
  std::string id;
  Network net;
  Vec x0;
  int label = 0;
  double eps = 0.0;
  Vec dom_lo, dom_hi;  // input domain used by radius instances (may be empty)
  Certificate cert;
};

struct CheckReport {
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
  void fail(std::string what) { failures.push_back(std::move(what)); }
  void merge(const CheckReport& other) {
    failures.insert(failures.end(), other.failures.begin(),
                    other.failures.end());
  }
};

// Structure shared by every family: shapes line up, x0 is classified as the
// label, eps is positive and, for non-robust instances, the stored witness
// lies in the box and is strictly misclassified.
CheckReport check_common(const Instance& inst);

// Full recheck: check_common plus the family-specific recomputation.
CheckReport check_certificate(const Instance& inst);

}  // namespace certbench

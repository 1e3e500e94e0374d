#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "certbench/emit.hpp"
#include "certbench/errors.hpp"

namespace certbench {
namespace {

std::string fmt_prec(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// Shortest decimal (12..17 significant digits) whose parsed value does not
// fall below v.  Printing a lower bound this way keeps the emitted box inside
// the certified one; 17 digits always round-trips, so the loop terminates.
std::string print_lower(double v) {
  for (int prec = 12; prec <= 17; ++prec) {
    const std::string s = fmt_prec(v, prec);
    if (std::strtod(s.c_str(), nullptr) >= v) return s;
  }
  return fmt_prec(v, 17);
}

std::string print_upper(double v) {
  for (int prec = 12; prec <= 17; ++prec) {
    const std::string s = fmt_prec(v, prec);
    if (std::strtod(s.c_str(), nullptr) <= v) return s;
  }
  return fmt_prec(v, 17);
}

}  // namespace

std::string vnnlib_text(const PerturbationBox& box, int y, int c) {
  const int d = static_cast<int>(box.x0.size());
  if (d < 1) throw ConfigError("vnnlib: empty input box");
  if (c < 2) throw ConfigError("vnnlib: need at least two classes");
  if (y < 0 || y >= c) throw ConfigError("vnnlib: label out of range");
  if (!(box.eps >= 0.0)) throw ConfigError("vnnlib: negative radius");

  std::ostringstream os;
  os << "; l-inf robustness query: does any point of the input box move the\n"
        "; network off class "
     << y << "?  UNSAT certifies robustness.\n\n";
  for (int i = 0; i < d; ++i)
    os << "(declare-const X_" << i << " Real)\n";
  os << "\n";
  for (int k = 0; k < c; ++k)
    os << "(declare-const Y_" << k << " Real)\n";
  os << "\n; input box\n";
  for (int i = 0; i < d; ++i) {
    os << "(assert (>= X_" << i << " " << print_lower(box.x0[i] - box.eps)
       << "))\n";
    os << "(assert (<= X_" << i << " " << print_upper(box.x0[i] + box.eps)
       << "))\n";
  }
  os << "\n; counterexample: some competitor logit reaches the label logit\n";
  if (c == 2) {
    os << "(assert (>= Y_" << (1 - y) << " Y_" << y << "))\n";
  } else {
    os << "(assert (or\n";
    for (int k = 0; k < c; ++k) {
      if (k == y) continue;
      os << "  (>= Y_" << k << " Y_" << y << ")\n";
    }
    os << "))\n";
  }
  return os.str();
}

std::size_t write_vnnlib(const PerturbationBox& box, int y, int c,
                         const std::string& path) {
  const std::string text = vnnlib_text(box, y, c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.good()) throw ResourceError("cannot open for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out.good()) throw ResourceError("short write: " + path);
  return text.size();
}

PerturbationBox VnnlibSpec::box() const {
  PerturbationBox b;
  b.x0.resize(lo.size());
  b.eps = 0.0;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    b.x0[i] = 0.5 * (lo[i] + hi[i]);
    b.eps = std::max(b.eps, 0.5 * (hi[i] - lo[i]));
  }
  return b;
}

VnnlibSpec parse_vnnlib(const std::string& text) {
  VnnlibSpec spec;
  int max_x = -1, max_y = -1;
  std::vector<double> lo, hi;
  std::vector<char> has_lo, has_hi;
  int label = -1;
  bool saw_disjunct = false;

  auto ensure_coord = [&](int i) {
    if (i < 0) throw ParseError("vnnlib: negative input index");
    if (static_cast<int>(lo.size()) <= i) {
      lo.resize(i + 1, 0.0);
      hi.resize(i + 1, 0.0);
      has_lo.resize(i + 1, 0);
      has_hi.resize(i + 1, 0);
    }
  };
  auto take_label = [&](int yy) {
    if (label != -1 && label != yy)
      throw ParseError("vnnlib: inconsistent label in disjunction");
    label = yy;
    saw_disjunct = true;
  };

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t at = line.find_first_not_of(" \t\r");
    if (at == std::string::npos) continue;
    const std::string body = line.substr(at);
    if (body[0] == ';') continue;

    int i = 0, k = 0, yy = 0;
    double v = 0.0;
    if (std::sscanf(body.c_str(), "(declare-const X_%d Real)", &i) == 1) {
      max_x = std::max(max_x, i);
    } else if (std::sscanf(body.c_str(), "(declare-const Y_%d Real)", &k) ==
               1) {
      max_y = std::max(max_y, k);
    } else if (std::sscanf(body.c_str(), "(assert (>= X_%d %lf))", &i, &v) ==
               2) {
      ensure_coord(i);
      lo[i] = v;
      has_lo[i] = 1;
    } else if (std::sscanf(body.c_str(), "(assert (<= X_%d %lf))", &i, &v) ==
               2) {
      ensure_coord(i);
      hi[i] = v;
      has_hi[i] = 1;
    } else if (std::sscanf(body.c_str(), "(assert (>= Y_%d Y_%d))", &k,
                           &yy) == 2) {
      take_label(yy);
    } else if (std::sscanf(body.c_str(), "(>= Y_%d Y_%d)", &k, &yy) == 2) {
      take_label(yy);
    } else if (body == "(assert (or" || body == "))" || body == ")") {
      continue;
    } else {
      throw ParseError("vnnlib: unrecognized line " + std::to_string(lineno) +
                       ": " + body);
    }
  }

  if (max_x < 0) throw ParseError("vnnlib: no input declarations");
  if (max_y < 1) throw ParseError("vnnlib: fewer than two output declarations");
  if (!saw_disjunct) throw ParseError("vnnlib: no counterexample assertion");
  if (static_cast<int>(lo.size()) != max_x + 1)
    throw ParseError("vnnlib: missing box constraints");
  for (int c = 0; c <= max_x; ++c)
    if (!has_lo[c] || !has_hi[c])
      throw ParseError("vnnlib: coordinate " + std::to_string(c) +
                       " lacks a bound");
  if (label < 0 || label > max_y)
    throw ParseError("vnnlib: label outside declared outputs");

  spec.lo = std::move(lo);
  spec.hi = std::move(hi);
  spec.label = label;
  spec.classes = max_y + 1;
  return spec;
}

VnnlibSpec read_vnnlib(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw ParseError("cannot open vnnlib file: " + path);
  const std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  return parse_vnnlib(text);
}

}  // namespace certbench

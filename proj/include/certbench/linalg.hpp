#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace certbench {

using Vec = std::vector<double>;

// Dense row-major matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
};

inline double dot(const double* x, const double* y, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

inline double l1_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += std::fabs(x);
  return s;
}

inline double l2_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double linf_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::fabs(x));
  return s;
}

inline double l1_row(const Mat& m, int r) {
  double s = 0.0;
  const double* p = m.row(r);
  for (int j = 0; j < m.cols; ++j) s += std::fabs(p[j]);
  return s;
}

inline double l2_row(const Mat& m, int r) {
  const double* p = m.row(r);
  return std::sqrt(dot(p, p, m.cols));
}

// y = m x
inline void matvec(const Mat& m, const double* x, double* y) {
  for (int r = 0; r < m.rows; ++r) y[r] = dot(m.row(r), x, m.cols);
}

// y += m^T g
inline void matvec_t_acc(const Mat& m, const double* g, double* y) {
  for (int r = 0; r < m.rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* p = m.row(r);
    for (int c = 0; c < m.cols; ++c) y[c] += gr * p[c];
  }
}

// C = A * B with explicit dimensions; all row-major flat buffers.
inline void matmul(const double* a, int ar, int ac, const double* b, int bc,
                   double* c) {
  for (int i = 0; i < ar; ++i) {
    double* ci = c + static_cast<size_t>(i) * bc;
    for (int j = 0; j < bc; ++j) ci[j] = 0.0;
    const double* ai = a + static_cast<size_t>(i) * ac;
    for (int k = 0; k < ac; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b + static_cast<size_t>(k) * bc;
      for (int j = 0; j < bc; ++j) ci[j] += aik * bk[j];
    }
  }
}

// Largest singular value of m via power iteration on m^T m.
// Deterministic start vector; stops at relative tol 1e-10 (cap 10000 iters).
double operator_norm_2(const Mat& m);

}  // namespace certbench

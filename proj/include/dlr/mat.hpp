#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlr {

/// Dense row-major matrix of doubles. The only numeric container in the
/// library; everything (weather fields, adjacency operators, model weights,
/// gradients) is built on it.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  void release() {
    std::vector<double>().swap(v);
    rows = cols = 0;
  }
};

inline std::string shape_str(const Mat& m) {
  return "(" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ")";
}

inline bool all_finite(const Mat& m) {
  for (double x : m.v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// C = A * B
inline void matmul_into(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dims " + shape_str(a) + "*" + shape_str(b));
  c.rows = a.rows;
  c.cols = b.cols;
  c.v.assign(static_cast<size_t>(c.rows) * c.cols, 0.0);
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int p = 0; p < k; ++p) {
      const double s = ai[p];
      const double* bp = b.row(p);
      for (int j = 0; j < m; ++j) ci[j] += s * bp[j];
    }
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c;
  matmul_into(a, b, c);
  return c;
}

/// C += A^T * B   (A: n x k, B: n x m, C: k x m)
inline void matmul_tn_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: row counts " + shape_str(a) + "," + shape_str(b));
  if (c.rows != a.cols || c.cols != b.cols) throw std::invalid_argument("matmul_tn: bad accumulator shape");
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int p = 0; p < n; ++p) {
    const double* ap = a.row(p);
    const double* bp = b.row(p);
    for (int i = 0; i < k; ++i) {
      const double s = ap[i];
      double* ci = c.row(i);
      for (int j = 0; j < m; ++j) ci[j] += s * bp[j];
    }
  }
}

inline Mat matmul_tn(const Mat& a, const Mat& b) {
  Mat c(a.cols, b.cols);
  matmul_tn_acc(a, b, c);
  return c;
}

/// C += A * B^T   (A: n x m, B: k x m, C: n x k). Transposes B into scratch so
/// the inner loop stays unit-stride.
inline void matmul_nt_acc(const Mat& a, const Mat& b, Mat& c) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: col counts " + shape_str(a) + "," + shape_str(b));
  if (c.rows != a.rows || c.cols != b.rows) throw std::invalid_argument("matmul_nt: bad accumulator shape");
  const int n = a.rows, k = b.rows, m = a.cols;
  Mat bt(m, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < m; ++j) bt(j, i) = b(i, j);
  for (int i = 0; i < n; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int p = 0; p < m; ++p) {
      const double s = ai[p];
      const double* btp = bt.row(p);
      for (int j = 0; j < k; ++j) ci[j] += s * btp[j];
    }
  }
}

inline Mat matmul_nt(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.rows);
  matmul_nt_acc(a, b, c);
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

inline void add_inplace(Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape " + shape_str(a) + " vs " + shape_str(b));
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

inline void scale_inplace(Mat& a, double s) {
  for (double& x : a.v) x *= s;
}

inline double frobenius_sq(const Mat& a) {
  double s = 0.0;
  for (double x : a.v) s += x * x;
  return s;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double d = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) d = std::max(d, std::abs(a.v[i] - b.v[i]));
  return d;
}

/// In-place Cholesky factor L (lower) of a symmetric positive-definite matrix.
/// A small diagonal jitter keeps rank-deficient covariance matrices (buses at
/// identical coordinates) factorable.
inline Mat cholesky(Mat a, double jitter = 1e-8) {
  if (a.rows != a.cols) throw std::invalid_argument("cholesky: square matrix required");
  const int n = a.rows;
  for (int i = 0; i < n; ++i) a(i, i) += jitter;
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (d <= 0.0) throw std::runtime_error("cholesky: matrix not positive definite");
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) a(i, j) = 0.0;
  return a;
}

}  // namespace dlr

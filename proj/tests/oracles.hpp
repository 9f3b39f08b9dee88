#pragma once

// Independent reference computations for the test suites. Nothing here
// calls into the library's numerics: plain nested vectors, hand-rolled
// elimination and finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "relaxeq/tensor.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

inline Mat eye(std::size_t n) {
  Mat m = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
  Mat c = zeros(a.size(), b.empty() ? 0 : b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < c[i].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat sub(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] -= b[i][j];
  return c;
}

inline double max_abs(const Mat& a) {
  double m = 0.0;
  for (const auto& row : a)
    for (double v : row) m = std::max(m, std::abs(v));
  return m;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline std::vector<double> apply(const Mat& a, const std::vector<double>& x) {
  std::vector<double> y(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
  return y;
}

template <class M>
Mat from(const M& m) {
  Mat out = zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] = m(static_cast<long>(i), static_cast<long>(j));
  return out;
}

/// Rank by Gaussian elimination with partial pivoting.
inline std::size_t rank(Mat m, double tol = 1e-9) {
  if (m.empty()) return 0;
  const std::size_t rows = m.size(), cols = m[0].size();
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t piv = r;
    for (std::size_t i = r + 1; i < rows; ++i)
      if (std::abs(m[i][c]) > std::abs(m[piv][c])) piv = i;
    if (std::abs(m[piv][c]) <= tol) continue;
    std::swap(m[piv], m[r]);
    for (std::size_t i = r + 1; i < rows; ++i) {
      const double f = m[i][c] / m[r][c];
      if (f == 0.0) continue;
      for (std::size_t j = c; j < cols; ++j) m[i][j] -= f * m[r][j];
    }
    ++r;
  }
  return r;
}

/// Dimension of {W : G_out W = W G_in for every generator pair}, found by
/// writing out every scalar equation over the unknowns W_ij.
inline std::size_t commutant_dim(const std::vector<Mat>& g_in, const std::vector<Mat>& g_out, std::size_t in_dim,
                                 std::size_t out_dim) {
  const std::size_t n = in_dim * out_dim;
  Mat eqs;
  for (std::size_t k = 0; k < g_in.size(); ++k) {
    for (std::size_t i = 0; i < out_dim; ++i) {
      for (std::size_t j = 0; j < in_dim; ++j) {
        std::vector<double> row(n, 0.0);
        // (G_out W)_ij = sum_m G_out[i][m] W[m][j]
        for (std::size_t m = 0; m < out_dim; ++m) row[m * in_dim + j] += g_out[k][i][m];
        // (W G_in)_ij = sum_m W[i][m] G_in[m][j]
        for (std::size_t m = 0; m < in_dim; ++m) row[i * in_dim + m] -= g_in[k][m][j];
        eqs.push_back(std::move(row));
      }
    }
  }
  return n - rank(eqs);
}

/// Central finite difference of f with respect to every entry of param.
inline relaxeq::Tensor numeric_gradient(relaxeq::Tensor& param, const std::function<double()>& f, double h = 1e-6) {
  relaxeq::Tensor g(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double orig = param[i];
    param[i] = orig + h;
    const double up = f();
    param[i] = orig - h;
    const double down = f();
    param[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

struct GradCheck {
  double worst_relative = 0.0;
  std::string detail;
  bool ok = true;
};

/// Componentwise comparison: relative error below rel_tol, or absolute
/// error below abs_tol where both values sit near zero.
inline GradCheck compare_gradients(const relaxeq::Tensor& analytic, const relaxeq::Tensor& numeric, double rel_tol = 1e-4,
                                   double abs_tol = 1e-7) {
  GradCheck r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double diff = std::abs(a - n);
    if (diff < abs_tol) continue;
    const double rel = diff / std::max(std::abs(a), std::abs(n));
    r.worst_relative = std::max(r.worst_relative, rel);
    if (rel >= rel_tol && r.ok) {
      r.ok = false;
      r.detail = "entry " + std::to_string(i) + ": analytic " + std::to_string(a) + " numeric " + std::to_string(n);
    }
  }
  return r;
}

}  // namespace oracle

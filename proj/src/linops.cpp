// Copyright 2026 The gpmia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gpmia/linops.hpp"

#include <cmath>
#include <string>

#include "gpmia/errors.hpp"

namespace gpmia::linops {

namespace {

// Relative symmetry tolerance required by cholesky().
constexpr double kSymmetryTol = 1e-10;

// Plain unblocked Cholesky; returns false on a non-positive pivot.
bool try_factor(const Matrix& a, double jitter, Matrix* lower) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) + jitter;
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j) + (i == j ? jitter : 0.0);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  *lower = std::move(l);
  return true;
}

}  // namespace

bool Matrix::is_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

CholeskyFactor cholesky(const Matrix& a, double max_jitter) {
  const std::size_t n = a.rows();
  if (n != a.cols()) {
    throw DimensionMismatch("cholesky: matrix is " + std::to_string(n) + "x" +
                            std::to_string(a.cols()) + ", expected square");
  }
  if (!a.is_finite()) {
    throw NotPositiveDefinite("cholesky: matrix has non-finite entries");
  }

  double max_abs = 0.0;
  double max_asym = 0.0;
  double diag_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diag_sum += a(i, i);
    for (std::size_t j = 0; j < n; ++j) {
      max_abs = std::max(max_abs, std::abs(a(i, j)));
      if (j > i) max_asym = std::max(max_asym, std::abs(a(i, j) - a(j, i)));
    }
  }
  if (max_asym > kSymmetryTol * std::max(1.0, max_abs)) {
    throw NotSymmetric("cholesky: asymmetry " + std::to_string(max_asym) +
                       " exceeds tolerance");
  }

  const double scale = n > 0 ? diag_sum / static_cast<double>(n) : 1.0;
  const double base = scale > 0.0 ? scale : 1.0;
  if (max_jitter < 0.0) max_jitter = 1e-4 * base;

  CholeskyFactor factor;
  double jitter = 0.0;
  while (true) {
    if (try_factor(a, jitter, &factor.lower)) {
      factor.jitter_used = jitter;
      return factor;
    }
    if (jitter >= max_jitter) break;
    jitter = jitter == 0.0 ? std::min(1e-10 * base, max_jitter)
                           : std::min(jitter * 10.0, max_jitter);
  }
  throw NotPositiveDefinite(
      "cholesky: factorization failed at max jitter " +
      std::to_string(max_jitter));
}

std::vector<double> solve_lower(const Matrix& lower,
                                const std::vector<double>& b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) {
    throw DimensionMismatch("solve_lower: rhs length " +
                            std::to_string(b.size()) + " != " +
                            std::to_string(n));
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x[k];
    x[i] = s / lower(i, i);
  }
  return x;
}

std::vector<double> solve_lower_transpose(const Matrix& lower,
                                          const std::vector<double>& b) {
  const std::size_t n = lower.rows();
  if (b.size() != n) {
    throw DimensionMismatch("solve_lower_transpose: rhs length " +
                            std::to_string(b.size()) + " != " +
                            std::to_string(n));
  }
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x[k];
    x[ii] = s / lower(ii, ii);
  }
  return x;
}

std::vector<double> solve_spd(const CholeskyFactor& factor,
                              const std::vector<double>& b) {
  return solve_lower_transpose(factor.lower, solve_lower(factor.lower, b));
}

Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b) {
  const std::size_t n = factor.lower.rows();
  if (b.rows() != n) {
    throw DimensionMismatch("solve_spd: rhs has " + std::to_string(b.rows()) +
                            " rows, expected " + std::to_string(n));
  }
  Matrix x(n, b.cols());
  std::vector<double> col(n);
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = b(i, j);
    const std::vector<double> sol = solve_spd(factor, col);
    for (std::size_t i = 0; i < n; ++i) x(i, j) = sol[i];
  }
  return x;
}

double logdet(const CholeskyFactor& factor) {
  double s = 0.0;
  for (std::size_t i = 0; i < factor.lower.rows(); ++i) {
    s += std::log(factor.lower(i, i));
  }
  return 2.0 * s;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionMismatch("matmul: " + std::to_string(a.cols()) + " != " +
                            std::to_string(b.rows()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  if (a.cols() != x.size()) {
    throw DimensionMismatch("matvec: " + std::to_string(a.cols()) + " != " +
                            std::to_string(x.size()));
  }
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("dot: " + std::to_string(a.size()) + " != " +
                            std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace gpmia::linops

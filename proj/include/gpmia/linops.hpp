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

#ifndef GPMIA_LINOPS_HPP_
#define GPMIA_LINOPS_HPP_

#include <cstddef>
#include <vector>

namespace gpmia::linops {

// Dense row-major matrix. Sized for the small systems this toolkit solves
// (kernel Gram matrices over at most a few hundred feature vectors).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool is_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct CholeskyFactor {
  Matrix lower;        // lower-triangular, strictly positive diagonal
  double jitter_used = 0.0;
};

// Factors a + jitter*I = L*L^T. Jitter starts at 1e-10*mean(diag) and grows
// tenfold per retry up to max_jitter; max_jitter < 0 selects the default cap
// of 1e-4*mean(diag). Throws NotSymmetric / NotPositiveDefinite.
CholeskyFactor cholesky(const Matrix& a, double max_jitter = -1.0);

// Solves (a + jitter*I) x = b given the factor of a.
std::vector<double> solve_spd(const CholeskyFactor& factor,
                              const std::vector<double>& b);
Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b);

// log det(a + jitter*I) = 2 * sum(log diag(L)).
double logdet(const CholeskyFactor& factor);

// Triangular solves against the factor's lower matrix.
std::vector<double> solve_lower(const Matrix& lower,
                                const std::vector<double>& b);
std::vector<double> solve_lower_transpose(const Matrix& lower,
                                          const std::vector<double>& b);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

}  // namespace gpmia::linops

#endif  // GPMIA_LINOPS_HPP_

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

#ifndef GPMIA_GPC_HPP_
#define GPMIA_GPC_HPP_

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpmia/linops.hpp"

namespace gpmia::gpc {

// RBF + white noise kernel hyperparameters. Optimization works on the logs;
// the raw values here stay strictly positive (noise may be exactly zero for
// kernel evaluation, but optimization requires noise > 0).
struct GpHyperparams {
  double signal_variance = 1.0;
  double lengthscale = 1.0;
  double noise_variance = 1e-4;

  void validate() const;
  std::array<double, 3> to_log() const;
  static GpHyperparams from_log(const std::array<double, 3>& logs);
};

struct GpTrainingSet {
  linops::Matrix features;  // N x F, standardized upstream
  std::vector<int> labels;  // {0, 1}; both classes must appear

  void validate() const;
  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

// Laplace posterior state at the mode of log p(y|f) - f^T K^{-1} f / 2.
struct GpPosterior {
  GpHyperparams hyper;
  GpTrainingSet train;
  std::vector<double> mode;       // f_hat, length N
  std::vector<double> hessian_w;  // pi(1-pi) at the mode
  linops::CholeskyFactor factor;  // chol(I + W^1/2 K W^1/2)
  double log_marginal = 0.0;
};

struct MembershipPrediction {
  double probability = 0.5;
  double latent_mean = 0.0;
  double latent_variance = 0.0;
};

// sigma^2 exp(-||a-b||^2 / (2 l^2)) + noise * [same_point].
double kernel(const GpHyperparams& hyper, const std::vector<double>& a,
              const std::vector<double>& b, bool same_point);

linops::Matrix gram_matrix(const GpHyperparams& hyper,
                           const linops::Matrix& features);

// Newton iterations on the stable B = I + W^1/2 K W^1/2 system with step
// halving; stationarity residual below 1e-8 or NonConvergence.
GpPosterior fit_laplace(const GpTrainingSet& train,
                        const GpHyperparams& hyper);

// Laplace evidence gradient over (log sigma^2, log l, log noise).
std::array<double, 3> log_marginal_gradient(const GpTrainingSet& train,
                                            const GpHyperparams& hyper);

// Deterministic gradient ascent with step halving on evidence decrease.
GpHyperparams optimize_hyperparams(const GpTrainingSet& train,
                                   const GpHyperparams& init,
                                   std::size_t steps);

MembershipPrediction predict(const GpPosterior& posterior,
                             const std::vector<double>& x_star);

// Versioned JSON artifact; reload reproduces predictions bit-for-bit because
// the factorization is recomputed from the stored mode and hyperparameters.
// The json forms let callers bundle extra fields into the same document.
nlohmann::json posterior_to_json(const GpPosterior& posterior,
                                 const std::string& fingerprint);
GpPosterior posterior_from_json(const nlohmann::json& doc,
                                std::string* fingerprint = nullptr);
void save_posterior(const GpPosterior& posterior,
                    const std::filesystem::path& path,
                    const std::string& fingerprint);
GpPosterior load_posterior(const std::filesystem::path& path,
                           std::string* fingerprint = nullptr);

namespace detail {

// Gauss-Hermite nodes/weights for weight exp(-x^2); weights sum to sqrt(pi).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermite gauss_hermite(std::size_t n);

// Gauss-Legendre nodes/weights on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussLegendre gauss_legendre(std::size_t n);

// E[ sigmoid(z) ] under N(mean, variance). Gauss-Hermite (>= 32 nodes) for
// variance <= 1; beyond that the logistic's poles sit too close to the real
// axis for Hermite rules, so a composite Gauss-Legendre sweep that resolves
// the unit-width transition takes over.
double logistic_gaussian_integral(double mean, double variance,
                                  std::size_t nodes = 32);

}  // namespace detail

}  // namespace gpmia::gpc

#endif  // GPMIA_GPC_HPP_

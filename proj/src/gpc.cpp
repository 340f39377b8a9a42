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

#include "gpmia/gpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "gpmia/errors.hpp"
#include "gpmia/serde.hpp"

namespace gpmia::gpc {

namespace {

using linops::CholeskyFactor;
using linops::Matrix;
using nlohmann::json;

constexpr double kStationarityTol = 1e-8;
constexpr std::size_t kMaxNewtonIters = 100;

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

// log sigma(y f) for y in {0,1}-coded targets t: t*f - log(1 + e^f).
double log_likelihood(const std::vector<int>& labels,
                      const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double fi = f[i];
    // log(1 + e^f) evaluated without overflow
    const double softplus =
        fi > 0.0 ? fi + std::log1p(std::exp(-fi)) : std::log1p(std::exp(fi));
    s += static_cast<double>(labels[i]) * fi - softplus;
  }
  return s;
}

struct LaplaceState {
  std::vector<double> mode;       // f_hat = K a
  std::vector<double> alpha;      // a = K^{-1} f_hat
  std::vector<double> pi;         // sigmoid(f_hat)
  std::vector<double> w;          // pi (1 - pi)
  std::vector<double> sqrt_w;
  CholeskyFactor factor;          // chol(I + W^1/2 K W^1/2)
  double log_marginal = 0.0;
  double residual = 0.0;          // max |grad log lik - alpha|
};

CholeskyFactor factor_b(const Matrix& k, const std::vector<double>& sqrt_w) {
  const std::size_t n = k.rows();
  Matrix b(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      b(i, j) = sqrt_w[i] * k(i, j) * sqrt_w[j] + (i == j ? 1.0 : 0.0);
    }
  }
  return linops::cholesky(b, 0.0);  // eigenvalues >= 1, no jitter needed
}

LaplaceState laplace_mode(const GpTrainingSet& train, const Matrix& k) {
  const std::size_t n = train.size();
  LaplaceState st;
  st.alpha.assign(n, 0.0);
  st.mode.assign(n, 0.0);
  double psi = log_likelihood(train.labels, st.mode);  // f=0: -1/2 a^T f = 0

  std::vector<double> grad_ll(n);
  auto refresh = [&]() {
    st.pi.resize(n);
    st.w.resize(n);
    st.sqrt_w.resize(n);
    st.residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      st.pi[i] = sigmoid(st.mode[i]);
      st.w[i] = st.pi[i] * (1.0 - st.pi[i]);
      st.sqrt_w[i] = std::sqrt(st.w[i]);
      grad_ll[i] = static_cast<double>(train.labels[i]) - st.pi[i];
      st.residual = std::max(st.residual, std::abs(grad_ll[i] - st.alpha[i]));
    }
    st.factor = factor_b(k, st.sqrt_w);
  };

  refresh();
  for (std::size_t iter = 0;
       iter < kMaxNewtonIters && st.residual >= kStationarityTol; ++iter) {
    // Newton target: a_new = b - W^1/2 B^{-1} W^1/2 K b, b = W f + grad.
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = st.w[i] * st.mode[i] + grad_ll[i];
    }
    std::vector<double> kb = linops::matvec(k, b);
    for (std::size_t i = 0; i < n; ++i) kb[i] *= st.sqrt_w[i];
    std::vector<double> sol = linops::solve_spd(st.factor, kb);
    std::vector<double> a_new(n);
    for (std::size_t i = 0; i < n; ++i) {
      a_new[i] = b[i] - st.sqrt_w[i] * sol[i];
    }

    // Step-halving on the objective log p(y|f) - a^T f / 2. Near the mode
    // the objective is quadratically flat, so improvements fall below
    // double precision while the residual is still shrinking; a small
    // slack keeps Newton contracting there.
    const double slack = 1e-12 * (1.0 + std::abs(psi));
    double step = 1.0;
    bool accepted = false;
    while (step > 1e-12) {
      std::vector<double> a_try(n);
      for (std::size_t i = 0; i < n; ++i) {
        a_try[i] = st.alpha[i] + step * (a_new[i] - st.alpha[i]);
      }
      const std::vector<double> f_try = linops::matvec(k, a_try);
      const double psi_try = log_likelihood(train.labels, f_try) -
                             0.5 * linops::dot(a_try, f_try);
      if (psi_try >= psi - slack) {
        st.alpha = std::move(a_try);
        st.mode = f_try;
        psi = psi_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // numerically at the mode
    refresh();
  }

  if (st.residual >= kStationarityTol) {
    throw NonConvergence("laplace mode residual " + serde::real17(st.residual) +
                         " after " + std::to_string(kMaxNewtonIters) +
                         " iterations");
  }
  st.log_marginal = psi - linops::logdet(st.factor) / 2.0;
  return st;
}

}  // namespace

void GpHyperparams::validate() const {
  if (!(signal_variance > 0.0) || !(lengthscale > 0.0)) {
    throw InvalidArgument("signal_variance and lengthscale must be > 0");
  }
  if (noise_variance < 0.0) {
    throw InvalidArgument("noise_variance must be >= 0");
  }
}

std::array<double, 3> GpHyperparams::to_log() const {
  validate();
  if (!(noise_variance > 0.0)) {
    throw InvalidArgument("log-space parameters need noise_variance > 0");
  }
  return {std::log(signal_variance), std::log(lengthscale),
          std::log(noise_variance)};
}

GpHyperparams GpHyperparams::from_log(const std::array<double, 3>& logs) {
  return {std::exp(logs[0]), std::exp(logs[1]), std::exp(logs[2])};
}

void GpTrainingSet::validate() const {
  if (features.rows() < 2) {
    throw InsufficientData("GP training set needs N >= 2");
  }
  if (labels.size() != features.rows()) {
    throw DimensionMismatch("GP training set: label/feature count mismatch");
  }
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y == 0) has0 = true;
    else if (y == 1) has1 = true;
    else throw LabelOutOfRange("GP labels must be 0 or 1");
  }
  if (!has0 || !has1) {
    throw SingleClass("GP training set must contain both classes");
  }
  if (!features.is_finite()) {
    throw InvalidArgument("GP training features must be finite");
  }
}

double kernel(const GpHyperparams& hyper, const std::vector<double>& a,
              const std::vector<double>& b, bool same_point) {
  hyper.validate();
  if (a.size() != b.size()) {
    throw DimensionMismatch("kernel: input dims " + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()));
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  const double rbf = hyper.signal_variance *
                     std::exp(-d2 / (2.0 * hyper.lengthscale * hyper.lengthscale));
  return rbf + (same_point ? hyper.noise_variance : 0.0);
}

Matrix gram_matrix(const GpHyperparams& hyper, const Matrix& features) {
  const std::size_t n = features.rows();
  Matrix k(n, n);
  std::vector<double> xi(features.cols()), xj(features.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < features.cols(); ++c) xi[c] = features(i, c);
    for (std::size_t j = 0; j <= i; ++j) {
      for (std::size_t c = 0; c < features.cols(); ++c) xj[c] = features(j, c);
      const double v = kernel(hyper, xi, xj, i == j);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

GpPosterior fit_laplace(const GpTrainingSet& train,
                        const GpHyperparams& hyper) {
  train.validate();
  hyper.validate();
  const Matrix k = gram_matrix(hyper, train.features);
  LaplaceState st = laplace_mode(train, k);

  GpPosterior post;
  post.hyper = hyper;
  post.train = train;
  post.mode = std::move(st.mode);
  post.hessian_w = std::move(st.w);
  post.factor = std::move(st.factor);
  post.log_marginal = st.log_marginal;
  return post;
}

std::array<double, 3> log_marginal_gradient(const GpTrainingSet& train,
                                            const GpHyperparams& hyper) {
  train.validate();
  const auto logs = hyper.to_log();
  (void)logs;  // validates noise > 0 for the log parameterization
  const std::size_t n = train.size();
  const Matrix k = gram_matrix(hyper, train.features);
  const LaplaceState st = laplace_mode(train, k);

  // R = W^1/2 B^{-1} W^1/2 and the diagonal of the posterior covariance
  // Sigma = K - K W^1/2 B^{-1} W^1/2 K, via C = L \ (W^1/2 K).
  Matrix sw_k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      sw_k(i, j) = st.sqrt_w[i] * k(i, j);
    }
  }
  Matrix c(n, n);
  {
    std::vector<double> col(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) col[i] = sw_k(i, j);
      const std::vector<double> sol = linops::solve_lower(st.factor.lower, col);
      for (std::size_t i = 0; i < n; ++i) c(i, j) = sol[i];
    }
  }
  std::vector<double> sigma_diag(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c(i, j) * c(i, j);
    sigma_diag[j] = k(j, j) - s;
  }
  Matrix r(n, n);
  {
    Matrix sw = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) sw(i, i) = st.sqrt_w[i];
    Matrix binv_sw = linops::solve_spd(st.factor, sw);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        r(i, j) = st.sqrt_w[i] * binv_sw(i, j);
      }
    }
  }

  // Implicit term: dZ/df_i = 1/2 Sigma_ii d^3 log p / df^3 (the mode moves
  // with the hyperparameters), with the logit third derivative
  // -pi (1-pi)(1-2 pi). Verified against central differences.
  std::vector<double> s2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pi = st.pi[i];
    const double d3 = -pi * (1.0 - pi) * (1.0 - 2.0 * pi);
    s2[i] = 0.5 * sigma_diag[i] * d3;
  }

  // Distance-squared matrix reused by the lengthscale derivative.
  Matrix d2(n, n);
  {
    std::vector<double> xi(train.dim()), xj(train.dim());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < train.dim(); ++c) xi[c] = train.features(i, c);
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < train.dim(); ++c) {
          const double d = xi[c] - train.features(j, c);
          s += d * d;
        }
        d2(i, j) = s;
        d2(j, i) = s;
      }
    }
  }

  std::array<double, 3> grad{};
  const double ell2 = hyper.lengthscale * hyper.lengthscale;
  for (int h = 0; h < 3; ++h) {
    Matrix dk(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double rbf = k(i, j) - (i == j ? hyper.noise_variance : 0.0);
        if (h == 0) {
          dk(i, j) = rbf;  // d/d log sigma^2
        } else if (h == 1) {
          dk(i, j) = rbf * d2(i, j) / ell2;  // d/d log l
        } else {
          dk(i, j) = i == j ? hyper.noise_variance : 0.0;  // d/d log noise
        }
      }
    }
    double s1 = 0.0;
    {
      const std::vector<double> dka = linops::matvec(dk, st.alpha);
      double tr = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) tr += r(i, j) * dk(j, i);
      }
      s1 = 0.5 * linops::dot(st.alpha, dka) - 0.5 * tr;
    }
    std::vector<double> grad_ll(n);
    for (std::size_t i = 0; i < n; ++i) {
      grad_ll[i] = static_cast<double>(train.labels[i]) - st.pi[i];
    }
    const std::vector<double> b = linops::matvec(dk, grad_ll);
    const std::vector<double> rb = linops::matvec(r, b);
    const std::vector<double> krb = linops::matvec(k, rb);
    double s3_dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s3_dot += s2[i] * (b[i] - krb[i]);
    }
    grad[static_cast<std::size_t>(h)] = s1 + s3_dot;
  }
  return grad;
}

GpHyperparams optimize_hyperparams(const GpTrainingSet& train,
                                   const GpHyperparams& init,
                                   std::size_t steps) {
  if (steps < 1) throw InvalidArgument("optimizer steps must be >= 1");
  train.validate();

  auto evidence = [&](const GpHyperparams& h) -> double {
    try {
      return fit_laplace(train, h).log_marginal;
    } catch (const NumericError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  // Sign-based ascent with per-coordinate adaptive steps; any move that
  // lowers the evidence is reverted and the steps are halved, so the
  // evidence trace is non-decreasing. Log-parameters are clamped to +-23 to
  // keep kernels representable on evidence ridges (separable data pushes
  // the signal variance towards infinity).
  constexpr double kLogBound = 23.0;
  std::array<double, 3> theta = init.to_log();
  double best = evidence(init);
  std::array<double, 3> step{0.1, 0.1, 0.1};
  std::array<double, 3> prev_grad{0.0, 0.0, 0.0};
  for (std::size_t it = 0; it < steps; ++it) {
    std::array<double, 3> grad;
    try {
      grad = log_marginal_gradient(train, GpHyperparams::from_log(theta));
    } catch (const NumericError&) {
      break;
    }
    const double gnorm = std::max({std::abs(grad[0]), std::abs(grad[1]),
                                   std::abs(grad[2])});
    if (gnorm < 1e-7) break;

    std::array<double, 3> cand = theta;
    for (std::size_t j = 0; j < 3; ++j) {
      const double agree = prev_grad[j] * grad[j];
      if (agree > 0.0) step[j] = std::min(step[j] * 1.2, 1.0);
      else if (agree < 0.0) step[j] = std::max(step[j] * 0.5, 1e-14);
      if (grad[j] > 0.0) cand[j] += step[j];
      else if (grad[j] < 0.0) cand[j] -= step[j];
      cand[j] = std::clamp(cand[j], -kLogBound, kLogBound);
    }
    const double cand_ev = evidence(GpHyperparams::from_log(cand));
    if (cand_ev > best && std::isfinite(cand_ev)) {
      theta = cand;
      best = cand_ev;
      prev_grad = grad;
    } else {
      double max_step = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        step[j] *= 0.5;
        max_step = std::max(max_step, step[j]);
      }
      prev_grad = {0.0, 0.0, 0.0};
      if (max_step < 1e-12) break;
    }
  }
  return GpHyperparams::from_log(theta);
}

MembershipPrediction predict(const GpPosterior& posterior,
                             const std::vector<double>& x_star) {
  const std::size_t n = posterior.train.size();
  if (x_star.size() != posterior.train.dim()) {
    throw DimensionMismatch("predict: feature dim " +
                            std::to_string(x_star.size()) + ", posterior has " +
                            std::to_string(posterior.train.dim()));
  }
  std::vector<double> k_star(n);
  std::vector<double> xi(posterior.train.dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < posterior.train.dim(); ++c) {
      xi[c] = posterior.train.features(i, c);
    }
    k_star[i] = kernel(posterior.hyper, xi, x_star, false);
  }
  const double k_ss = kernel(posterior.hyper, x_star, x_star, true);

  std::vector<double> grad_ll(n);
  for (std::size_t i = 0; i < n; ++i) {
    grad_ll[i] = static_cast<double>(posterior.train.labels[i]) -
                 sigmoid(posterior.mode[i]);
  }
  const double mean = linops::dot(k_star, grad_ll);

  std::vector<double> swk(n);
  for (std::size_t i = 0; i < n; ++i) {
    swk[i] = std::sqrt(posterior.hessian_w[i]) * k_star[i];
  }
  const std::vector<double> v = linops::solve_lower(posterior.factor.lower, swk);
  const double variance = std::max(k_ss - linops::dot(v, v), 0.0);

  MembershipPrediction pred;
  pred.latent_mean = mean;
  pred.latent_variance = variance;
  pred.probability = detail::logistic_gaussian_integral(mean, variance);
  return pred;
}

json posterior_to_json(const GpPosterior& posterior,
                       const std::string& fingerprint) {
  json doc;
  doc["format"] = "gpmia.posterior";
  doc["version"] = 1;
  doc["fingerprint"] = fingerprint;
  doc["hyper"] = {{"signal_variance", posterior.hyper.signal_variance},
                  {"lengthscale", posterior.hyper.lengthscale},
                  {"noise_variance", posterior.hyper.noise_variance}};
  doc["log_marginal"] = posterior.log_marginal;
  doc["labels"] = posterior.train.labels;
  doc["mode"] = posterior.mode;
  json rows = json::array();
  for (std::size_t i = 0; i < posterior.train.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < posterior.train.dim(); ++j) {
      row.push_back(posterior.train.features(i, j));
    }
    rows.push_back(std::move(row));
  }
  doc["features"] = std::move(rows);
  return doc;
}

GpPosterior posterior_from_json(const json& doc, std::string* fingerprint) {
  if (doc.value("format", "") != "gpmia.posterior" ||
      doc.value("version", 0) != 1) {
    throw IoError("not a gpmia.posterior v1 document");
  }
  if (fingerprint) *fingerprint = doc.value("fingerprint", "");

  GpTrainingSet train;
  const auto& rows = doc.at("features");
  const std::size_t n = rows.size();
  const std::size_t f = n > 0 ? rows.at(0).size() : 0;
  train.features = Matrix(n, f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      train.features(i, j) = rows.at(i).at(j).get<double>();
    }
  }
  train.labels = doc.at("labels").get<std::vector<int>>();

  GpHyperparams hyper;
  hyper.signal_variance = doc.at("hyper").at("signal_variance").get<double>();
  hyper.lengthscale = doc.at("hyper").at("lengthscale").get<double>();
  hyper.noise_variance = doc.at("hyper").at("noise_variance").get<double>();

  GpPosterior post;
  post.hyper = hyper;
  post.train = std::move(train);
  post.mode = doc.at("mode").get<std::vector<double>>();
  post.log_marginal = doc.at("log_marginal").get<double>();

  // Rebuild W and the B factor from the stored mode; identical inputs give
  // identical factors, so reloaded predictions match exactly.
  const std::size_t nn = post.train.size();
  if (post.mode.size() != nn) {
    throw IoError("posterior mode length mismatch");
  }
  post.hessian_w.resize(nn);
  std::vector<double> sqrt_w(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    const double pi = sigmoid(post.mode[i]);
    post.hessian_w[i] = pi * (1.0 - pi);
    sqrt_w[i] = std::sqrt(post.hessian_w[i]);
  }
  post.factor = factor_b(gram_matrix(hyper, post.train.features), sqrt_w);
  return post;
}

void save_posterior(const GpPosterior& posterior,
                    const std::filesystem::path& path,
                    const std::string& fingerprint) {
  serde::save_json_file(path, posterior_to_json(posterior, fingerprint));
}

GpPosterior load_posterior(const std::filesystem::path& path,
                           std::string* fingerprint) {
  try {
    return posterior_from_json(serde::load_json_file(path), fingerprint);
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

namespace detail {

GaussHermite gauss_hermite(std::size_t n) {
  // Newton iteration on the orthonormal Hermite recurrence (weight e^{-x^2}).
  constexpr double kEps = 3e-14;
  constexpr double kPiQuarter = 0.7511255444649425;  // pi^{-1/4}
  GaussHermite gh;
  gh.nodes.assign(n, 0.0);
  gh.weights.assign(n, 0.0);
  const std::size_t m = (n + 1) / 2;
  double z = 0.0, pp = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) -
          1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * gh.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * gh.nodes[1];
    } else {
      z = 2.0 * z - gh.nodes[i - 2];
    }
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = kPiQuarter;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / static_cast<double>(j)) * p2 -
             std::sqrt(static_cast<double>(j - 1) / static_cast<double>(j)) *
                 p3;
      }
      pp = std::sqrt(2.0 * static_cast<double>(n)) * p2;
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) <= kEps) break;
    }
    gh.nodes[i] = z;
    gh.nodes[n - 1 - i] = -z;
    gh.weights[i] = 2.0 / (pp * pp);
    gh.weights[n - 1 - i] = gh.weights[i];
  }
  return gh;
}

GaussLegendre gauss_legendre(std::size_t n) {
  constexpr double kEps = 1e-14;
  constexpr double kPi = 3.14159265358979323846;
  GaussLegendre gl;
  gl.nodes.assign(n, 0.0);
  gl.weights.assign(n, 0.0);
  const std::size_t m = (n + 1) / 2;
  for (std::size_t i = 0; i < m; ++i) {
    double z = std::cos(kPi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / static_cast<double>(j);
      }
      pp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) <= kEps) break;
    }
    gl.nodes[i] = -z;
    gl.nodes[n - 1 - i] = z;
    gl.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    gl.weights[n - 1 - i] = gl.weights[i];
  }
  return gl;
}

double logistic_gaussian_integral(double mean, double variance,
                                  std::size_t nodes) {
  const double var = std::max(variance, 0.0);
  if (var <= 1.0) {
    static const GaussHermite gh32 = gauss_hermite(32);
    const GaussHermite& gh = nodes == 32 ? gh32 : gauss_hermite(nodes);
    const double scale = std::sqrt(2.0 * var);
    double s = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      s += gh.weights[i] * sigmoid(mean + scale * gh.nodes[i]);
    }
    return s / std::sqrt(3.14159265358979323846);
  }

  // Half-unit panels resolve sigmoid'(z); the +-9 sd window carries all but
  // ~1e-19 of the Gaussian mass.
  static const GaussLegendre gl10 = gauss_legendre(10);
  const double sd = std::sqrt(var);
  const double lo = mean - 9.0 * sd;
  const double hi = mean + 9.0 * sd;
  const std::size_t panels =
      static_cast<std::size_t>(std::ceil((hi - lo) / 0.5));
  const double h = (hi - lo) / static_cast<double>(panels);
  const double inv_norm =
      1.0 / (sd * std::sqrt(2.0 * 3.14159265358979323846));
  double s = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = lo + static_cast<double>(p) * h;
    const double mid = a + 0.5 * h;
    for (std::size_t i = 0; i < gl10.nodes.size(); ++i) {
      const double z = mid + 0.5 * h * gl10.nodes[i];
      const double u = (z - mean) / sd;
      s += gl10.weights[i] * sigmoid(z) * std::exp(-0.5 * u * u);
    }
  }
  return s * 0.5 * h * inv_norm;
}

}  // namespace detail

}  // namespace gpmia::gpc

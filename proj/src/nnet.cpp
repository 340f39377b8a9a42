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

#include "gpmia/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "gpmia/errors.hpp"
#include "gpmia/rng.hpp"
#include "gpmia/serde.hpp"

namespace gpmia::nnet {

namespace {

using nlohmann::json;

// Layer dims as (in, out) pairs.
std::vector<std::pair<std::size_t, std::size_t>> layer_dims(
    const MlpArchitecture& arch) {
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  std::size_t in = arch.input_dim;
  for (std::size_t h : arch.hidden_dims) {
    dims.emplace_back(in, h);
    in = h;
  }
  dims.emplace_back(in, arch.output_dim);
  return dims;
}

double activate(Activation act, double z) {
  return act == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative written in terms of the post-activation value.
double activate_deriv_from_post(Activation act, double a) {
  return act == Activation::kRelu ? (a > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

// Per-layer activations: values[0] = x, values[L] = logits.
std::vector<std::vector<double>> forward_trace(
    const TargetModel& model, const std::vector<double>& params,
    const std::vector<double>& x) {
  const MlpArchitecture& arch = model.arch();
  if (x.size() != arch.input_dim) {
    throw DimensionMismatch("forward: sample has dim " +
                            std::to_string(x.size()) + ", model expects " +
                            std::to_string(arch.input_dim));
  }
  const std::size_t n_layers = arch.num_layers();
  std::vector<std::vector<double>> values(n_layers + 1);
  values[0] = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t in = model.layer_in(l);
    const std::size_t out = model.layer_out(l);
    const std::size_t off = model.layer_offset(l);
    const double* w = params.data() + off;
    const double* b = params.data() + off + in * out;
    const std::vector<double>& prev = values[l];
    std::vector<double>& cur = values[l + 1];
    cur.assign(out, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      double z = b[i];
      const double* wi = w + i * in;
      for (std::size_t j = 0; j < in; ++j) z += wi[j] * prev[j];
      cur[i] = l + 1 < n_layers ? activate(arch.activation, z) : z;
    }
  }
  return values;
}

// Backpropagates the output cotangent u through the trace, accumulating the
// parameter gradient of u^T logits into grad_theta (pre-sized, zeroed by the
// caller or accumulated across samples) and optionally the input gradient.
void backward(const TargetModel& model, const std::vector<double>& params,
              const std::vector<std::vector<double>>& values,
              const std::vector<double>& u, double scale,
              std::vector<double>* grad_theta, std::vector<double>* grad_x) {
  const MlpArchitecture& arch = model.arch();
  const std::size_t n_layers = arch.num_layers();
  std::vector<double> delta = u;
  for (std::size_t li = n_layers; li-- > 0;) {
    const std::size_t in = model.layer_in(li);
    const std::size_t out = model.layer_out(li);
    const std::size_t off = model.layer_offset(li);
    const double* w = params.data() + off;
    const std::vector<double>& input = values[li];
    if (grad_theta) {
      double* gw = grad_theta->data() + off;
      double* gb = grad_theta->data() + off + in * out;
      for (std::size_t i = 0; i < out; ++i) {
        const double d = scale * delta[i];
        double* gwi = gw + i * in;
        for (std::size_t j = 0; j < in; ++j) gwi[j] += d * input[j];
        gb[i] += d;
      }
    }
    if (li == 0 && !grad_x) break;
    std::vector<double> prev(in, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      const double d = delta[i];
      const double* wi = w + i * in;
      for (std::size_t j = 0; j < in; ++j) prev[j] += wi[j] * d;
    }
    if (li == 0) {
      for (std::size_t j = 0; j < in; ++j) prev[j] *= scale;
      *grad_x = std::move(prev);
      break;
    }
    for (std::size_t j = 0; j < in; ++j) {
      prev[j] *= activate_deriv_from_post(arch.activation, input[j]);
    }
    delta = std::move(prev);
  }
}

void check_labels(const datagen::Dataset& data, std::size_t n_classes) {
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const int y = data.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw LabelOutOfRange("label " + std::to_string(y) + " at row " +
                            std::to_string(i) + " outside [0, " +
                            std::to_string(n_classes) + ")");
    }
  }
}

// Mean cross-entropy gradient over the whole dataset.
std::vector<double> dataset_gradient(const TargetModel& model,
                                     const std::vector<double>& params,
                                     const datagen::Dataset& data) {
  std::vector<double> grad(params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<double> x = data.row(i);
    const auto values = forward_trace(model, params, x);
    std::vector<double> u = softmax_probs(values.back());
    u[static_cast<std::size_t>(data.labels[i])] -= 1.0;
    backward(model, params, values, u, scale, &grad, nullptr);
  }
  return grad;
}

}  // namespace

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw InvalidArgument("unknown activation \"" + s + "\"");
}

std::string to_string(Optimizer o) {
  return o == Optimizer::kSgd ? "sgd" : "adam";
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "adam") return Optimizer::kAdam;
  throw InvalidArgument("unknown optimizer \"" + s + "\"");
}

void MlpArchitecture::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw InvalidArgument("architecture dims must be >= 1");
  }
  if (hidden_dims.empty()) {
    throw InvalidArgument("architecture needs at least one hidden layer");
  }
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw InvalidArgument("hidden dims must be >= 1");
  }
}

std::size_t MlpArchitecture::num_params() const {
  std::size_t p = 0;
  for (const auto& [in, out] : layer_dims(*this)) p += (in + 1) * out;
  return p;
}

TargetModel::TargetModel(MlpArchitecture arch, std::vector<double> params,
                         std::uint64_t rng_seed)
    : arch_(std::move(arch)), params_(std::move(params)), rng_seed_(rng_seed) {
  arch_.validate();
  if (params_.size() != arch_.num_params()) {
    throw DimensionMismatch("parameter vector has " +
                            std::to_string(params_.size()) + " entries, " +
                            "architecture needs " +
                            std::to_string(arch_.num_params()));
  }
  for (double v : params_) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite parameter");
  }
  std::size_t off = 0;
  for (const auto& [in, out] : layer_dims(arch_)) {
    offsets_.push_back(off);
    off += (in + 1) * out;
  }
}

TargetModel TargetModel::initialize(const MlpArchitecture& arch,
                                    std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  std::vector<double> params(arch.num_params(), 0.0);
  std::size_t off = 0;
  for (const auto& [in, out] : layer_dims(arch)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t k = 0; k < in * out; ++k) {
      params[off + k] = (2.0 * rng.uniform() - 1.0) * bound;
    }
    off += (in + 1) * out;  // biases stay zero
  }
  return TargetModel(arch, std::move(params), seed);
}

std::size_t TargetModel::layer_in(std::size_t layer) const {
  return layer == 0 ? arch_.input_dim : arch_.hidden_dims[layer - 1];
}

std::size_t TargetModel::layer_out(std::size_t layer) const {
  return layer == arch_.hidden_dims.size() ? arch_.output_dim
                                           : arch_.hidden_dims[layer];
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !(learning_rate < 1.0)) {
    throw InvalidArgument("learning_rate must lie in (0, 1)");
  }
}

std::vector<double> forward(const TargetModel& model,
                            const std::vector<double>& x) {
  return forward_trace(model, model.params(), x).back();
}

std::vector<double> softmax_probs(const std::vector<double>& logits) {
  const double zmax = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - zmax);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double softmax_cross_entropy(const std::vector<double>& logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw LabelOutOfRange("label " + std::to_string(label) +
                          " outside logit range");
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - zmax);
  return zmax + std::log(sum) - logits[static_cast<std::size_t>(label)];
}

TargetModel train(const TargetModel& model, const datagen::Dataset& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw EmptyDataset("train: dataset is empty");
  if (data.dim() != model.arch().input_dim) {
    throw DimensionMismatch("train: data dim != model input dim");
  }
  check_labels(data, model.arch().output_dim);

  std::vector<double> params = model.params();
  const std::size_t p = params.size();
  const std::size_t n = data.size();
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  // Adam state (unused for sgd).
  std::vector<double> m(p, 0.0), v(p, 0.0);
  std::size_t t = 0;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  std::vector<double> grad(p);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, n);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const std::vector<double> x = data.row(i);
        const auto values = forward_trace(model, params, x);
        std::vector<double> u = softmax_probs(values.back());
        u[static_cast<std::size_t>(data.labels[i])] -= 1.0;
        backward(model, params, values, u, scale, &grad, nullptr);
      }
      if (cfg.optimizer == Optimizer::kSgd) {
        for (std::size_t j = 0; j < p; ++j) {
          params[j] -= cfg.learning_rate * grad[j];
        }
      } else {
        ++t;
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
        for (std::size_t j = 0; j < p; ++j) {
          m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * grad[j];
          v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * grad[j] * grad[j];
          params[j] -= cfg.learning_rate * (m[j] / bc1) /
                       (std::sqrt(v[j] / bc2) + kEps);
        }
      }
    }
  }
  return model.with_params(std::move(params));
}

std::pair<double, std::vector<double>> loss_and_gradient(
    const TargetModel& model, const std::vector<double>& x, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= model.arch().output_dim) {
    throw LabelOutOfRange("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(model.arch().output_dim) + ")");
  }
  const auto values = forward_trace(model, model.params(), x);
  const double loss = softmax_cross_entropy(values.back(), y);
  std::vector<double> u = softmax_probs(values.back());
  u[static_cast<std::size_t>(y)] -= 1.0;
  std::vector<double> grad(model.num_params(), 0.0);
  backward(model, model.params(), values, u, 1.0, &grad, nullptr);
  return {loss, std::move(grad)};
}

linops::Matrix parameter_jacobian(const TargetModel& model,
                                  const std::vector<double>& x) {
  const std::size_t m = model.arch().output_dim;
  const std::size_t p = model.num_params();
  const auto values = forward_trace(model, model.params(), x);
  linops::Matrix jac(m, p);
  std::vector<double> u(m, 0.0);
  std::vector<double> grad(p);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(grad.begin(), grad.end(), 0.0);
    u[i] = 1.0;
    backward(model, model.params(), values, u, 1.0, &grad, nullptr);
    u[i] = 0.0;
    for (std::size_t j = 0; j < p; ++j) jac(i, j) = grad[j];
  }
  return jac;
}

linops::Matrix input_jacobian(const TargetModel& model,
                              const std::vector<double>& x) {
  const std::size_t m = model.arch().output_dim;
  const std::size_t d = model.arch().input_dim;
  const auto values = forward_trace(model, model.params(), x);
  linops::Matrix jac(m, d);
  std::vector<double> u(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    u[i] = 1.0;
    std::vector<double> gx;
    backward(model, model.params(), values, u, 1.0, nullptr, &gx);
    u[i] = 0.0;
    for (std::size_t j = 0; j < d; ++j) jac(i, j) = gx[j];
  }
  return jac;
}

SensitivityBundle sensitivity_bundle(const TargetModel& model,
                                     const std::vector<double>& x, int y) {
  SensitivityBundle b;
  auto [loss, grad] = loss_and_gradient(model, x, y);
  b.loss_value = loss;
  b.loss_grad_norm = linops::norm2(grad);
  double fro = 0.0;
  const linops::Matrix pj = parameter_jacobian(model, x);
  for (double v : pj.data()) fro += v * v;
  b.param_jac_fro = std::sqrt(fro);
  fro = 0.0;
  const linops::Matrix ij = input_jacobian(model, x);
  for (double v : ij.data()) fro += v * v;
  b.input_jac_fro = std::sqrt(fro);
  return b;
}

std::pair<TargetModel, double> finetune_copy(const TargetModel& model,
                                             const datagen::Dataset& data,
                                             std::size_t epochs, double lr) {
  if (data.size() == 0) throw EmptyDataset("finetune_copy: dataset is empty");
  if (data.dim() != model.arch().input_dim) {
    throw DimensionMismatch("finetune_copy: data dim != model input dim");
  }
  check_labels(data, model.arch().output_dim);

  std::vector<double> params = model.params();
  for (std::size_t e = 0; e < epochs; ++e) {
    const std::vector<double> grad = dataset_gradient(model, params, data);
    for (std::size_t j = 0; j < params.size(); ++j) params[j] -= lr * grad[j];
  }
  double dist = 0.0;
  for (std::size_t j = 0; j < params.size(); ++j) {
    const double d = params[j] - model.params()[j];
    dist += d * d;
  }
  return {model.with_params(std::move(params)), std::sqrt(dist)};
}

double mean_loss(const TargetModel& model, const datagen::Dataset& data) {
  if (data.size() == 0) throw EmptyDataset("mean_loss: dataset is empty");
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    s += softmax_cross_entropy(forward(model, data.row(i)), data.labels[i]);
  }
  return s / static_cast<double>(data.size());
}

double accuracy(const TargetModel& model, const datagen::Dataset& data) {
  if (data.size() == 0) throw EmptyDataset("accuracy: dataset is empty");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<double> logits = forward(model, data.row(i));
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (pred == static_cast<std::size_t>(data.labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_model(const TargetModel& model, const std::filesystem::path& path,
                const std::string& fingerprint) {
  json doc;
  doc["format"] = "gpmia.model";
  doc["version"] = 1;
  doc["fingerprint"] = fingerprint;
  doc["arch"] = {{"input_dim", model.arch().input_dim},
                 {"hidden_dims", model.arch().hidden_dims},
                 {"output_dim", model.arch().output_dim},
                 {"activation", to_string(model.arch().activation)}};
  doc["rng_seed"] = model.rng_seed();
  doc["params"] = model.params();
  serde::save_json_file(path, doc);
}

TargetModel load_model(const std::filesystem::path& path,
                       std::string* fingerprint) {
  const json doc = serde::load_json_file(path);
  if (doc.value("format", "") != "gpmia.model" || doc.value("version", 0) != 1) {
    throw IoError("not a gpmia.model v1 artifact: " + path.string());
  }
  MlpArchitecture arch;
  arch.input_dim = doc.at("arch").at("input_dim").get<std::size_t>();
  arch.hidden_dims =
      doc.at("arch").at("hidden_dims").get<std::vector<std::size_t>>();
  arch.output_dim = doc.at("arch").at("output_dim").get<std::size_t>();
  arch.activation =
      activation_from_string(doc.at("arch").at("activation").get<std::string>());
  if (fingerprint) *fingerprint = doc.value("fingerprint", "");
  return TargetModel(arch, doc.at("params").get<std::vector<double>>(),
                     doc.at("rng_seed").get<std::uint64_t>());
}

}  // namespace gpmia::nnet

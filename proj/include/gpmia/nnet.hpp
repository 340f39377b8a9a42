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

#ifndef GPMIA_NNET_HPP_
#define GPMIA_NNET_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gpmia/dataset.hpp"
#include "gpmia/linops.hpp"

namespace gpmia::nnet {

enum class Activation { kRelu, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  Activation activation = Activation::kRelu;

  // Throws InvalidArgument unless all dims >= 1 and at least one hidden
  // layer is present.
  void validate() const;
  std::size_t num_params() const;
  std::size_t num_layers() const { return hidden_dims.size() + 1; }
};

// Frozen MLP target: architecture plus a flat parameter vector. Per-layer
// layout is weights (out x in, row-major) followed by biases (out).
class TargetModel {
 public:
  TargetModel(MlpArchitecture arch, std::vector<double> params,
              std::uint64_t rng_seed);

  // Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)) per layer.
  static TargetModel initialize(const MlpArchitecture& arch,
                                std::uint64_t seed);

  const MlpArchitecture& arch() const { return arch_; }
  const std::vector<double>& params() const { return params_; }
  std::uint64_t rng_seed() const { return rng_seed_; }
  std::size_t num_params() const { return params_.size(); }

  // Offset of layer l's weight block in the flat vector; biases follow.
  std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t layer_in(std::size_t layer) const;
  std::size_t layer_out(std::size_t layer) const;

  TargetModel with_params(std::vector<double> params) const {
    return TargetModel(arch_, std::move(params), rng_seed_);
  }

 private:
  MlpArchitecture arch_;
  std::vector<double> params_;
  std::uint64_t rng_seed_;
  std::vector<std::size_t> offsets_;
};

enum class Optimizer { kSgd, kAdam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 0.005;
  Optimizer optimizer = Optimizer::kAdam;
  std::uint64_t seed = 0;

  void validate() const;
};

// The four sensitivity scalars of one (sample, label) pair.
struct SensitivityBundle {
  double loss_grad_norm = 0.0;  // ||grad_theta loss||_2
  double param_jac_fro = 0.0;   // ||d logits / d theta||_F
  double input_jac_fro = 0.0;   // ||d logits / d x||_F
  double loss_value = 0.0;      // cross-entropy at (x, y)
};

std::vector<double> forward(const TargetModel& model,
                            const std::vector<double>& x);

// Numerically stable softmax; output sums to one and is invariant to
// additive logit shifts.
std::vector<double> softmax_probs(const std::vector<double>& logits);

double softmax_cross_entropy(const std::vector<double>& logits, int label);

// Cross-entropy training with seeded shuffling; returns a new model.
TargetModel train(const TargetModel& model, const datagen::Dataset& data,
                  const TrainConfig& cfg);

std::pair<double, std::vector<double>> loss_and_gradient(
    const TargetModel& model, const std::vector<double>& x, int y);

// Row i is the gradient of logit i w.r.t. the flat parameters (m x p).
linops::Matrix parameter_jacobian(const TargetModel& model,
                                  const std::vector<double>& x);

// Row i is the gradient of logit i w.r.t. the input (m x d).
linops::Matrix input_jacobian(const TargetModel& model,
                              const std::vector<double>& x);

SensitivityBundle sensitivity_bundle(const TargetModel& model,
                                     const std::vector<double>& x, int y);

// Full-batch gradient descent on a clone for `epochs` steps; the second
// element is the l2 distance between tuned and original parameters.
std::pair<TargetModel, double> finetune_copy(const TargetModel& model,
                                             const datagen::Dataset& data,
                                             std::size_t epochs, double lr);

double mean_loss(const TargetModel& model, const datagen::Dataset& data);
double accuracy(const TargetModel& model, const datagen::Dataset& data);

// Versioned JSON artifact; the parameter round-trip is bit-exact.
void save_model(const TargetModel& model, const std::filesystem::path& path,
                const std::string& fingerprint);
TargetModel load_model(const std::filesystem::path& path,
                       std::string* fingerprint = nullptr);

}  // namespace gpmia::nnet

#endif  // GPMIA_NNET_HPP_

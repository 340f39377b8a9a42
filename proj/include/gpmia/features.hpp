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

#ifndef GPMIA_FEATURES_HPP_
#define GPMIA_FEATURES_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gpmia/linops.hpp"
#include "gpmia/nnet.hpp"

namespace gpmia::features {

// One membership decision's worth of data: a batch of samples (a single
// sample is the n_u = 1 case).
struct AuditUnit {
  linops::Matrix samples;   // n_u x d
  std::vector<int> labels;  // length n_u
  std::string unit_id;

  void validate() const;
  gpmia::datagen::Dataset as_dataset() const;
};

enum class Family { kCommon, kGrad, kNtk };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct FeatureConfig {
  std::set<Family> families = {Family::kCommon};
  std::size_t finetune_epochs = 5;
  double finetune_lr = 0.001;
  double ntk_lambda = 1e-3;
  std::size_t ntk_ref_size = 64;

  void validate() const;
};

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> names;
  std::string unit_id;
};

// Reference-set kernel state for the tangent-kernel features. The gram
// entry (i, j) is the Frobenius inner product of the parameter-Jacobians of
// reference samples i and j; factor holds chol(gram + lambda*I).
struct NtkContext {
  std::vector<linops::Matrix> reference_jacobians;
  linops::Matrix gram;
  double lambda = 0.0;
  linops::CholeskyFactor factor;
};

struct Standardizer {
  std::vector<double> means;
  std::vector<double> stds;  // population std, floored at 1e-12
};

using NamedValues = std::vector<std::pair<std::string, double>>;

// Fixed order: accuracy, entropy, loss, confidence, correct_prob,
// perturbation, input_mean, input_var.
NamedValues common_features(const nnet::TargetModel& model,
                            const AuditUnit& unit, const FeatureConfig& cfg);

// Unit means of the sensitivity bundle, order: param_jac_fro,
// input_jac_fro, loss, loss_grad_norm.
NamedValues grad_features(const nnet::TargetModel& model,
                          const AuditUnit& unit);

NtkContext build_ntk_context(const nnet::TargetModel& model,
                             const AuditUnit& reference, double lambda);

// Unit means of: tau_lambda, h_norm, h_max, s_max, s_mean. A degenerate
// self-kernel (< 1e-12) zeroes the similarity entries and appends a note to
// `warnings` when given.
NamedValues ntk_features(const nnet::TargetModel& model, const AuditUnit& unit,
                         const NtkContext& ctx,
                         std::vector<std::string>* warnings = nullptr);

// Concatenates the enabled families in order common, grad, ntk with
// family-prefixed names. The name order is a stable public contract.
FeatureVector extract(const nnet::TargetModel& model, const AuditUnit& unit,
                      const FeatureConfig& cfg,
                      const NtkContext* ctx = nullptr,
                      std::vector<std::string>* warnings = nullptr);

Standardizer fit_standardizer(const std::vector<FeatureVector>& features);
FeatureVector apply(const Standardizer& s, const FeatureVector& fv);

// Line-delimited feature store. The first line is a header record carrying
// the fingerprint, config echo and feature names; each following line is one
// unit. Values are written at 17 significant digits so the decimal
// round-trip is bit-exact.
struct FeatureRecord {
  std::string unit_id;
  std::optional<int> label;  // 1 member, 0 non-member, empty if unknown
  std::optional<std::string> group;
  std::vector<double> values;
};

void write_feature_store(const std::filesystem::path& path,
                         const std::string& fingerprint,
                         const FeatureConfig& cfg,
                         const std::vector<std::string>& feature_names,
                         const std::vector<FeatureRecord>& records);

struct LoadedFeatureStore {
  std::string fingerprint;
  std::vector<std::string> feature_names;
  std::vector<FeatureRecord> records;
};

LoadedFeatureStore read_feature_store(const std::filesystem::path& path);

}  // namespace gpmia::features

#endif  // GPMIA_FEATURES_HPP_

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

#ifndef GPMIA_CLI_HPP_
#define GPMIA_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpmia/datagen.hpp"
#include "gpmia/features.hpp"
#include "gpmia/gpc.hpp"
#include "gpmia/nnet.hpp"

namespace gpmia::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Member / non-member / candidate data source. A synthetic source without an
// explicit seed draws one derived from the experiment seed and its role tag.
struct DataSource {
  enum class Kind { kSynthetic, kCsv };
  Kind kind = Kind::kSynthetic;
  datagen::SynthConfig synth;
  bool synth_seed_set = false;
  std::filesystem::path csv_path;
  std::string label_column = "label";
};

struct UnitPlan {
  std::size_t unit_size = 50;
  std::size_t member_units = 40;
  std::size_t non_member_units = 40;
  bool stratified = false;
};

struct CandidateGroup {
  enum class Source { kMemberPool, kNonMemberPool, kDataset };
  std::string name;
  Source source = Source::kDataset;
  DataSource data;  // used when source == kDataset
  std::size_t units = 8;
  std::size_t unit_size = 50;
  int label = 0;  // ground-truth membership of the group
};

struct GpSettings {
  double signal_variance = 1.0;
  double lengthscale = 0.0;  // 0 selects sqrt(F) once F is known
  double noise_variance = 1e-4;
  std::size_t optimizer_steps = 100;
  // > 0: stratified share of labeled units held out of GP training and
  // written to holdout_features.jsonl for infer/eval.
  double holdout_fraction = 0.0;
};

struct EvalSettings {
  std::vector<double> fpr_targets = {0.01};
  double threshold = 0.5;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // may be overridden by --out
  nnet::MlpArchitecture arch;
  nnet::TrainConfig train;
  DataSource member;
  DataSource non_member;
  std::optional<std::pair<DataSource, std::size_t>> augment_non_member;
  UnitPlan units;
  features::FeatureConfig feature_cfg;
  GpSettings gp;
  std::vector<CandidateGroup> candidates;
  EvalSettings eval;

  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  // FNV-1a of the canonical JSON echo; embedded in every artifact.
  std::string fingerprint() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

// Built-in reproductions: "exp1", "exp2" (synthetic member/non-member
// studies) and "fraud" (imbalanced tabular surrogate).
ExperimentConfig builtin_experiment(const std::string& name,
                                    std::uint64_t seed,
                                    const std::filesystem::path& out_dir);

struct StageOptions {
  std::filesystem::path out_dir;
  bool force = false;
};

void cmd_train_target(const ExperimentConfig& cfg, const StageOptions& opt);
void cmd_extract(const ExperimentConfig& cfg, const StageOptions& opt);
void cmd_train_gp(const ExperimentConfig& cfg, const StageOptions& opt);
void cmd_infer(const ExperimentConfig& cfg, const StageOptions& opt,
               const std::optional<std::filesystem::path>& features_file = {});
void cmd_eval(const ExperimentConfig& cfg, const StageOptions& opt,
              const std::optional<std::filesystem::path>& scores_file = {});

// Full pipeline for a built-in experiment; stages with fresh artifacts are
// skipped unless `force`.
void cmd_repro(const ExperimentConfig& cfg, const StageOptions& opt);

// Argument parsing plus exception-to-exit-code mapping (1 numerical,
// 2 configuration / IO).
int run_cli(int argc, char** argv);

}  // namespace gpmia::cli

#endif  // GPMIA_CLI_HPP_

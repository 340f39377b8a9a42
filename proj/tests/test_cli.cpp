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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gpmia/cli.hpp"
#include "gpmia/datagen.hpp"
#include "gpmia/errors.hpp"
#include "gpmia/evalkit.hpp"
#include "gpmia/features.hpp"
#include "gpmia/rng.hpp"
#include "gpmia/serde.hpp"

using namespace gpmia;
using cli::ExperimentConfig;
using cli::StageOptions;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("gpmia_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Scaled-down experiment that runs in a couple of seconds.
json tiny_config_json() {
  return json::parse(R"({
    "seed": 7,
    "target": {
      "arch": {"input_dim": 6, "hidden_dims": [16, 8], "output_dim": 2,
               "activation": "relu"},
      "train": {"epochs": 15, "batch_size": 32, "learning_rate": 0.01,
                "optimizer": "adam"}
    },
    "data": {
      "member": {"type": "synthetic", "n_samples": 400, "n_features": 6,
                  "class_sep": 1.0, "flip_prob": 0.0,
                  "class_weights": [0.5, 0.5]},
      "non_member": {"type": "synthetic", "n_samples": 400, "n_features": 6,
                      "class_sep": 5.0, "flip_prob": 0.3,
                      "class_weights": [0.8, 0.2]}
    },
    "units": {"unit_size": 20, "member_units": 10, "non_member_units": 10},
    "features": {"families": ["common"], "finetune_epochs": 3},
    "gp": {"optimizer_steps": 40},
    "candidates": [
      {"name": "probe_member", "source": "member_pool", "units": 3,
       "unit_size": 20},
      {"name": "probe_far", "source": "dataset", "units": 3, "unit_size": 20,
       "data": {"type": "synthetic", "n_samples": 60, "n_features": 6,
                 "class_sep": 5.0, "flip_prob": 0.3,
                 "class_weights": [0.8, 0.2]}}
    ],
    "eval": {"fpr_targets": [0.01], "threshold": 0.5}
  })");
}

ExperimentConfig tiny_config() {
  return ExperimentConfig::from_json(tiny_config_json());
}

void run_pipeline(const ExperimentConfig& cfg, const StageOptions& opt) {
  cli::cmd_train_target(cfg, opt);
  cli::cmd_extract(cfg, opt);
  cli::cmd_train_gp(cfg, opt);
  cli::cmd_infer(cfg, opt);
  cli::cmd_eval(cfg, opt);
}

}  // namespace

TEST_CASE("config parsing is strict about unknown keys") {
  json doc = tiny_config_json();
  doc["typo_key"] = 1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);

  doc = tiny_config_json();
  doc["gp"]["learning_rate"] = 0.1;
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);

  doc = tiny_config_json();
  doc.erase("seed");
  CHECK_THROWS_AS(ExperimentConfig::from_json(doc), ConfigError);
}

TEST_CASE("config echo and fingerprint are stable") {
  const ExperimentConfig cfg = tiny_config();
  const ExperimentConfig cfg2 =
      ExperimentConfig::from_json(cfg.to_json());
  CHECK(cfg.fingerprint() == cfg2.fingerprint());

  ExperimentConfig other = tiny_config();
  other.seed = 8;
  CHECK(other.fingerprint() != cfg.fingerprint());
}

TEST_CASE("pipeline produces all artifacts and sensible scores") {
  const ExperimentConfig cfg = tiny_config();
  StageOptions opt;
  opt.out_dir = fresh_dir("pipeline");
  run_pipeline(cfg, opt);

  for (const char* name :
       {"model.json", "train_features.jsonl", "candidate_features.jsonl",
        "posterior.json", "scores.jsonl", "report.json", "manifest.json",
        "config.json"}) {
    CHECK(fs::exists(opt.out_dir / name));
  }

  const features::LoadedFeatureStore store =
      features::read_feature_store(opt.out_dir / "train_features.jsonl");
  CHECK(store.records.size() == 20);
  CHECK(store.feature_names.size() == 8);  // common family only

  const json report = serde::load_json_file(opt.out_dir / "report.json");
  CHECK(report.at("fingerprint").get<std::string>() == cfg.fingerprint());
  // Member probes come from the member pool the GP trained on.
  const double member_mean =
      report.at("groups").at("probe_member").at("mean").get<double>();
  const double far_mean =
      report.at("groups").at("probe_far").at("mean").get<double>();
  CHECK(member_mean > 0.5);
  CHECK(member_mean > far_mean);

  fs::remove_all(opt.out_dir);
}

TEST_CASE("scoring the training store separates a separable problem") {
  const ExperimentConfig cfg = tiny_config();
  StageOptions opt;
  opt.out_dir = fresh_dir("trainstore");
  cli::cmd_train_target(cfg, opt);
  cli::cmd_extract(cfg, opt);
  cli::cmd_train_gp(cfg, opt);
  cli::cmd_infer(cfg, opt, opt.out_dir / "train_features.jsonl");
  cli::cmd_eval(cfg, opt);

  const json report = serde::load_json_file(opt.out_dir / "report.json");
  CHECK(report.at("auroc").get<double>() >= 0.99);
  fs::remove_all(opt.out_dir);
}

TEST_CASE("identical configs give byte-identical stores and reports") {
  const ExperimentConfig cfg = tiny_config();
  StageOptions a, b;
  a.out_dir = fresh_dir("det_a");
  b.out_dir = fresh_dir("det_b");
  run_pipeline(cfg, a);
  run_pipeline(cfg, b);
  for (const char* name : {"train_features.jsonl", "candidate_features.jsonl",
                           "scores.jsonl", "report.json"}) {
    CHECK(serde::read_text_file(a.out_dir / name) ==
          serde::read_text_file(b.out_dir / name));
  }
  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
}

TEST_CASE("stages are re-entrant: fresh artifacts are skipped") {
  const ExperimentConfig cfg = tiny_config();
  StageOptions opt;
  opt.out_dir = fresh_dir("reentry");
  run_pipeline(cfg, opt);

  const auto model_time = fs::last_write_time(opt.out_dir / "model.json");
  const auto features_time =
      fs::last_write_time(opt.out_dir / "train_features.jsonl");

  // Delete a downstream artifact; re-running rebuilds only that stage.
  fs::remove(opt.out_dir / "posterior.json");
  run_pipeline(cfg, opt);
  CHECK(fs::last_write_time(opt.out_dir / "model.json") == model_time);
  CHECK(fs::last_write_time(opt.out_dir / "train_features.jsonl") ==
        features_time);
  CHECK(fs::exists(opt.out_dir / "posterior.json"));
  fs::remove_all(opt.out_dir);
}

TEST_CASE("fingerprint mismatches are refused unless forced") {
  ExperimentConfig cfg = tiny_config();
  StageOptions opt;
  opt.out_dir = fresh_dir("fpcheck");
  cli::cmd_train_target(cfg, opt);

  cfg.seed = 99;  // different fingerprint, stale model on disk
  CHECK_THROWS_AS(cli::cmd_extract(cfg, opt), ConfigError);
  opt.force = true;
  CHECK_NOTHROW(cli::cmd_extract(cfg, opt));
  fs::remove_all(opt.out_dir);
}

TEST_CASE("train-gp rejects a single-class store") {
  const ExperimentConfig cfg = tiny_config();
  StageOptions opt;
  opt.out_dir = fresh_dir("singleclass");
  fs::create_directories(opt.out_dir);

  features::FeatureConfig fcfg;
  fcfg.families = {features::Family::kCommon};
  std::vector<features::FeatureRecord> records;
  for (int i = 0; i < 6; ++i) {
    records.push_back({"u" + std::to_string(i), 1, std::nullopt,
                       {0.1 * i, 1.0 - 0.1 * i}});
  }
  features::write_feature_store(opt.out_dir / "train_features.jsonl",
                                cfg.fingerprint(), fcfg, {"f0", "f1"},
                                records);
  CHECK_THROWS_AS(cli::cmd_train_gp(cfg, opt), SingleClass);
  fs::remove_all(opt.out_dir);
}

TEST_CASE("infer reports schema mismatches by column name") {
  const ExperimentConfig cfg = tiny_config();
  StageOptions opt;
  opt.out_dir = fresh_dir("schema");
  cli::cmd_train_target(cfg, opt);
  cli::cmd_extract(cfg, opt);
  cli::cmd_train_gp(cfg, opt);

  features::FeatureConfig fcfg;
  fcfg.families = {features::Family::kCommon};
  std::vector<features::FeatureRecord> records = {
      {"bad", std::nullopt, std::nullopt, {1.0, 2.0}}};
  const fs::path bad_store = opt.out_dir / "bad_features.jsonl";
  features::write_feature_store(bad_store, cfg.fingerprint(), fcfg,
                                {"common.accuracy", "common.entropy"},
                                records);
  try {
    cli::cmd_infer(cfg, opt, bad_store);
    FAIL("expected FeatureSchemaMismatch");
  } catch (const FeatureSchemaMismatch& e) {
    CHECK(std::string(e.what()).find("common.loss") != std::string::npos);
  }
  fs::remove_all(opt.out_dir);
}

TEST_CASE("missing csv path surfaces exit code 2 with the path named") {
  const fs::path dir = fresh_dir("exitcode");
  const fs::path cfg_path = dir / "cfg.json";
  json doc = tiny_config_json();
  doc["data"]["member"] = {{"type", "csv"}, {"path", "/nonexistent/x.csv"}};
  serde::save_json_file(cfg_path, doc);

  const std::string out = (dir / "out").string();
  std::vector<std::string> args = {"gpmia", "train-target", "--config",
                                   cfg_path.string(), "--out", out};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  const int code =
      cli::run_cli(static_cast<int>(argv.size()), argv.data());
  CHECK(code == 2);
  fs::remove_all(dir);
}

TEST_CASE("ntk family flows through the pipeline") {
  json doc = tiny_config_json();
  doc["features"] = {{"families", {"common", "grad", "ntk"}},
                     {"finetune_epochs", 2},
                     {"ntk_ref_size", 16},
                     {"ntk_lambda", 1e-3}};
  const ExperimentConfig cfg = ExperimentConfig::from_json(doc);
  StageOptions opt;
  opt.out_dir = fresh_dir("ntk_pipeline");
  cli::cmd_train_target(cfg, opt);
  cli::cmd_extract(cfg, opt);
  const features::LoadedFeatureStore store =
      features::read_feature_store(opt.out_dir / "train_features.jsonl");
  CHECK(store.feature_names.size() == 17);
  CHECK(store.feature_names.back() == "ntk.s_mean");
  cli::cmd_train_gp(cfg, opt);
  cli::cmd_infer(cfg, opt);
  CHECK(fs::exists(opt.out_dir / "scores.jsonl"));
  fs::remove_all(opt.out_dir);
}

TEST_CASE("extraction output is independent of the thread budget") {
  const ExperimentConfig cfg = tiny_config();
  StageOptions a, b;
  a.out_dir = fresh_dir("threads1");
  b.out_dir = fresh_dir("threads4");
  setenv("GPMIA_THREADS", "1", 1);
  cli::cmd_train_target(cfg, a);
  cli::cmd_extract(cfg, a);
  setenv("GPMIA_THREADS", "4", 1);
  cli::cmd_train_target(cfg, b);
  cli::cmd_extract(cfg, b);
  unsetenv("GPMIA_THREADS");
  CHECK(serde::read_text_file(a.out_dir / "train_features.jsonl") ==
        serde::read_text_file(b.out_dir / "train_features.jsonl"));
  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
}

TEST_CASE("exp1 target training reaches the accuracy floor") {
  const fs::path dir = fresh_dir("exp1_target");
  const ExperimentConfig cfg = cli::builtin_experiment("exp1", 42, dir);
  StageOptions opt;
  opt.out_dir = dir;
  cli::cmd_train_target(cfg, opt);
  const nnet::TargetModel model = nnet::load_model(dir / "model.json");
  // Regenerate the member pool the stage trained on.
  datagen::SynthConfig synth = cfg.member.synth;
  synth.seed = derive_seed(cfg.seed, "data.member");
  const datagen::Dataset member = datagen::generate(synth);
  CHECK(nnet::accuracy(model, member) >= 0.7);
  fs::remove_all(dir);
}

TEST_CASE("builtin experiments are constructible") {
  const fs::path dir = fresh_dir("builtin");
  const ExperimentConfig exp1 = cli::builtin_experiment("exp1", 42, dir);
  CHECK(exp1.candidates.size() == 3);
  CHECK(!exp1.augment_non_member.has_value());
  const ExperimentConfig exp2 = cli::builtin_experiment("exp2", 42, dir);
  CHECK(exp2.augment_non_member.has_value());
  CHECK(exp1.fingerprint() != exp2.fingerprint());
  CHECK_THROWS_AS(cli::builtin_experiment("nope", 1, dir), ConfigError);
  fs::remove_all(dir);
}

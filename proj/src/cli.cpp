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

#include "gpmia/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "gpmia/errors.hpp"
#include "gpmia/evalkit.hpp"
#include "gpmia/rng.hpp"
#include "gpmia/serde.hpp"

namespace gpmia::cli {

namespace {

using nlohmann::json;

constexpr const char* kModelFile = "model.json";
constexpr const char* kTrainFeaturesFile = "train_features.jsonl";
constexpr const char* kCandidateFeaturesFile = "candidate_features.jsonl";
constexpr const char* kHoldoutFeaturesFile = "holdout_features.jsonl";
constexpr const char* kPosteriorFile = "posterior.json";
constexpr const char* kScoresFile = "scores.jsonl";
constexpr const char* kReportFile = "report.json";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kConfigEcho = "config.json";

// ---------------------------------------------------------------------------
// Config <-> JSON

json source_to_json(const DataSource& src) {
  json doc;
  if (src.kind == DataSource::Kind::kSynthetic) {
    doc["type"] = "synthetic";
    doc["n_samples"] = src.synth.n_samples;
    doc["n_features"] = src.synth.n_features;
    doc["class_sep"] = src.synth.class_sep;
    doc["flip_prob"] = src.synth.flip_prob;
    doc["class_weights"] = {src.synth.class_weights.first,
                            src.synth.class_weights.second};
    if (src.synth_seed_set) doc["seed"] = src.synth.seed;
  } else {
    doc["type"] = "csv";
    doc["path"] = src.csv_path.string();
    doc["label_column"] = src.label_column;
  }
  return doc;
}

DataSource source_from_json(const json& doc, const std::string& context) {
  DataSource src;
  if (!doc.is_object() || !doc.contains("type")) {
    throw ConfigError(context + ": data source needs a \"type\"");
  }
  const std::string type = doc.at("type").get<std::string>();
  if (type == "synthetic") {
    serde::reject_unknown_keys(doc,
                               {"type", "n_samples", "n_features", "class_sep",
                                "flip_prob", "class_weights", "seed"},
                               context);
    src.kind = DataSource::Kind::kSynthetic;
    src.synth.n_samples = doc.value("n_samples", src.synth.n_samples);
    src.synth.n_features = doc.value("n_features", src.synth.n_features);
    src.synth.class_sep = doc.value("class_sep", src.synth.class_sep);
    src.synth.flip_prob = doc.value("flip_prob", src.synth.flip_prob);
    if (doc.contains("class_weights")) {
      const auto w = doc.at("class_weights").get<std::vector<double>>();
      if (w.size() != 2) {
        throw ConfigError(context + ": class_weights needs two entries");
      }
      src.synth.class_weights = {w[0], w[1]};
    }
    if (doc.contains("seed")) {
      src.synth.seed = doc.at("seed").get<std::uint64_t>();
      src.synth_seed_set = true;
    }
    src.synth.validate();
  } else if (type == "csv") {
    serde::reject_unknown_keys(doc, {"type", "path", "label_column"}, context);
    src.kind = DataSource::Kind::kCsv;
    src.csv_path = doc.at("path").get<std::string>();
    src.label_column = doc.value("label_column", std::string("label"));
  } else {
    throw ConfigError(context + ": unknown data source type \"" + type + "\"");
  }
  return src;
}

std::string candidate_source_name(CandidateGroup::Source s) {
  switch (s) {
    case CandidateGroup::Source::kMemberPool: return "member_pool";
    case CandidateGroup::Source::kNonMemberPool: return "non_member_pool";
    default: return "dataset";
  }
}

}  // namespace

json ExperimentConfig::to_json() const {
  json doc;
  doc["seed"] = seed;
  if (!out_dir.empty()) doc["out_dir"] = out_dir.string();
  doc["target"] = {
      {"arch",
       {{"input_dim", arch.input_dim},
        {"hidden_dims", arch.hidden_dims},
        {"output_dim", arch.output_dim},
        {"activation", nnet::to_string(arch.activation)}}},
      {"train",
       {{"epochs", train.epochs},
        {"batch_size", train.batch_size},
        {"learning_rate", train.learning_rate},
        {"optimizer", nnet::to_string(train.optimizer)}}}};
  doc["data"] = {{"member", source_to_json(member)},
                 {"non_member", source_to_json(non_member)}};
  if (augment_non_member.has_value()) {
    doc["data"]["augment_non_member"] = {
        {"source", source_to_json(augment_non_member->first)},
        {"units", augment_non_member->second}};
  }
  doc["units"] = {{"unit_size", units.unit_size},
                  {"member_units", units.member_units},
                  {"non_member_units", units.non_member_units},
                  {"stratified", units.stratified}};
  std::vector<std::string> fams;
  for (features::Family f : feature_cfg.families) {
    fams.push_back(features::to_string(f));
  }
  doc["features"] = {{"families", fams},
                     {"finetune_epochs", feature_cfg.finetune_epochs},
                     {"finetune_lr", feature_cfg.finetune_lr},
                     {"ntk_lambda", feature_cfg.ntk_lambda},
                     {"ntk_ref_size", feature_cfg.ntk_ref_size}};
  doc["gp"] = {{"signal_variance", gp.signal_variance},
               {"lengthscale", gp.lengthscale},
               {"noise_variance", gp.noise_variance},
               {"optimizer_steps", gp.optimizer_steps},
               {"holdout_fraction", gp.holdout_fraction}};
  json cands = json::array();
  for (const auto& c : candidates) {
    json cj = {{"name", c.name},
               {"source", candidate_source_name(c.source)},
               {"units", c.units},
               {"unit_size", c.unit_size},
               {"label", c.label}};
    if (c.source == CandidateGroup::Source::kDataset) {
      cj["data"] = source_to_json(c.data);
    }
    cands.push_back(std::move(cj));
  }
  doc["candidates"] = std::move(cands);
  doc["eval"] = {{"fpr_targets", eval.fpr_targets},
                 {"threshold", eval.threshold}};
  return doc;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  serde::reject_unknown_keys(
      doc,
      {"seed", "out_dir", "target", "data", "units", "features", "gp",
       "candidates", "eval"},
      "config");
  if (!doc.contains("seed")) {
    throw ConfigError("config: \"seed\" is mandatory");
  }
  ExperimentConfig cfg;
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("out_dir")) {
    cfg.out_dir = doc.at("out_dir").get<std::string>();
  }

  cfg.arch.input_dim = 10;
  cfg.arch.hidden_dims = {64, 32};
  cfg.arch.output_dim = 2;
  cfg.arch.activation = nnet::Activation::kRelu;
  cfg.train.epochs = 100;
  cfg.train.batch_size = 64;
  cfg.train.learning_rate = 0.01;
  cfg.train.optimizer = nnet::Optimizer::kAdam;
  if (doc.contains("target")) {
    const json& t = doc.at("target");
    serde::reject_unknown_keys(t, {"arch", "train"}, "config.target");
    if (t.contains("arch")) {
      const json& a = t.at("arch");
      serde::reject_unknown_keys(
          a, {"input_dim", "hidden_dims", "output_dim", "activation"},
          "config.target.arch");
      cfg.arch.input_dim = a.value("input_dim", cfg.arch.input_dim);
      if (a.contains("hidden_dims")) {
        cfg.arch.hidden_dims =
            a.at("hidden_dims").get<std::vector<std::size_t>>();
      }
      cfg.arch.output_dim = a.value("output_dim", cfg.arch.output_dim);
      if (a.contains("activation")) {
        cfg.arch.activation =
            nnet::activation_from_string(a.at("activation").get<std::string>());
      }
    }
    if (t.contains("train")) {
      const json& tr = t.at("train");
      serde::reject_unknown_keys(
          tr, {"epochs", "batch_size", "learning_rate", "optimizer"},
          "config.target.train");
      cfg.train.epochs = tr.value("epochs", cfg.train.epochs);
      cfg.train.batch_size = tr.value("batch_size", cfg.train.batch_size);
      cfg.train.learning_rate =
          tr.value("learning_rate", cfg.train.learning_rate);
      if (tr.contains("optimizer")) {
        cfg.train.optimizer =
            nnet::optimizer_from_string(tr.at("optimizer").get<std::string>());
      }
    }
  }
  cfg.arch.validate();
  cfg.train.validate();

  if (!doc.contains("data")) throw ConfigError("config: \"data\" is mandatory");
  const json& data = doc.at("data");
  serde::reject_unknown_keys(data, {"member", "non_member",
                                    "augment_non_member"},
                             "config.data");
  if (!data.contains("member") || !data.contains("non_member")) {
    throw ConfigError("config.data needs \"member\" and \"non_member\"");
  }
  cfg.member = source_from_json(data.at("member"), "config.data.member");
  cfg.non_member =
      source_from_json(data.at("non_member"), "config.data.non_member");
  if (data.contains("augment_non_member")) {
    const json& aug = data.at("augment_non_member");
    serde::reject_unknown_keys(aug, {"source", "units"},
                               "config.data.augment_non_member");
    cfg.augment_non_member = {
        source_from_json(aug.at("source"), "config.data.augment_non_member"),
        aug.at("units").get<std::size_t>()};
  }

  if (doc.contains("units")) {
    const json& u = doc.at("units");
    serde::reject_unknown_keys(
        u, {"unit_size", "member_units", "non_member_units", "stratified"},
        "config.units");
    cfg.units.unit_size = u.value("unit_size", cfg.units.unit_size);
    cfg.units.member_units = u.value("member_units", cfg.units.member_units);
    cfg.units.non_member_units =
        u.value("non_member_units", cfg.units.non_member_units);
    cfg.units.stratified = u.value("stratified", cfg.units.stratified);
  }

  cfg.feature_cfg.finetune_lr = 0.1 * cfg.train.learning_rate;
  if (doc.contains("features")) {
    const json& f = doc.at("features");
    serde::reject_unknown_keys(f,
                               {"families", "finetune_epochs", "finetune_lr",
                                "ntk_lambda", "ntk_ref_size"},
                               "config.features");
    if (f.contains("families")) {
      cfg.feature_cfg.families.clear();
      for (const auto& name : f.at("families")) {
        cfg.feature_cfg.families.insert(
            features::family_from_string(name.get<std::string>()));
      }
    }
    cfg.feature_cfg.finetune_epochs =
        f.value("finetune_epochs", cfg.feature_cfg.finetune_epochs);
    cfg.feature_cfg.finetune_lr =
        f.value("finetune_lr", cfg.feature_cfg.finetune_lr);
    cfg.feature_cfg.ntk_lambda =
        f.value("ntk_lambda", cfg.feature_cfg.ntk_lambda);
    cfg.feature_cfg.ntk_ref_size =
        f.value("ntk_ref_size", cfg.feature_cfg.ntk_ref_size);
  }
  cfg.feature_cfg.validate();

  if (doc.contains("gp")) {
    const json& g = doc.at("gp");
    serde::reject_unknown_keys(g,
                               {"signal_variance", "lengthscale",
                                "noise_variance", "optimizer_steps",
                                "holdout_fraction"},
                               "config.gp");
    cfg.gp.signal_variance = g.value("signal_variance", cfg.gp.signal_variance);
    cfg.gp.lengthscale = g.value("lengthscale", cfg.gp.lengthscale);
    cfg.gp.noise_variance = g.value("noise_variance", cfg.gp.noise_variance);
    cfg.gp.optimizer_steps = g.value("optimizer_steps", cfg.gp.optimizer_steps);
    cfg.gp.holdout_fraction =
        g.value("holdout_fraction", cfg.gp.holdout_fraction);
    if (cfg.gp.holdout_fraction < 0.0 || cfg.gp.holdout_fraction >= 1.0) {
      throw ConfigError("config.gp.holdout_fraction must lie in [0, 1)");
    }
  }

  if (doc.contains("candidates")) {
    for (const json& cj : doc.at("candidates")) {
      serde::reject_unknown_keys(
          cj, {"name", "source", "data", "units", "unit_size", "label"},
          "config.candidates[]");
      CandidateGroup c;
      c.name = cj.at("name").get<std::string>();
      const std::string source = cj.value("source", std::string("dataset"));
      if (source == "member_pool") {
        c.source = CandidateGroup::Source::kMemberPool;
        c.label = 1;
      } else if (source == "non_member_pool") {
        c.source = CandidateGroup::Source::kNonMemberPool;
        c.label = 0;
      } else if (source == "dataset") {
        c.source = CandidateGroup::Source::kDataset;
        c.data = source_from_json(cj.at("data"),
                                  "config.candidates." + c.name);
        c.label = 0;
      } else {
        throw ConfigError("config.candidates." + c.name +
                          ": unknown source \"" + source + "\"");
      }
      c.units = cj.value("units", c.units);
      c.unit_size = cj.value("unit_size", cfg.units.unit_size);
      c.label = cj.value("label", c.label);
      if (c.label != 0 && c.label != 1) {
        throw ConfigError("config.candidates." + c.name +
                          ": label must be 0 or 1");
      }
      cfg.candidates.push_back(std::move(c));
    }
  }

  if (doc.contains("eval")) {
    const json& e = doc.at("eval");
    serde::reject_unknown_keys(e, {"fpr_targets", "threshold"}, "config.eval");
    if (e.contains("fpr_targets")) {
      cfg.eval.fpr_targets = e.at("fpr_targets").get<std::vector<double>>();
    }
    cfg.eval.threshold = e.value("threshold", cfg.eval.threshold);
  }
  return cfg;
}

std::string ExperimentConfig::fingerprint() const {
  return serde::fnv1a_hex(to_json().dump());
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return ExperimentConfig::from_json(serde::load_json_file(path));
}

namespace {

// ---------------------------------------------------------------------------
// Stage plumbing

datagen::Dataset resolve_dataset(const DataSource& src,
                                 const ExperimentConfig& cfg,
                                 const std::string& role) {
  if (src.kind == DataSource::Kind::kSynthetic) {
    datagen::SynthConfig synth = src.synth;
    if (!src.synth_seed_set) {
      synth.seed = derive_seed(cfg.seed, "data." + role);
    }
    return datagen::generate(synth);
  }
  if (!std::filesystem::exists(src.csv_path)) {
    throw IoError("CSV not found for " + role + ": " + src.csv_path.string());
  }
  return datagen::load_csv(src.csv_path, src.label_column);
}

bool artifact_fresh(const std::filesystem::path& path,
                    const std::string& fingerprint) {
  if (!std::filesystem::exists(path)) return false;
  try {
    if (path.extension() == ".jsonl") {
      std::ifstream in(path);
      std::string line;
      if (!std::getline(in, line)) return false;
      const json header = json::parse(line, nullptr, false);
      return !header.is_discarded() &&
             header.value("fingerprint", "") == fingerprint;
    }
    const json doc = serde::load_json_file(path);
    return doc.value("fingerprint", "") == fingerprint;
  } catch (const Error&) {
    return false;
  }
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void update_manifest(const StageOptions& opt, const std::string& fingerprint,
                     const std::string& stage, const std::string& artifact) {
  const auto path = opt.out_dir / kManifestFile;
  json doc;
  if (std::filesystem::exists(path)) {
    try {
      doc = serde::load_json_file(path);
    } catch (const Error&) {
      doc = json::object();
    }
  }
  doc["format"] = "gpmia.manifest";
  doc["version"] = 1;
  doc["tool_version"] = kToolVersion;
  doc["fingerprint"] = fingerprint;
  doc["artifacts"][stage] = artifact;
  doc["timestamps"][stage] = now_iso8601();
  serde::save_json_file(path, doc);
}

void write_config_echo(const ExperimentConfig& cfg, const StageOptions& opt) {
  std::filesystem::create_directories(opt.out_dir);
  serde::save_json_file(opt.out_dir / kConfigEcho, cfg.to_json());
}

void check_fingerprint(const std::string& artifact_fp,
                       const std::string& config_fp,
                       const std::string& artifact, bool force) {
  if (artifact_fp != config_fp && !force) {
    throw ConfigError(artifact + " was produced by config " + artifact_fp +
                      ", current config is " + config_fp +
                      " (use --force to override)");
  }
}

std::size_t extraction_threads(std::size_t n_units) {
  std::size_t n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("GPMIA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, std::min(n, n_units));
}

struct UnitJob {
  features::AuditUnit unit;
  std::optional<int> label;
  std::optional<std::string> group;
};

// Fans unit extraction out to a small worker pool; results keep job order so
// output is independent of scheduling.
std::vector<features::FeatureRecord> extract_units(
    const nnet::TargetModel& model, const std::vector<UnitJob>& jobs,
    const features::FeatureConfig& fcfg, const features::NtkContext* ctx,
    std::vector<std::string>* feature_names,
    std::vector<std::string>* warnings) {
  std::vector<features::FeatureRecord> records(jobs.size());
  std::vector<std::vector<std::string>> names(jobs.size());
  std::vector<std::vector<std::string>> warns(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string first_error;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        features::FeatureVector fv =
            features::extract(model, jobs[i].unit, fcfg, ctx, &warns[i]);
        records[i].unit_id = fv.unit_id;
        records[i].label = jobs[i].label;
        records[i].group = jobs[i].group;
        records[i].values = std::move(fv.values);
        names[i] = std::move(fv.names);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) {
          first_error = "unit " + jobs[i].unit.unit_id + ": " + e.what();
        }
      }
    }
  };

  const std::size_t n_threads = extraction_threads(jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (!first_error.empty()) {
    throw Error("feature extraction failed: " + first_error);
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (names[i] != names[0]) {
      throw FeatureSchemaMismatch("inconsistent feature names across units");
    }
    for (const auto& w : warns[i]) {
      if (warnings) warnings->push_back(w);
    }
  }
  if (feature_names && !jobs.empty()) *feature_names = names[0];
  return records;
}

std::vector<UnitJob> candidate_jobs(const ExperimentConfig& cfg,
                                    const datagen::Dataset& member,
                                    const datagen::Dataset& non_member) {
  std::vector<UnitJob> jobs;
  for (const auto& group : cfg.candidates) {
    std::vector<features::AuditUnit> units;
    const std::uint64_t seed = derive_seed(cfg.seed, "candidate." + group.name);
    switch (group.source) {
      case CandidateGroup::Source::kMemberPool:
        units = datagen::make_units(member, group.unit_size, group.units, seed,
                                    group.name, false);
        break;
      case CandidateGroup::Source::kNonMemberPool:
        units = datagen::make_units(non_member, group.unit_size, group.units,
                                    seed, group.name, false);
        break;
      case CandidateGroup::Source::kDataset: {
        const datagen::Dataset ds =
            resolve_dataset(group.data, cfg, "candidate." + group.name);
        units = datagen::make_units(ds, group.unit_size, group.units, seed,
                                    group.name, false);
        break;
      }
    }
    for (auto& u : units) {
      jobs.push_back({std::move(u), group.label, group.name});
    }
  }
  return jobs;
}

struct ScoreRow {
  std::string unit_id;
  std::optional<std::string> group;
  std::optional<int> label;
  double probability = 0.0;
  double latent_mean = 0.0;
  double latent_variance = 0.0;
};

void write_scores(const std::filesystem::path& path,
                  const std::string& fingerprint,
                  const std::vector<ScoreRow>& rows) {
  std::ostringstream out;
  json header;
  header["format"] = "gpmia.scores";
  header["version"] = 1;
  header["fingerprint"] = fingerprint;
  out << header.dump() << "\n";
  for (const auto& r : rows) {
    out << "{\"unit_id\":" << json(r.unit_id).dump();
    if (r.group.has_value()) out << ",\"group\":" << json(*r.group).dump();
    out << ",\"label\":";
    if (r.label.has_value()) out << *r.label;
    else out << "null";
    out << ",\"probability\":" << serde::real17(r.probability)
        << ",\"latent_mean\":" << serde::real17(r.latent_mean)
        << ",\"latent_variance\":" << serde::real17(r.latent_variance) << "}\n";
  }
  serde::write_text_file(path, out.str());
}

std::pair<std::string, std::vector<ScoreRow>> read_scores(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scores: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty scores: " + path.string());
  const json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "gpmia.scores") {
    throw IoError("not a gpmia.scores file: " + path.string());
  }
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) {
      throw IoError("invalid scores row in " + path.string());
    }
    ScoreRow r;
    r.unit_id = rec.at("unit_id").get<std::string>();
    if (rec.contains("group")) r.group = rec.at("group").get<std::string>();
    if (!rec.at("label").is_null()) r.label = rec.at("label").get<int>();
    r.probability = rec.at("probability").get<double>();
    r.latent_mean = rec.at("latent_mean").get<double>();
    r.latent_variance = rec.at("latent_variance").get<double>();
    rows.push_back(std::move(r));
  }
  return {header.value("fingerprint", ""), std::move(rows)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages

void cmd_train_target(const ExperimentConfig& cfg, const StageOptions& opt) {
  const std::string fp = cfg.fingerprint();
  write_config_echo(cfg, opt);
  const auto model_path = opt.out_dir / kModelFile;
  if (!opt.force && artifact_fresh(model_path, fp)) {
    std::cout << "[skip] " << kModelFile << " is up to date\n";
    return;
  }
  const datagen::Dataset member = resolve_dataset(cfg.member, cfg, "member");
  if (member.dim() != cfg.arch.input_dim) {
    throw ConfigError("member data has " + std::to_string(member.dim()) +
                      " features, architecture expects " +
                      std::to_string(cfg.arch.input_dim));
  }
  nnet::TargetModel init =
      nnet::TargetModel::initialize(cfg.arch, derive_seed(cfg.seed, "model_init"));
  nnet::TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  const nnet::TargetModel model = nnet::train(init, member, tc);
  const double acc = nnet::accuracy(model, member);
  std::cout << "trained target model: accuracy " << acc << " on "
            << member.size() << " member samples\n";
  nnet::save_model(model, model_path, fp);
  update_manifest(opt, fp, "train_target", kModelFile);
}

void cmd_extract(const ExperimentConfig& cfg, const StageOptions& opt) {
  const std::string fp = cfg.fingerprint();
  write_config_echo(cfg, opt);
  const auto train_path = opt.out_dir / kTrainFeaturesFile;
  const auto cand_path = opt.out_dir / kCandidateFeaturesFile;
  const bool want_candidates = !cfg.candidates.empty();
  if (!opt.force && artifact_fresh(train_path, fp) &&
      (!want_candidates || artifact_fresh(cand_path, fp))) {
    std::cout << "[skip] feature stores are up to date\n";
    return;
  }

  const auto model_path = opt.out_dir / kModelFile;
  if (!std::filesystem::exists(model_path)) {
    throw IoError("model artifact missing: " + model_path.string() +
                  " (run train-target first)");
  }
  std::string model_fp;
  const nnet::TargetModel model = nnet::load_model(model_path, &model_fp);
  check_fingerprint(model_fp, fp, kModelFile, opt.force);

  const datagen::Dataset member = resolve_dataset(cfg.member, cfg, "member");
  const datagen::Dataset non_member =
      resolve_dataset(cfg.non_member, cfg, "non_member");

  std::vector<UnitJob> train_jobs;
  for (auto& u : datagen::make_units(member, cfg.units.unit_size,
                                     cfg.units.member_units,
                                     derive_seed(cfg.seed, "units.member"),
                                     "member", cfg.units.stratified)) {
    train_jobs.push_back({std::move(u), 1, std::nullopt});
  }
  for (auto& u : datagen::make_units(non_member, cfg.units.unit_size,
                                     cfg.units.non_member_units,
                                     derive_seed(cfg.seed, "units.non_member"),
                                     "non_member", cfg.units.stratified)) {
    train_jobs.push_back({std::move(u), 0, std::nullopt});
  }
  if (cfg.augment_non_member.has_value()) {
    const datagen::Dataset aug =
        resolve_dataset(cfg.augment_non_member->first, cfg, "augment");
    for (auto& u : datagen::make_units(aug, cfg.units.unit_size,
                                       cfg.augment_non_member->second,
                                       derive_seed(cfg.seed, "units.augment"),
                                       "augment", cfg.units.stratified)) {
      train_jobs.push_back({std::move(u), 0, std::nullopt});
    }
  }

  // NTK reference set: seeded subsample of the member pool feeding the
  // GP-training units.
  features::NtkContext ctx;
  const features::NtkContext* ctx_ptr = nullptr;
  if (cfg.feature_cfg.families.count(features::Family::kNtk)) {
    Rng rng(derive_seed(cfg.seed, "ntk.reference"));
    std::vector<std::size_t> idx(member.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    const std::size_t r =
        std::min<std::size_t>(cfg.feature_cfg.ntk_ref_size, member.size());
    idx.resize(r);
    std::sort(idx.begin(), idx.end());
    const datagen::Dataset ref_rows = datagen::take_rows(member, idx);
    features::AuditUnit ref;
    ref.samples = ref_rows.samples;
    ref.labels = ref_rows.labels;
    ref.unit_id = "ntk_reference";
    ctx = features::build_ntk_context(model, ref, cfg.feature_cfg.ntk_lambda);
    ctx_ptr = &ctx;
  }

  std::vector<std::string> warnings;
  std::vector<std::string> names;
  const auto train_records = extract_units(model, train_jobs, cfg.feature_cfg,
                                           ctx_ptr, &names, &warnings);
  features::write_feature_store(train_path, fp, cfg.feature_cfg, names,
                                train_records);
  std::cout << "extracted " << train_records.size() << " training units x "
            << names.size() << " features\n";

  if (want_candidates) {
    const std::vector<UnitJob> jobs = candidate_jobs(cfg, member, non_member);
    std::vector<std::string> cand_names;
    const auto cand_records = extract_units(model, jobs, cfg.feature_cfg,
                                            ctx_ptr, &cand_names, &warnings);
    if (cand_names != names) {
      throw FeatureSchemaMismatch(
          "candidate features disagree with training features");
    }
    features::write_feature_store(cand_path, fp, cfg.feature_cfg, names,
                                  cand_records);
    std::cout << "extracted " << cand_records.size() << " candidate units\n";
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  update_manifest(opt, fp, "extract", kTrainFeaturesFile);
}

void cmd_train_gp(const ExperimentConfig& cfg, const StageOptions& opt) {
  const std::string fp = cfg.fingerprint();
  write_config_echo(cfg, opt);
  const auto posterior_path = opt.out_dir / kPosteriorFile;
  if (!opt.force && artifact_fresh(posterior_path, fp)) {
    std::cout << "[skip] " << kPosteriorFile << " is up to date\n";
    return;
  }

  const auto train_path = opt.out_dir / kTrainFeaturesFile;
  if (!std::filesystem::exists(train_path)) {
    throw IoError("feature store missing: " + train_path.string() +
                  " (run extract first)");
  }
  features::LoadedFeatureStore store = features::read_feature_store(train_path);
  check_fingerprint(store.fingerprint, fp, kTrainFeaturesFile, opt.force);

  std::vector<features::FeatureRecord> labeled;
  for (auto& rec : store.records) {
    if (rec.label.has_value()) labeled.push_back(std::move(rec));
  }
  if (labeled.empty()) {
    throw InsufficientData("no labeled records in " + train_path.string());
  }

  // Optional stratified holdout, written out for infer/eval.
  std::vector<features::FeatureRecord> holdout;
  if (cfg.gp.holdout_fraction > 0.0) {
    Rng rng(derive_seed(cfg.seed, "gp.holdout"));
    std::vector<features::FeatureRecord> keep;
    for (int label : {0, 1}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < labeled.size(); ++i) {
        if (*labeled[i].label == label) idx.push_back(i);
      }
      rng.shuffle(idx);
      const std::size_t n_hold = static_cast<std::size_t>(
          std::llround(cfg.gp.holdout_fraction * static_cast<double>(idx.size())));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        (k < n_hold ? holdout : keep).push_back(labeled[idx[k]]);
      }
    }
    labeled = std::move(keep);
    features::write_feature_store(opt.out_dir / kHoldoutFeaturesFile, fp,
                                  cfg.feature_cfg, store.feature_names,
                                  holdout);
    std::cout << "held out " << holdout.size() << " units for validation\n";
  }

  std::vector<features::FeatureVector> raw;
  raw.reserve(labeled.size());
  for (const auto& rec : labeled) {
    raw.push_back({rec.values, store.feature_names, rec.unit_id});
  }
  const features::Standardizer standardizer = features::fit_standardizer(raw);

  gpc::GpTrainingSet train;
  train.features = linops::Matrix(labeled.size(), store.feature_names.size());
  train.labels.resize(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const features::FeatureVector z = features::apply(standardizer, raw[i]);
    for (std::size_t j = 0; j < z.values.size(); ++j) {
      train.features(i, j) = z.values[j];
    }
    train.labels[i] = *labeled[i].label;
  }

  gpc::GpHyperparams init;
  init.signal_variance = cfg.gp.signal_variance;
  init.lengthscale = cfg.gp.lengthscale > 0.0
                         ? cfg.gp.lengthscale
                         : std::sqrt(static_cast<double>(train.dim()));
  init.noise_variance = cfg.gp.noise_variance;

  const double evidence_init = gpc::fit_laplace(train, init).log_marginal;
  const gpc::GpHyperparams tuned =
      gpc::optimize_hyperparams(train, init, cfg.gp.optimizer_steps);
  const gpc::GpPosterior posterior = gpc::fit_laplace(train, tuned);
  std::cout << "GP evidence " << evidence_init << " -> "
            << posterior.log_marginal << " over " << train.size()
            << " units\n";

  json doc = gpc::posterior_to_json(posterior, fp);
  doc["feature_names"] = store.feature_names;
  doc["standardizer"] = {{"means", standardizer.means},
                         {"stds", standardizer.stds}};
  serde::save_json_file(posterior_path, doc);
  update_manifest(opt, fp, "train_gp", kPosteriorFile);
}

void cmd_infer(const ExperimentConfig& cfg, const StageOptions& opt,
               const std::optional<std::filesystem::path>& features_file) {
  const std::string fp = cfg.fingerprint();
  write_config_echo(cfg, opt);
  const auto scores_path = opt.out_dir / kScoresFile;
  if (!opt.force && artifact_fresh(scores_path, fp)) {
    std::cout << "[skip] " << kScoresFile << " is up to date\n";
    return;
  }

  const auto posterior_path = opt.out_dir / kPosteriorFile;
  if (!std::filesystem::exists(posterior_path)) {
    throw IoError("posterior artifact missing: " + posterior_path.string() +
                  " (run train-gp first)");
  }
  const json doc = serde::load_json_file(posterior_path);
  std::string posterior_fp;
  const gpc::GpPosterior posterior = gpc::posterior_from_json(doc, &posterior_fp);
  check_fingerprint(posterior_fp, fp, kPosteriorFile, opt.force);
  const auto names = doc.at("feature_names").get<std::vector<std::string>>();
  features::Standardizer standardizer;
  standardizer.means =
      doc.at("standardizer").at("means").get<std::vector<double>>();
  standardizer.stds =
      doc.at("standardizer").at("stds").get<std::vector<double>>();

  std::filesystem::path store_path;
  if (features_file.has_value()) {
    store_path = *features_file;
  } else if (cfg.gp.holdout_fraction > 0.0) {
    store_path = opt.out_dir / kHoldoutFeaturesFile;
  } else {
    store_path = opt.out_dir / kCandidateFeaturesFile;
  }
  if (!std::filesystem::exists(store_path)) {
    throw IoError("candidate feature store missing: " + store_path.string());
  }
  const features::LoadedFeatureStore store =
      features::read_feature_store(store_path);
  check_fingerprint(store.fingerprint, fp, store_path.filename().string(),
                    opt.force);
  if (store.feature_names != names) {
    std::string missing;
    for (const auto& n : names) {
      if (std::find(store.feature_names.begin(), store.feature_names.end(),
                    n) == store.feature_names.end()) {
        missing += missing.empty() ? n : ", " + n;
      }
    }
    throw FeatureSchemaMismatch(
        "feature schema mismatch between posterior and " +
        store_path.filename().string() +
        (missing.empty() ? " (order differs)" : ": missing " + missing));
  }

  std::vector<ScoreRow> rows;
  rows.reserve(store.records.size());
  for (const auto& rec : store.records) {
    features::FeatureVector fv{rec.values, names, rec.unit_id};
    const features::FeatureVector z = features::apply(standardizer, fv);
    const gpc::MembershipPrediction pred = gpc::predict(posterior, z.values);
    ScoreRow row;
    row.unit_id = rec.unit_id;
    row.group = rec.group;
    row.label = rec.label;
    row.probability = pred.probability;
    row.latent_mean = pred.latent_mean;
    row.latent_variance = pred.latent_variance;
    rows.push_back(std::move(row));
  }
  write_scores(scores_path, fp, rows);
  std::cout << "scored " << rows.size() << " units\n";
  update_manifest(opt, fp, "infer", kScoresFile);
}

void cmd_eval(const ExperimentConfig& cfg, const StageOptions& opt,
              const std::optional<std::filesystem::path>& scores_file) {
  const std::string fp = cfg.fingerprint();
  write_config_echo(cfg, opt);
  const auto report_path = opt.out_dir / kReportFile;
  if (!opt.force && artifact_fresh(report_path, fp)) {
    std::cout << "[skip] " << kReportFile << " is up to date\n";
    return;
  }

  const auto scores_path =
      scores_file.value_or(opt.out_dir / kScoresFile);
  if (!std::filesystem::exists(scores_path)) {
    throw IoError("scores missing: " + scores_path.string() +
                  " (run infer first)");
  }
  const auto [scores_fp, rows] = read_scores(scores_path);
  check_fingerprint(scores_fp, fp, kScoresFile, opt.force);

  std::vector<evalkit::ScoredUnit> scored;
  scored.reserve(rows.size());
  for (const auto& r : rows) {
    if (!r.label.has_value()) {
      throw InvalidArgument("unit " + r.unit_id +
                            " has no membership label; eval needs labels");
    }
    scored.push_back({r.unit_id, r.probability, *r.label});
  }
  const evalkit::EvalReport report =
      evalkit::evaluate(scored, cfg.eval.fpr_targets, cfg.eval.threshold);

  std::vector<std::pair<std::string, evalkit::GroupStat>> groups;
  {
    std::vector<std::string> order;
    for (const auto& r : rows) {
      if (r.group.has_value() &&
          std::find(order.begin(), order.end(), *r.group) == order.end()) {
        order.push_back(*r.group);
      }
    }
    for (const auto& name : order) {
      std::vector<double> probs;
      for (const auto& r : rows) {
        if (r.group == name) probs.push_back(r.probability);
      }
      groups.emplace_back(name, evalkit::group_stat(probs));
    }
  }
  evalkit::save_report(report, scored, report_path, fp, groups);

  std::cout << "auroc " << report.auroc << ", aupr " << report.aupr;
  for (const auto& [target, tpr] : report.tpr_at_fpr) {
    std::cout << ", tpr@" << target * 100 << "%fpr " << tpr;
  }
  std::cout << "\nconfusion [[tn " << report.confusion.tn << ", fp "
            << report.confusion.fp << "], [fn " << report.confusion.fn
            << ", tp " << report.confusion.tp << "]]\n";
  for (const auto& [name, stat] : groups) {
    std::cout << "group " << name << ": mean probability " << stat.mean
              << " (std " << stat.stddev << ", n " << stat.count << ")\n";
  }
  update_manifest(opt, fp, "eval", kReportFile);
}

void cmd_repro(const ExperimentConfig& cfg, const StageOptions& opt) {
  cmd_train_target(cfg, opt);
  cmd_extract(cfg, opt);
  cmd_train_gp(cfg, opt);
  cmd_infer(cfg, opt, {});
  cmd_eval(cfg, opt, {});
}

// ---------------------------------------------------------------------------
// Built-in experiments

namespace {

DataSource synthetic_source(std::size_t n, std::size_t d, double sep,
                            double flip, std::pair<double, double> weights) {
  DataSource src;
  src.kind = DataSource::Kind::kSynthetic;
  src.synth.n_samples = n;
  src.synth.n_features = d;
  src.synth.class_sep = sep;
  src.synth.flip_prob = flip;
  src.synth.class_weights = weights;
  return src;
}

ExperimentConfig synthetic_experiment(std::uint64_t seed, bool augmented) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.arch.input_dim = 10;
  // Trained into the generalizing regime on purpose: a wider or longer-run
  // MLP memorizes the 2000 member samples, and resampled same-distribution
  // data then no longer scores as member-like.
  cfg.arch.hidden_dims = {32, 16};
  cfg.arch.output_dim = 2;
  cfg.arch.activation = nnet::Activation::kRelu;
  cfg.train = {45, 64, 0.005, nnet::Optimizer::kAdam, 0};
  cfg.member = synthetic_source(2000, 10, 1.0, 0.0, {0.5, 0.5});
  cfg.non_member = synthetic_source(2000, 10, 5.0, 0.2, {0.8, 0.2});
  if (augmented) {
    cfg.augment_non_member = {synthetic_source(2000, 10, 3.0, 0.2, {0.5, 0.5}),
                              40};
  }
  cfg.units = {50, 40, 40, false};
  cfg.feature_cfg.families = {features::Family::kCommon};
  cfg.feature_cfg.finetune_epochs = 5;
  cfg.feature_cfg.finetune_lr = 0.0005;
  CandidateGroup member_subset;
  member_subset.name = "member_subset";
  member_subset.source = CandidateGroup::Source::kMemberPool;
  member_subset.units = 8;
  member_subset.unit_size = 50;
  member_subset.label = 1;
  CandidateGroup resampled;
  resampled.name = "resampled";
  resampled.source = CandidateGroup::Source::kDataset;
  resampled.data = synthetic_source(400, 10, 1.0, 0.0, {0.5, 0.5});
  resampled.units = 8;
  resampled.unit_size = 50;
  resampled.label = 0;
  CandidateGroup intermediate;
  intermediate.name = "intermediate";
  intermediate.source = CandidateGroup::Source::kDataset;
  intermediate.data = synthetic_source(400, 10, 3.0, 0.2, {0.8, 0.2});
  intermediate.units = 8;
  intermediate.unit_size = 50;
  intermediate.label = 0;
  cfg.candidates = {member_subset, resampled, intermediate};
  return cfg;
}

ExperimentConfig fraud_experiment(std::uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.arch.input_dim = 10;
  cfg.arch.hidden_dims = {64, 32};
  cfg.arch.output_dim = 2;
  cfg.arch.activation = nnet::Activation::kRelu;
  cfg.train = {300, 32, 0.01, nnet::Optimizer::kAdam, 0};
  cfg.member.kind = DataSource::Kind::kCsv;
  cfg.member.csv_path = out_dir / "member.csv";
  cfg.non_member.kind = DataSource::Kind::kCsv;
  cfg.non_member.csv_path = out_dir / "non_member.csv";
  cfg.units = {12, 60, 20, true};
  cfg.feature_cfg.families = {features::Family::kCommon};
  cfg.feature_cfg.finetune_epochs = 5;
  cfg.feature_cfg.finetune_lr = 0.001;
  cfg.gp.holdout_fraction = 0.2;
  return cfg;
}

// Imbalanced pool, balanced down-sampling, stratified 60/20/20 split;
// members come from the training split, non-members from the test split.
void prepare_fraud_data(std::uint64_t seed,
                        const std::filesystem::path& out_dir) {
  datagen::SynthConfig pool_cfg;
  pool_cfg.n_samples = 10000;
  pool_cfg.n_features = 10;
  pool_cfg.class_sep = 1.5;
  pool_cfg.flip_prob = 0.1;
  pool_cfg.class_weights = {0.94, 0.06};
  pool_cfg.seed = derive_seed(seed, "fraud.pool");
  const datagen::Dataset pool = datagen::generate(pool_cfg);

  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (pool.labels[i] == 1 ? positives : negatives).push_back(i);
  }
  Rng rng(derive_seed(seed, "fraud.downsample"));
  rng.shuffle(negatives);
  negatives.resize(std::min(negatives.size(), positives.size()));
  std::vector<std::size_t> selected = positives;
  selected.insert(selected.end(), negatives.begin(), negatives.end());
  std::sort(selected.begin(), selected.end());
  const datagen::Dataset working = datagen::take_rows(pool, selected);

  const std::vector<datagen::Dataset> splits =
      datagen::split(working, {0.6, 0.2, 0.2}, derive_seed(seed, "fraud.split"));
  datagen::Dataset member = splits[0];
  member.provenance = datagen::Provenance::kMember;
  datagen::Dataset non_member = splits[2];
  non_member.provenance = datagen::Provenance::kNonMember;
  std::filesystem::create_directories(out_dir);
  datagen::save_csv(member, out_dir / "member.csv", true);
  datagen::save_csv(non_member, out_dir / "non_member.csv", true);
  std::cout << "fraud surrogate: working set " << working.size()
            << " samples, member split " << member.size() << ", test split "
            << non_member.size() << "\n";
}

}  // namespace

ExperimentConfig builtin_experiment(const std::string& name,
                                    std::uint64_t seed,
                                    const std::filesystem::path& out_dir) {
  if (name == "exp1") return synthetic_experiment(seed, false);
  if (name == "exp2") return synthetic_experiment(seed, true);
  if (name == "fraud") {
    prepare_fraud_data(seed, out_dir);
    return fraud_experiment(seed, out_dir);
  }
  throw ConfigError("unknown experiment \"" + name +
                    "\" (expected exp1, exp2 or fraud)");
}

// ---------------------------------------------------------------------------
// Entry point

int run_cli(int argc, char** argv) {
  CLI::App app{"GP-MIA: Gaussian-process membership inference auditing"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string features_file;
  std::string scores_file;
  std::string experiment = "exp1";
  std::string label_column;
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  bool force = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) {
      sub->add_option("--config", config_path, "experiment config JSON")
          ->required();
    }
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_override, "override the experiment seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_flag("--force", force, "rebuild even if artifacts are fresh");
  };

  CLI::App* train_target = app.add_subcommand(
      "train-target", "train the MLP target on member data");
  add_common(train_target, true);
  CLI::App* extract = app.add_subcommand(
      "extract", "extract diagnostic features for all audit units");
  add_common(extract, true);
  extract->add_option("--label-column", label_column,
                      "label column for CSV sources");
  CLI::App* train_gp =
      app.add_subcommand("train-gp", "fit the GP membership classifier");
  add_common(train_gp, true);
  CLI::App* infer =
      app.add_subcommand("infer", "score candidate units with a fitted GP");
  add_common(infer, true);
  infer->add_option("--features", features_file,
                    "feature store to score (default: holdout or candidates)");
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "compute attack metrics from scores");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--scores", scores_file, "scores file to evaluate");
  CLI::App* repro = app.add_subcommand(
      "repro", "run a built-in experiment end to end");
  repro->add_option("experiment", experiment,
                    "one of exp1, exp2, fraud")
      ->required();
  add_common(repro, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    StageOptions opt;
    opt.force = force;

    ExperimentConfig cfg;
    if (repro->parsed()) {
      const std::uint64_t seed = seed_given ? seed_override : 42;
      opt.out_dir = out_dir.empty()
                        ? std::filesystem::path("gpmia_out") / experiment
                        : std::filesystem::path(out_dir);
      cfg = builtin_experiment(experiment, seed, opt.out_dir);
      cfg.out_dir = opt.out_dir;
      cmd_repro(cfg, opt);
      return 0;
    }

    cfg = load_config(config_path);
    if (seed_given) cfg.seed = seed_override;
    if (!label_column.empty()) {
      cfg.member.label_column = label_column;
      cfg.non_member.label_column = label_column;
    }
    if (!out_dir.empty()) {
      opt.out_dir = out_dir;
    } else if (!cfg.out_dir.empty()) {
      opt.out_dir = cfg.out_dir;
    } else {
      opt.out_dir = "gpmia_out";
    }

    if (train_target->parsed()) {
      cmd_train_target(cfg, opt);
    } else if (extract->parsed()) {
      cmd_extract(cfg, opt);
    } else if (train_gp->parsed()) {
      cmd_train_gp(cfg, opt);
    } else if (infer->parsed()) {
      cmd_infer(cfg, opt,
                features_file.empty()
                    ? std::optional<std::filesystem::path>{}
                    : std::optional<std::filesystem::path>{features_file});
    } else if (eval_cmd->parsed()) {
      cmd_eval(cfg, opt,
               scores_file.empty()
                   ? std::optional<std::filesystem::path>{}
                   : std::optional<std::filesystem::path>{scores_file});
    }
    return 0;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace gpmia::cli

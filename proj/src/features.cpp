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

#include "gpmia/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gpmia/errors.hpp"
#include "gpmia/serde.hpp"

namespace gpmia::features {

namespace {

using nlohmann::json;

constexpr double kDegenerateKernel = 1e-12;

double frobenius_dot(const linops::Matrix& a, const linops::Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch("frobenius_dot: shape mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    s += a.data()[i] * b.data()[i];
  }
  return s;
}

}  // namespace

void AuditUnit::validate() const {
  if (samples.rows() < 1) throw EmptyDataset("audit unit has no samples");
  if (labels.size() != samples.rows()) {
    throw DimensionMismatch("audit unit: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(samples.rows()) +
                            " samples");
  }
}

datagen::Dataset AuditUnit::as_dataset() const {
  datagen::Dataset ds;
  ds.samples = samples;
  ds.labels = labels;
  ds.provenance = datagen::Provenance::kUnknown;
  return ds;
}

std::string to_string(Family f) {
  switch (f) {
    case Family::kCommon: return "common";
    case Family::kGrad: return "grad";
    default: return "ntk";
  }
}

Family family_from_string(const std::string& s) {
  if (s == "common") return Family::kCommon;
  if (s == "grad") return Family::kGrad;
  if (s == "ntk") return Family::kNtk;
  throw InvalidArgument("unknown feature family \"" + s + "\"");
}

void FeatureConfig::validate() const {
  if (families.empty()) {
    throw InvalidArgument("at least one feature family must be enabled");
  }
  if (!(ntk_lambda > 0.0)) throw InvalidArgument("ntk_lambda must be > 0");
  if (ntk_ref_size < 1) throw InvalidArgument("ntk_ref_size must be >= 1");
}

NamedValues common_features(const nnet::TargetModel& model,
                            const AuditUnit& unit, const FeatureConfig& cfg) {
  unit.validate();
  const std::size_t n = unit.samples.rows();
  const auto inv_n = 1.0 / static_cast<double>(n);

  double acc = 0.0, entropy = 0.0, loss = 0.0, conf = 0.0, correct_prob = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(unit.samples.cols());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = unit.samples(i, j);
    const int y = unit.labels[i];
    const std::vector<double> logits = nnet::forward(model, x);
    const std::vector<double> probs = nnet::softmax_probs(logits);
    const std::size_t pred = static_cast<std::size_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (pred == static_cast<std::size_t>(y)) acc += 1.0;
    double h = 0.0;
    for (double p : probs) {
      if (p > 0.0) h -= p * std::log(p);
    }
    entropy += h;
    loss += nnet::softmax_cross_entropy(logits, y);
    conf += probs[pred];
    correct_prob += probs[static_cast<std::size_t>(y)];
  }

  const auto [tuned, perturbation] = nnet::finetune_copy(
      model, unit.as_dataset(), cfg.finetune_epochs, cfg.finetune_lr);
  (void)tuned;

  double mean = 0.0;
  for (double v : unit.samples.data()) mean += v;
  mean /= static_cast<double>(unit.samples.data().size());
  double var = 0.0;
  for (double v : unit.samples.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(unit.samples.data().size());

  return {{"accuracy", acc * inv_n},
          {"entropy", entropy * inv_n},
          {"loss", loss * inv_n},
          {"confidence", conf * inv_n},
          {"correct_prob", correct_prob * inv_n},
          {"perturbation", perturbation},
          {"input_mean", mean},
          {"input_var", var}};
}

NamedValues grad_features(const nnet::TargetModel& model,
                          const AuditUnit& unit) {
  unit.validate();
  const std::size_t n = unit.samples.rows();
  double pj = 0.0, ij = 0.0, loss = 0.0, lg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(unit.samples.cols());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = unit.samples(i, j);
    const nnet::SensitivityBundle b =
        nnet::sensitivity_bundle(model, x, unit.labels[i]);
    pj += b.param_jac_fro;
    ij += b.input_jac_fro;
    loss += b.loss_value;
    lg += b.loss_grad_norm;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return {{"param_jac_fro", pj * inv_n},
          {"input_jac_fro", ij * inv_n},
          {"loss", loss * inv_n},
          {"loss_grad_norm", lg * inv_n}};
}

NtkContext build_ntk_context(const nnet::TargetModel& model,
                             const AuditUnit& reference, double lambda) {
  reference.validate();
  if (!(lambda > 0.0)) throw InvalidArgument("ntk lambda must be > 0");

  NtkContext ctx;
  ctx.lambda = lambda;
  const std::size_t r = reference.samples.rows();
  ctx.reference_jacobians.reserve(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::vector<double> x(reference.samples.cols());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = reference.samples(i, j);
    ctx.reference_jacobians.push_back(nnet::parameter_jacobian(model, x));
  }
  ctx.gram = linops::Matrix(r, r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double k =
          frobenius_dot(ctx.reference_jacobians[i], ctx.reference_jacobians[j]);
      ctx.gram(i, j) = k;
      ctx.gram(j, i) = k;
    }
  }
  linops::Matrix shifted = ctx.gram;
  for (std::size_t i = 0; i < r; ++i) shifted(i, i) += lambda;
  ctx.factor = linops::cholesky(shifted);
  return ctx;
}

NamedValues ntk_features(const nnet::TargetModel& model, const AuditUnit& unit,
                         const NtkContext& ctx,
                         std::vector<std::string>* warnings) {
  unit.validate();
  const std::size_t n = unit.samples.rows();
  const std::size_t r = ctx.gram.rows();

  double tau = 0.0, h_norm = 0.0, h_max = 0.0, s_max = 0.0, s_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(unit.samples.cols());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = unit.samples(i, j);
    const linops::Matrix g = nnet::parameter_jacobian(model, x);

    std::vector<double> k_x(r);
    for (std::size_t k = 0; k < r; ++k) {
      k_x[k] = frobenius_dot(g, ctx.reference_jacobians[k]);
    }
    const double k_xx = frobenius_dot(g, g);

    // tau as a squared forward-solve norm keeps it non-negative by
    // construction; completing the solve gives h.
    const std::vector<double> z = linops::solve_lower(ctx.factor.lower, k_x);
    tau += linops::dot(z, z);
    const std::vector<double> h =
        linops::solve_lower_transpose(ctx.factor.lower, z);
    h_norm += linops::norm2(h);
    double hm = 0.0;
    for (double v : h) hm = std::max(hm, std::abs(v));
    h_max += hm;

    if (k_xx < kDegenerateKernel) {
      if (warnings) {
        warnings->push_back("unit " + unit.unit_id +
                            ": degenerate self-kernel, similarity set to 0");
      }
    } else {
      double smax = -1.0, ssum = 0.0;
      std::size_t valid = 0;
      for (std::size_t k = 0; k < r; ++k) {
        const double kk = ctx.gram(k, k);
        if (kk < kDegenerateKernel) continue;
        const double s = k_x[k] / std::sqrt(k_xx * kk);
        smax = std::max(smax, s);
        ssum += s;
        ++valid;
      }
      if (valid > 0) {
        s_max += smax;
        s_mean += ssum / static_cast<double>(valid);
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return {{"tau_lambda", tau * inv_n},
          {"h_norm", h_norm * inv_n},
          {"h_max", h_max * inv_n},
          {"s_max", s_max * inv_n},
          {"s_mean", s_mean * inv_n}};
}

FeatureVector extract(const nnet::TargetModel& model, const AuditUnit& unit,
                      const FeatureConfig& cfg, const NtkContext* ctx,
                      std::vector<std::string>* warnings) {
  cfg.validate();
  FeatureVector fv;
  fv.unit_id = unit.unit_id;
  auto append = [&fv](const std::string& prefix, const NamedValues& vals) {
    for (const auto& [name, value] : vals) {
      if (!std::isfinite(value)) {
        throw NumericError("feature " + prefix + "." + name +
                           " is non-finite");
      }
      fv.names.push_back(prefix + "." + name);
      fv.values.push_back(value);
    }
  };
  if (cfg.families.count(Family::kCommon)) {
    append("common", common_features(model, unit, cfg));
  }
  if (cfg.families.count(Family::kGrad)) {
    append("grad", grad_features(model, unit));
  }
  if (cfg.families.count(Family::kNtk)) {
    if (ctx == nullptr) {
      throw MissingNtkContext("ntk family enabled but no context given");
    }
    append("ntk", ntk_features(model, unit, *ctx, warnings));
  }
  return fv;
}

Standardizer fit_standardizer(const std::vector<FeatureVector>& features) {
  if (features.size() < 2) {
    throw InsufficientData("fit_standardizer needs >= 2 feature vectors");
  }
  const std::size_t f = features[0].values.size();
  for (const auto& fv : features) {
    if (fv.values.size() != f || fv.names != features[0].names) {
      throw FeatureSchemaMismatch(
          "fit_standardizer: inconsistent feature layout");
    }
  }
  Standardizer s;
  s.means.assign(f, 0.0);
  s.stds.assign(f, 0.0);
  const double inv_n = 1.0 / static_cast<double>(features.size());
  for (const auto& fv : features) {
    for (std::size_t j = 0; j < f; ++j) s.means[j] += fv.values[j];
  }
  for (double& m : s.means) m *= inv_n;
  for (const auto& fv : features) {
    for (std::size_t j = 0; j < f; ++j) {
      const double d = fv.values[j] - s.means[j];
      s.stds[j] += d * d;
    }
  }
  for (double& v : s.stds) v = std::max(std::sqrt(v * inv_n), 1e-12);
  return s;
}

FeatureVector apply(const Standardizer& s, const FeatureVector& fv) {
  if (fv.values.size() != s.means.size()) {
    throw FeatureSchemaMismatch("apply: standardizer dimension mismatch");
  }
  FeatureVector out = fv;
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    out.values[j] = (out.values[j] - s.means[j]) / s.stds[j];
  }
  return out;
}

void write_feature_store(const std::filesystem::path& path,
                         const std::string& fingerprint,
                         const FeatureConfig& cfg,
                         const std::vector<std::string>& feature_names,
                         const std::vector<FeatureRecord>& records) {
  std::ostringstream out;
  json header;
  header["format"] = "gpmia.features";
  header["version"] = 1;
  header["fingerprint"] = fingerprint;
  std::vector<std::string> fams;
  for (Family f : cfg.families) fams.push_back(to_string(f));
  header["config"] = {{"families", fams},
                      {"finetune_epochs", cfg.finetune_epochs},
                      {"finetune_lr", cfg.finetune_lr},
                      {"ntk_lambda", cfg.ntk_lambda},
                      {"ntk_ref_size", cfg.ntk_ref_size}};
  header["feature_names"] = feature_names;
  out << header.dump() << "\n";
  for (const auto& rec : records) {
    if (rec.values.size() != feature_names.size()) {
      throw FeatureSchemaMismatch("record " + rec.unit_id + " has " +
                                  std::to_string(rec.values.size()) +
                                  " values, header names " +
                                  std::to_string(feature_names.size()));
    }
    // Values go through a fixed 17-significant-digit formatter rather than
    // the JSON library so stored decimals are stable across library versions.
    out << "{\"unit_id\":" << json(rec.unit_id).dump() << ",\"label\":";
    if (rec.label.has_value()) {
      out << *rec.label;
    } else {
      out << "null";
    }
    if (rec.group.has_value()) {
      out << ",\"group\":" << json(*rec.group).dump();
    }
    out << ",\"values\":" << serde::json_array17(rec.values) << "}\n";
  }
  serde::write_text_file(path, out.str());
}

LoadedFeatureStore read_feature_store(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature store: " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError("empty feature store: " + path.string());
  }
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "gpmia.features" ||
      header.value("version", 0) != 1) {
    throw IoError("not a gpmia.features v1 store: " + path.string());
  }
  LoadedFeatureStore store;
  store.fingerprint = header.value("fingerprint", "");
  store.feature_names =
      header.at("feature_names").get<std::vector<std::string>>();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded()) {
      throw IoError("feature store " + path.string() + " line " +
                    std::to_string(line_no) + ": invalid JSON");
    }
    FeatureRecord r;
    r.unit_id = rec.at("unit_id").get<std::string>();
    if (!rec.at("label").is_null()) r.label = rec.at("label").get<int>();
    if (rec.contains("group")) r.group = rec.at("group").get<std::string>();
    r.values = rec.at("values").get<std::vector<double>>();
    if (r.values.size() != store.feature_names.size()) {
      throw FeatureSchemaMismatch("feature store " + path.string() + " line " +
                                  std::to_string(line_no) +
                                  ": value count mismatch");
    }
    store.records.push_back(std::move(r));
  }
  return store;
}

}  // namespace gpmia::features

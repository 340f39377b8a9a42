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

#include "gpmia/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gpmia/errors.hpp"
#include "gpmia/rng.hpp"
#include "gpmia/serde.hpp"

namespace gpmia::datagen {

namespace {

// Largest-remainder apportionment of `total` by `weights`; ties go to the
// earlier bucket.
std::vector<std::size_t> apportion(std::size_t total,
                                   const std::vector<double>& weights) {
  const std::size_t k = weights.size();
  std::vector<std::size_t> counts(k);
  std::vector<double> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double quota = weights[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainders[i] = quota - std::floor(quota);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return remainders[a] > remainders[b];
                   });
  for (std::size_t i = 0; assigned < total; ++i) {
    ++counts[order[i % k]];
    ++assigned;
  }
  return counts;
}

std::vector<std::vector<std::size_t>> indices_by_label(const Dataset& ds) {
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  std::vector<std::vector<std::size_t>> by_label(
      static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    by_label[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  return by_label;
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kMember: return "member";
    case Provenance::kNonMember: return "non_member";
    default: return "unknown";
  }
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "member") return Provenance::kMember;
  if (s == "non_member") return Provenance::kNonMember;
  if (s == "unknown") return Provenance::kUnknown;
  throw InvalidArgument("unknown provenance \"" + s + "\"");
}

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.samples = linops::Matrix(rows.size(), ds.dim());
  out.labels.resize(rows.size());
  out.provenance = ds.provenance;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      out.samples(i, j) = ds.samples(rows[i], j);
    }
    out.labels[i] = ds.labels[rows[i]];
  }
  return out;
}

void SynthConfig::validate() const {
  if (n_samples < 2) throw InvalidArgument("n_samples must be >= 2");
  if (n_features < 1) throw InvalidArgument("n_features must be >= 1");
  if (!(class_sep > 0.0)) throw InvalidArgument("class_sep must be > 0");
  if (flip_prob < 0.0 || flip_prob > 1.0) {
    throw InvalidArgument("flip_prob must lie in [0, 1]");
  }
  if (!(class_weights.first > 0.0) || !(class_weights.second > 0.0) ||
      std::abs(class_weights.first + class_weights.second - 1.0) > 1e-9) {
    throw InvalidArgument("class_weights must be positive and sum to 1");
  }
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t d = cfg.n_features;
  const std::vector<std::size_t> counts = apportion(
      cfg.n_samples, {cfg.class_weights.first, cfg.class_weights.second});

  Dataset ds;
  ds.samples = linops::Matrix(cfg.n_samples, d);
  ds.labels.resize(cfg.n_samples);
  const std::size_t n_displaced = std::min<std::size_t>(d, 2);
  std::size_t row = 0;
  for (int cls = 0; cls < 2; ++cls) {
    const double shift = (cls == 0 ? -0.5 : 0.5) * cfg.class_sep;
    for (std::size_t k = 0; k < counts[static_cast<std::size_t>(cls)]; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        ds.samples(row, j) = rng.normal() + (j < n_displaced ? shift : 0.0);
      }
      ds.labels[row] = cls;
      ++row;
    }
  }
  if (cfg.flip_prob > 0.0) {
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
      if (rng.bernoulli(cfg.flip_prob)) ds.labels[i] = 1 - ds.labels[i];
    }
  }
  return ds;
}

std::vector<Dataset> split(const Dataset& ds,
                           const std::vector<double>& fractions,
                           std::uint64_t seed) {
  if (fractions.empty()) throw InvalidFractions("no fractions given");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InvalidFractions("fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidFractions("fractions sum to " + std::to_string(sum));
  }
  if (ds.size() == 0) throw EmptyDataset("split: dataset is empty");

  const std::size_t n_splits = fractions.size();
  std::vector<std::vector<std::size_t>> split_rows(n_splits);
  Rng rng(seed);
  for (auto& class_indices : indices_by_label(ds)) {
    if (class_indices.empty()) continue;
    rng.shuffle(class_indices);
    const std::vector<std::size_t> counts =
        apportion(class_indices.size(), fractions);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < n_splits; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) {
        split_rows[s].push_back(class_indices[pos++]);
      }
    }
  }
  std::vector<Dataset> out;
  out.reserve(n_splits);
  for (auto& rows : split_rows) {
    std::sort(rows.begin(), rows.end());  // keep original row order
    out.push_back(take_rows(ds, rows));
  }
  return out;
}

std::vector<features::AuditUnit> make_units(const Dataset& ds,
                                            std::size_t unit_size,
                                            std::size_t n_units,
                                            std::uint64_t seed,
                                            const std::string& id_prefix,
                                            bool stratified) {
  if (unit_size < 1 || n_units < 1) {
    throw InvalidArgument("unit_size and n_units must be >= 1");
  }
  if (unit_size * n_units > ds.size()) {
    throw InsufficientSamples(
        "make_units: need " + std::to_string(unit_size * n_units) +
        " samples, dataset has " + std::to_string(ds.size()));
  }

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> unit_rows(n_units);
  if (!stratified) {
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::size_t pos = 0;
    for (std::size_t u = 0; u < n_units; ++u) {
      for (std::size_t k = 0; k < unit_size; ++k) {
        unit_rows[u].push_back(order[pos++]);
      }
    }
  } else {
    auto by_label = indices_by_label(ds);
    std::vector<double> weights;
    for (const auto& idx : by_label) {
      weights.push_back(static_cast<double>(idx.size()) /
                        static_cast<double>(ds.size()));
    }
    std::vector<std::size_t> per_class = apportion(unit_size, weights);
    // Every present class contributes at least one sample when room allows.
    const std::size_t present = static_cast<std::size_t>(
        std::count_if(by_label.begin(), by_label.end(),
                      [](const auto& v) { return !v.empty(); }));
    if (unit_size >= present) {
      while (true) {
        bool adjusted = false;
        for (std::size_t c = 0; c < per_class.size(); ++c) {
          if (!by_label[c].empty() && per_class[c] == 0) {
            const std::size_t donor = static_cast<std::size_t>(
                std::max_element(per_class.begin(), per_class.end()) -
                per_class.begin());
            --per_class[donor];
            ++per_class[c];
            adjusted = true;
          }
        }
        if (!adjusted) break;
      }
    }
    for (std::size_t c = 0; c < by_label.size(); ++c) {
      if (per_class[c] * n_units > by_label[c].size()) {
        throw InsufficientSamples("make_units: class " + std::to_string(c) +
                                  " has " +
                                  std::to_string(by_label[c].size()) +
                                  " samples, stratified plan needs " +
                                  std::to_string(per_class[c] * n_units));
      }
      rng.shuffle(by_label[c]);
      std::size_t pos = 0;
      for (std::size_t u = 0; u < n_units; ++u) {
        for (std::size_t k = 0; k < per_class[c]; ++k) {
          unit_rows[u].push_back(by_label[c][pos++]);
        }
      }
    }
  }

  std::vector<features::AuditUnit> units;
  units.reserve(n_units);
  char suffix[32];
  for (std::size_t u = 0; u < n_units; ++u) {
    std::sort(unit_rows[u].begin(), unit_rows[u].end());
    const Dataset sub = take_rows(ds, unit_rows[u]);
    features::AuditUnit unit;
    unit.samples = sub.samples;
    unit.labels = sub.labels;
    std::snprintf(suffix, sizeof(suffix), "_%03zu", u);
    unit.unit_id = id_prefix + suffix;
    units.push_back(std::move(unit));
  }
  return units;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path,
              bool with_provenance) {
  std::ostringstream out;
  for (std::size_t j = 0; j < ds.dim(); ++j) out << "f" << j << ",";
  out << "label";
  if (with_provenance) out << ",provenance";
  out << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      out << serde::real17(ds.samples(i, j)) << ",";
    }
    out << ds.labels[i];
    if (with_provenance) out << "," << to_string(ds.provenance);
    out << "\n";
  }
  serde::write_text_file(path, out.str());
}

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::ptrdiff_t label_idx = -1;
  std::ptrdiff_t prov_idx = -1;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == label_column) {
      label_idx = static_cast<std::ptrdiff_t>(c);
    } else if (header[c] == "provenance") {
      prov_idx = static_cast<std::ptrdiff_t>(c);
    } else {
      feature_cols.push_back(c);
    }
  }
  if (label_idx < 0) {
    throw IoError("CSV " + path.string() + " has no \"" + label_column +
                  "\" column");
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  Provenance prov = Provenance::kUnknown;
  bool prov_seen = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw IoError("CSV " + path.string() + " line " +
                    std::to_string(line_no) + ": expected " +
                    std::to_string(header.size()) + " cells, got " +
                    std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(feature_cols.size());
    int label = 0;
    try {
      for (std::size_t c : feature_cols) row.push_back(std::stod(cells[c]));
      label = std::stoi(cells[static_cast<std::size_t>(label_idx)]);
    } catch (const std::exception&) {
      throw IoError("CSV " + path.string() + " line " +
                    std::to_string(line_no) + ": unparseable number");
    }
    if (label < 0) {
      throw IoError("CSV " + path.string() + " line " +
                    std::to_string(line_no) + ": negative label " +
                    std::to_string(label));
    }
    labels.push_back(label);
    if (prov_idx >= 0) {
      const Provenance p =
          provenance_from_string(cells[static_cast<std::size_t>(prov_idx)]);
      if (prov_seen && p != prov) prov = Provenance::kUnknown;
      else prov = p;
      prov_seen = true;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("CSV has no data rows: " + path.string());

  Dataset ds;
  ds.samples = linops::Matrix(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw IoError("CSV has ragged rows: " + path.string());
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      ds.samples(i, j) = rows[i][j];
    }
  }
  ds.labels = std::move(labels);
  ds.provenance = prov;
  if (!ds.samples.is_finite()) {
    throw IoError("CSV contains non-finite values: " + path.string());
  }
  return ds;
}

}  // namespace gpmia::datagen

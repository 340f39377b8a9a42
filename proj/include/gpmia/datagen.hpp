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

#ifndef GPMIA_DATAGEN_HPP_
#define GPMIA_DATAGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpmia/dataset.hpp"
#include "gpmia/features.hpp"

namespace gpmia::datagen {

// Two-cluster Gaussian mixture configuration. The centroids sit at
// +-(class_sep/2) along each of the first two coordinates (first one when
// d == 1) with isotropic unit-variance noise, so their mutual distance is
// class_sep * sqrt(min(d, 2)).
struct SynthConfig {
  std::size_t n_samples = 2000;
  std::size_t n_features = 10;
  double class_sep = 1.0;
  double flip_prob = 0.0;
  std::pair<double, double> class_weights = {0.5, 0.5};
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset generate(const SynthConfig& cfg);

// Stratified exact partition; sizes per class follow largest-remainder
// rounding with ties toward the earlier split.
std::vector<Dataset> split(const Dataset& ds,
                           const std::vector<double>& fractions,
                           std::uint64_t seed);

// New dataset holding the given rows, in order.
Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows);

// Disjoint audit units sampled without replacement. With `stratified` each
// unit receives a largest-remainder share of every class (at least one
// sample of each when unit_size allows).
std::vector<features::AuditUnit> make_units(const Dataset& ds,
                                            std::size_t unit_size,
                                            std::size_t n_units,
                                            std::uint64_t seed,
                                            const std::string& id_prefix,
                                            bool stratified = false);

// CSV with header f0..f{d-1},label[,provenance]; UTF-8, LF endings, values
// at 17 significant digits.
void save_csv(const Dataset& ds, const std::filesystem::path& path,
              bool with_provenance = false);
Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column = "label");

}  // namespace gpmia::datagen

#endif  // GPMIA_DATAGEN_HPP_

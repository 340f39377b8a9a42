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

#ifndef GPMIA_DATASET_HPP_
#define GPMIA_DATASET_HPP_

#include <string>
#include <vector>

#include "gpmia/linops.hpp"

namespace gpmia::datagen {

enum class Provenance { kMember, kNonMember, kUnknown };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// Labeled sample matrix with a provenance tag.
struct Dataset {
  linops::Matrix samples;   // n x d
  std::vector<int> labels;  // length n, values in [0, n_classes)
  Provenance provenance = Provenance::kUnknown;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }

  std::vector<double> row(std::size_t i) const {
    std::vector<double> r(dim());
    for (std::size_t j = 0; j < dim(); ++j) r[j] = samples(i, j);
    return r;
  }
};

}  // namespace gpmia::datagen

#endif  // GPMIA_DATASET_HPP_

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

#ifndef GPMIA_EVALKIT_HPP_
#define GPMIA_EVALKIT_HPP_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace gpmia::evalkit {

struct ScoredUnit {
  std::string unit_id;
  double probability = 0.0;
  int true_label = 0;  // 1 member, 0 non-member
};

// Rows are true {non-member, member}, columns predicted {non-member, member}.
struct ConfusionCounts {
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tp = 0;
};

struct GroupStat {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct EvalReport {
  double auroc = 0.0;
  double aupr = 0.0;
  std::vector<std::pair<double, double>> tpr_at_fpr;  // (target, tpr)
  ConfusionCounts confusion;
  double threshold = 0.5;
  GroupStat members;      // probability stats over true members
  GroupStat non_members;  // probability stats over true non-members
};

// Probability that a random positive outranks a random negative, ties
// counted half (Mann-Whitney).
double auroc(const std::vector<ScoredUnit>& scored);

// Area under precision-recall with step interpolation over descending
// score thresholds.
double aupr(const std::vector<ScoredUnit>& scored);

// Maximum TPR over thresholds whose empirical FPR stays <= fpr_target.
double tpr_at_fpr(const std::vector<ScoredUnit>& scored, double fpr_target);

// Predicted member iff probability >= threshold.
ConfusionCounts confusion(const std::vector<ScoredUnit>& scored,
                          double threshold);

EvalReport evaluate(const std::vector<ScoredUnit>& scored,
                    const std::vector<double>& fpr_targets, double threshold);

GroupStat group_stat(const std::vector<double>& values);

// JSON export with the full report plus per-unit rows for external plotting.
// `groups` carries optional named probability summaries (one per candidate
// group) alongside the label-based stats.
void save_report(const EvalReport& report,
                 const std::vector<ScoredUnit>& scored,
                 const std::filesystem::path& path,
                 const std::string& fingerprint,
                 const std::vector<std::pair<std::string, GroupStat>>& groups =
                     {});

}  // namespace gpmia::evalkit

#endif  // GPMIA_EVALKIT_HPP_

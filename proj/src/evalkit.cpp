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

#include "gpmia/evalkit.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "gpmia/errors.hpp"
#include "gpmia/serde.hpp"

namespace gpmia::evalkit {

namespace {

using nlohmann::json;

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts count_classes(const std::vector<ScoredUnit>& scored) {
  ClassCounts c;
  for (const auto& s : scored) {
    if (s.true_label == 1) ++c.pos;
    else ++c.neg;
  }
  return c;
}

// Indices sorted by descending probability.
std::vector<std::size_t> descending_order(
    const std::vector<ScoredUnit>& scored) {
  std::vector<std::size_t> order(scored.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scored[a].probability > scored[b].probability;
                   });
  return order;
}

}  // namespace

double auroc(const std::vector<ScoredUnit>& scored) {
  const ClassCounts c = count_classes(scored);
  if (c.pos == 0 || c.neg == 0) {
    throw SingleClass("auroc needs both classes present");
  }
  // Integer pair counting (wins doubled, ties once) so the result matches
  // exhaustive pairwise enumeration exactly.
  const std::vector<std::size_t> order = descending_order(scored);
  unsigned long long num2 = 0;
  std::size_t neg_seen = 0;  // negatives with strictly higher score
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t pos_tied = 0, neg_tied = 0;
    while (j < order.size() && scored[order[j]].probability ==
                                   scored[order[i]].probability) {
      if (scored[order[j]].true_label == 1) ++pos_tied;
      else ++neg_tied;
      ++j;
    }
    // Positives in this group beat all negatives ranked below the group.
    const std::size_t neg_below = c.neg - neg_seen - neg_tied;
    num2 += 2ULL * pos_tied * neg_below;
    num2 += 1ULL * pos_tied * neg_tied;
    neg_seen += neg_tied;
    i = j;
  }
  return static_cast<double>(num2) /
         (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double aupr(const std::vector<ScoredUnit>& scored) {
  const ClassCounts c = count_classes(scored);
  if (c.pos == 0) throw NoPositives("aupr needs at least one positive");
  const std::vector<std::size_t> order = descending_order(scored);
  double area = 0.0;
  std::size_t tp = 0, fp = 0, prev_tp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scored[order[j]].probability ==
                                   scored[order[i]].probability) {
      if (scored[order[j]].true_label == 1) ++tp;
      else ++fp;
      ++j;
    }
    area += (static_cast<double>(tp) - static_cast<double>(prev_tp)) /
            static_cast<double>(c.pos) *
            (static_cast<double>(tp) / static_cast<double>(tp + fp));
    prev_tp = tp;
    i = j;
  }
  return area;
}

double tpr_at_fpr(const std::vector<ScoredUnit>& scored, double fpr_target) {
  if (!(fpr_target > 0.0) || !(fpr_target < 1.0)) {
    throw InvalidArgument("fpr_target must lie in (0, 1)");
  }
  const ClassCounts c = count_classes(scored);
  if (c.neg == 0) throw NoNegatives("tpr_at_fpr needs negatives");
  const std::vector<std::size_t> order = descending_order(scored);
  double best = 0.0;  // the all-negative threshold always qualifies
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scored[order[j]].probability ==
                                   scored[order[i]].probability) {
      if (scored[order[j]].true_label == 1) ++tp;
      else ++fp;
      ++j;
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(c.neg);
    if (fpr <= fpr_target && c.pos > 0) {
      best = std::max(best,
                      static_cast<double>(tp) / static_cast<double>(c.pos));
    }
    i = j;
  }
  return best;
}

ConfusionCounts confusion(const std::vector<ScoredUnit>& scored,
                          double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw InvalidArgument("confusion threshold must lie in [0, 1]");
  }
  ConfusionCounts counts;
  for (const auto& s : scored) {
    const bool pred = s.probability >= threshold;
    if (s.true_label == 1) {
      if (pred) ++counts.tp;
      else ++counts.fn;
    } else {
      if (pred) ++counts.fp;
      else ++counts.tn;
    }
  }
  return counts;
}

EvalReport evaluate(const std::vector<ScoredUnit>& scored,
                    const std::vector<double>& fpr_targets, double threshold) {
  if (scored.empty()) throw InsufficientData("no scored units to evaluate");
  EvalReport report;
  report.auroc = auroc(scored);
  report.aupr = aupr(scored);
  for (double target : fpr_targets) {
    report.tpr_at_fpr.emplace_back(target, tpr_at_fpr(scored, target));
  }
  report.threshold = threshold;
  report.confusion = confusion(scored, threshold);

  auto stats = [&](int label) {
    GroupStat g;
    for (const auto& s : scored) {
      if (s.true_label == label) {
        ++g.count;
        g.mean += s.probability;
      }
    }
    if (g.count == 0) return g;
    g.mean /= static_cast<double>(g.count);
    for (const auto& s : scored) {
      if (s.true_label == label) {
        const double d = s.probability - g.mean;
        g.stddev += d * d;
      }
    }
    g.stddev = std::sqrt(g.stddev / static_cast<double>(g.count));
    return g;
  };
  report.members = stats(1);
  report.non_members = stats(0);
  return report;
}

GroupStat group_stat(const std::vector<double>& values) {
  GroupStat g;
  g.count = values.size();
  if (values.empty()) return g;
  for (double v : values) g.mean += v;
  g.mean /= static_cast<double>(values.size());
  for (double v : values) g.stddev += (v - g.mean) * (v - g.mean);
  g.stddev = std::sqrt(g.stddev / static_cast<double>(values.size()));
  return g;
}

void save_report(const EvalReport& report,
                 const std::vector<ScoredUnit>& scored,
                 const std::filesystem::path& path,
                 const std::string& fingerprint,
                 const std::vector<std::pair<std::string, GroupStat>>& groups) {
  json doc;
  doc["format"] = "gpmia.report";
  doc["version"] = 1;
  doc["fingerprint"] = fingerprint;
  doc["auroc"] = report.auroc;
  doc["aupr"] = report.aupr;
  json tprs = json::array();
  for (const auto& [target, tpr] : report.tpr_at_fpr) {
    tprs.push_back({{"fpr_target", target}, {"tpr", tpr}});
  }
  doc["tpr_at_fpr"] = std::move(tprs);
  doc["threshold"] = report.threshold;
  doc["confusion"] = {{"tn", report.confusion.tn},
                      {"fp", report.confusion.fp},
                      {"fn", report.confusion.fn},
                      {"tp", report.confusion.tp}};
  doc["group_stats"] = {
      {"member",
       {{"count", report.members.count},
        {"mean", report.members.mean},
        {"stddev", report.members.stddev}}},
      {"non_member",
       {{"count", report.non_members.count},
        {"mean", report.non_members.mean},
        {"stddev", report.non_members.stddev}}}};
  if (!groups.empty()) {
    json g;
    for (const auto& [name, stat] : groups) {
      g[name] = {{"count", stat.count},
                 {"mean", stat.mean},
                 {"stddev", stat.stddev}};
    }
    doc["groups"] = std::move(g);
  }
  json units = json::array();
  for (const auto& s : scored) {
    units.push_back({{"unit_id", s.unit_id},
                     {"probability", s.probability},
                     {"label", s.true_label}});
  }
  doc["units"] = std::move(units);
  serde::save_json_file(path, doc);
}

}  // namespace gpmia::evalkit

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

#include <cmath>

#include "gpmia/errors.hpp"
#include "gpmia/evalkit.hpp"
#include "gpmia/rng.hpp"
#include "oracles.hpp"

using namespace gpmia;
using evalkit::ScoredUnit;

namespace {

std::vector<ScoredUnit> make_scored(const std::vector<double>& probs,
                                    const std::vector<int>& labels) {
  std::vector<ScoredUnit> s;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    s.push_back({"u" + std::to_string(i), probs[i], labels[i]});
  }
  return s;
}

// Tie-heavy random instance: scores drawn from a small discrete set.
std::vector<ScoredUnit> random_scored(Rng& rng, std::size_t max_n,
                                      bool tie_heavy) {
  const std::size_t n = 2 + rng.below(max_n - 1);
  std::vector<ScoredUnit> s;
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    double p;
    if (tie_heavy) {
      p = static_cast<double>(rng.below(5)) / 4.0;
    } else {
      p = rng.uniform();
    }
    const int label = static_cast<int>(rng.below(2));
    (label == 1 ? has_pos : has_neg) = true;
    s.push_back({"u" + std::to_string(i), p, label});
  }
  if (!has_pos) s[0].true_label = 1;
  if (!has_neg) s[s.size() - 1].true_label = 0;
  return s;
}

}  // namespace

TEST_CASE("auroc: separation, ties, and the 0.75 spec instance") {
  CHECK(evalkit::auroc(make_scored({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})) ==
        1.0);
  CHECK(evalkit::auroc(make_scored({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0})) ==
        0.5);
  CHECK(evalkit::auroc(make_scored({0.1, 0.35, 0.4, 0.8}, {0, 1, 0, 1})) ==
        0.75);
  CHECK_THROWS_AS(evalkit::auroc(make_scored({0.5, 0.6}, {1, 1})),
                  SingleClass);
}

TEST_CASE("auroc is invariant under monotone transforms and flips with labels") {
  Rng rng(17);
  for (int t = 0; t < 30; ++t) {
    auto s = random_scored(rng, 60, false);
    const double base = evalkit::auroc(s);

    auto transformed = s;
    for (auto& u : transformed) {
      u.probability = 1.0 / (1.0 + std::exp(-5.0 * (u.probability - 0.3)));
    }
    CHECK(evalkit::auroc(transformed) == base);

    auto flipped = s;
    for (auto& u : flipped) u.true_label = 1 - u.true_label;
    CHECK(evalkit::auroc(flipped) == doctest::Approx(1.0 - base).epsilon(1e-12));
  }
}

TEST_CASE("aupr: separation and the single-positive closed form") {
  CHECK(evalkit::aupr(make_scored({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0})) == 1.0);
  // Single positive ranked last among k+1 = 5: AP = 1/5.
  CHECK(evalkit::aupr(make_scored({0.5, 0.4, 0.3, 0.2, 0.1},
                                  {0, 0, 0, 0, 1})) == doctest::Approx(0.2));
  CHECK_THROWS_AS(evalkit::aupr(make_scored({0.5}, {0})), NoPositives);
}

TEST_CASE("tpr_at_fpr: separation and the all-ties degenerate case") {
  const auto sep = make_scored({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  CHECK(evalkit::tpr_at_fpr(sep, 0.01) == 1.0);
  // All scores equal: only the predict-nothing threshold satisfies
  // fpr <= target < 1.
  const auto ties = make_scored({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0});
  CHECK(evalkit::tpr_at_fpr(ties, 0.5) == 0.0);
  CHECK_THROWS_AS(evalkit::tpr_at_fpr(sep, 0.0), InvalidArgument);
  CHECK_THROWS_AS(
      evalkit::tpr_at_fpr(make_scored({0.5, 0.6}, {1, 1}), 0.1),
      NoNegatives);
}

TEST_CASE("tpr_at_fpr is non-decreasing in the target") {
  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_scored(rng, 50, t % 2 == 0);
    double prev = 0.0;
    for (double target : {0.01, 0.05, 0.1, 0.25, 0.5, 0.9}) {
      const double tpr = evalkit::tpr_at_fpr(s, target);
      CHECK(tpr >= prev);
      prev = tpr;
    }
  }
}

TEST_CASE("confusion matrix honors the threshold convention") {
  const auto s = make_scored({1.0, 0.7, 0.5, 0.2, 0.0}, {1, 0, 1, 0, 0});
  const auto all = evalkit::confusion(s, 0.0);
  CHECK(all.tp == 2);
  CHECK(all.fp == 3);
  CHECK(all.tn == 0);
  CHECK(all.fn == 0);

  const auto strict = evalkit::confusion(s, 1.0);
  CHECK(strict.tp == 1);  // only probability 1.0 predicted member
  CHECK(strict.fp == 0);

  const auto mid = evalkit::confusion(s, 0.5);
  CHECK(mid.tp == 2);  // 0.5 >= 0.5 counts as predicted member
  CHECK(mid.fp == 1);
  CHECK(mid.tn == 2);
  CHECK(mid.fn == 0);
  CHECK(mid.tp + mid.fp + mid.tn + mid.fn == s.size());

  CHECK_THROWS_AS(evalkit::confusion(s, 1.5), InvalidArgument);
}

TEST_CASE("paper-layout confusion instance [[33,7],[3,37]]") {
  std::vector<ScoredUnit> s;
  auto add = [&s](std::size_t n, double p, int label) {
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back({"u" + std::to_string(s.size()), p, label});
    }
  };
  add(33, 0.2, 0);  // true non-member predicted non-member
  add(7, 0.8, 0);   // true non-member predicted member
  add(3, 0.2, 1);   // true member predicted non-member
  add(37, 0.8, 1);  // true member predicted member
  const auto c = evalkit::confusion(s, 0.5);
  CHECK(c.tn == 33);
  CHECK(c.fp == 7);
  CHECK(c.fn == 3);
  CHECK(c.tp == 37);
}

TEST_CASE("metrics equal brute-force enumeration exactly") {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    const auto s = random_scored(rng, 200, t % 2 == 0);
    CHECK(evalkit::auroc(s) == oracles::brute_auroc(s));
    CHECK(evalkit::aupr(s) == oracles::brute_aupr(s));
    for (double target : {0.01, 0.1, 0.3}) {
      CHECK(evalkit::tpr_at_fpr(s, target) ==
            oracles::brute_tpr_at_fpr(s, target));
    }
  }
}

TEST_CASE("evaluate assembles a consistent report") {
  Rng rng(41);
  const auto s = random_scored(rng, 80, false);
  const auto report = evalkit::evaluate(s, {0.01, 0.1}, 0.5);
  CHECK(report.auroc == evalkit::auroc(s));
  CHECK(report.aupr == evalkit::aupr(s));
  REQUIRE(report.tpr_at_fpr.size() == 2);
  CHECK(report.tpr_at_fpr[0].first == 0.01);
  CHECK(report.confusion.tp + report.confusion.fp + report.confusion.tn +
            report.confusion.fn ==
        s.size());
  CHECK(report.members.count + report.non_members.count == s.size());
  CHECK(report.auroc >= 0.0);
  CHECK(report.auroc <= 1.0);
  CHECK(report.aupr >= 0.0);
  CHECK(report.aupr <= 1.0);
  CHECK_THROWS_AS(evalkit::evaluate({}, {0.01}, 0.5), InsufficientData);
}

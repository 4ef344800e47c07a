// Copyright 2026 The trifuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "trifuse/froc.hpp"

namespace trifuse {

enum class ConsensusPattern { R1_1of1, R2_2of2, R2_1of2, R3_3of3, R3_2of3, NoVotes, Other };

std::string_view display_name(ConsensusPattern p);
ConsensusPattern consensus_category(int reviewers, std::optional<int> positive_votes);
ConsensusPattern consensus_category(const std::optional<Votes>& votes);
Stratifier consensus_stratifier();

enum class EffectLabel { Negligible, Small, Medium, Large };

std::string_view to_string(EffectLabel l);
// Lower-inclusive bands on |d|: 0.2, 0.5, 0.8.
EffectLabel effect_size_label(double d);

struct EffectSizeResult {
  double d = 0.0;
  // Zero pooled spread with different means; d is then +-inf.
  bool infinite_effect = false;
  double s_pooled = 0.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double mean1 = 0.0;
  double mean2 = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  EffectLabel label = EffectLabel::Negligible;
};

EffectSizeResult cohens_d(std::span<const double> detected, std::span<const double> missed);

template <typename DerivedA, typename DerivedB>
EffectSizeResult cohens_d(const Eigen::DenseBase<DerivedA>& detected, const Eigen::DenseBase<DerivedB>& missed) {
  const Eigen::ArrayXd a = detected.derived().template cast<double>().array();
  const Eigen::ArrayXd b = missed.derived().template cast<double>().array();
  return cohens_d(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                  std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

struct RankTestResult {
  enum class Method { Exact, NormalApprox };
  double u_statistic = 0.0;
  double p_value = 1.0;
  Method method = Method::NormalApprox;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

std::string_view to_string(RankTestResult::Method m);

// U of x against y with midranks: #(x > y) + 0.5 #(x == y).
double mann_whitney_u_statistic(std::span<const double> x, std::span<const double> y);

// Two-sided exact p under the tie-free null, for any sample sizes.
double mann_whitney_exact_p(double u, std::size_t n1, std::size_t n2);

// Two-sided normal approximation with tie and continuity corrections.
double mann_whitney_normal_p(std::span<const double> x, std::span<const double> y, double u);

inline constexpr std::size_t kExactRankTestMaxN = 12;

// Exact when n1 + n2 <= 12 and there are no ties, normal approximation otherwise.
RankTestResult mann_whitney_u(std::span<const double> x, std::span<const double> y);

double bonferroni_alpha(double alpha, std::size_t tests);

inline constexpr double kSignificanceAlpha = 0.05;

struct ModelMatches {
  std::string model;
  LesionMatchResult matches;
};

struct CharacteristicRow {
  Characteristic characteristic = Characteristic::Subtlety;
  std::size_t n_detected = 0;
  std::size_t n_missed = 0;
  double mean_detected = 0.0;
  double mean_missed = 0.0;
  double mean_diff = 0.0;
  RankTestResult rank_test;
  EffectSizeResult effect;
  bool significant_after_bonferroni = false;
};

struct DetectabilityTable {
  // Model name, or "pooled".
  std::string scope;
  std::size_t detected_pairs = 0;
  std::size_t missed_pairs = 0;
  double corrected_alpha = kSignificanceAlpha;
  std::vector<CharacteristicRow> rows;
  std::vector<std::string> diagnostics;
};

// Pooled: one table over every lesion-model pair in characteristic order.
// Per-model: one table per model with rows ranked by |d|.
std::vector<DetectabilityTable> detected_vs_missed_table(std::span<const ModelMatches> models,
                                                         std::span<const ReferenceNodule> references, bool pooled);

struct ModelMissSummary {
  std::string model;
  std::size_t total_missed = 0;
  std::size_t uniquely_missed = 0;
  std::optional<ScoreSummary> diameter;
};

struct OverlapCategory {
  std::string category;
  std::size_t count = 0;
  // Percentage of the union of all missed references.
  double pct = 0.0;
  std::optional<ScoreSummary> diameter;
};

struct MissedOverlap {
  std::vector<ModelMissSummary> models;
  std::vector<OverlapCategory> categories;
  std::size_t missed_by_any = 0;
};

MissedOverlap missed_overlap_table(std::span<const ModelMatches> models, std::span<const ReferenceNodule> references);

struct ConsensusRow {
  ConsensusPattern pattern = ConsensusPattern::Other;
  std::string model;
  ProbabilityGroup group;
};

// Detection probability by radiologist vote pattern, per model.
std::vector<ConsensusRow> consensus_table(std::span<const ModelMatches> models,
                                          std::span<const ReferenceNodule> references);

}  // namespace trifuse

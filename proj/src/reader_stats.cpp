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

#include "trifuse/reader_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <iterator>
#include <set>

#include <fmt/format.h>

namespace trifuse {

std::string_view display_name(ConsensusPattern p) {
  switch (p) {
    case ConsensusPattern::R1_1of1: return "1R (1/1)";
    case ConsensusPattern::R2_2of2: return "2R (2/2) Consensus";
    case ConsensusPattern::R2_1of2: return "2R (1/2) Disagree";
    case ConsensusPattern::R3_3of3: return "3R (3/3) Consensus";
    case ConsensusPattern::R3_2of3: return "3R (2/3) 1 dissent";
    case ConsensusPattern::NoVotes: return "No votes";
    case ConsensusPattern::Other: return "Other";
  }
  return "Other";
}

ConsensusPattern consensus_category(int reviewers, std::optional<int> positive_votes) {
  if (!positive_votes) return ConsensusPattern::NoVotes;
  const int v = *positive_votes;
  if (v < 0 || reviewers < 0 || v > reviewers) {
    throw InputError(fmt::format("consensus_category: {} positive votes from {} reviewers", v, reviewers));
  }
  if (reviewers == 1 && v == 1) return ConsensusPattern::R1_1of1;
  if (reviewers == 2 && v == 2) return ConsensusPattern::R2_2of2;
  if (reviewers == 2 && v == 1) return ConsensusPattern::R2_1of2;
  if (reviewers == 3 && v == 3) return ConsensusPattern::R3_3of3;
  if (reviewers == 3 && v == 2) return ConsensusPattern::R3_2of3;
  return ConsensusPattern::Other;
}

ConsensusPattern consensus_category(const std::optional<Votes>& votes) {
  if (!votes) return ConsensusPattern::NoVotes;
  return consensus_category(votes->reviewers, votes->positive_votes);
}

Stratifier consensus_stratifier() {
  Stratifier s;
  s.name = "consensus";
  for (auto p : {ConsensusPattern::R1_1of1, ConsensusPattern::R2_2of2, ConsensusPattern::R2_1of2,
                 ConsensusPattern::R3_3of3, ConsensusPattern::R3_2of3, ConsensusPattern::NoVotes,
                 ConsensusPattern::Other}) {
    s.strata.emplace_back(display_name(p));
  }
  s.assign = [](const ReferenceNodule& r) -> std::optional<std::string> {
    return std::string(display_name(consensus_category(r.votes)));
  };
  return s;
}

std::string_view to_string(EffectLabel l) {
  switch (l) {
    case EffectLabel::Negligible: return "Negligible";
    case EffectLabel::Small: return "Small";
    case EffectLabel::Medium: return "Medium";
    case EffectLabel::Large: return "Large";
  }
  return "?";
}

EffectLabel effect_size_label(double d) {
  const double a = std::abs(d);
  if (a >= 0.8) return EffectLabel::Large;
  if (a >= 0.5) return EffectLabel::Medium;
  if (a >= 0.2) return EffectLabel::Small;
  return EffectLabel::Negligible;
}

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

EffectSizeResult cohens_d(std::span<const double> detected, std::span<const double> missed) {
  if (detected.size() < 2 || missed.size() < 2) {
    throw InputError(fmt::format("cohens_d needs at least two values per sample (got {} and {})", detected.size(),
                                 missed.size()));
  }
  EffectSizeResult r;
  r.n1 = detected.size();
  r.n2 = missed.size();
  r.mean1 = mean_of(detected);
  r.mean2 = mean_of(missed);
  const double v1 = sample_variance(detected, r.mean1);
  const double v2 = sample_variance(missed, r.mean2);
  r.s1 = std::sqrt(v1);
  r.s2 = std::sqrt(v2);
  const double n1 = static_cast<double>(r.n1);
  const double n2 = static_cast<double>(r.n2);
  r.s_pooled = std::sqrt(((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0));
  const double diff = r.mean1 - r.mean2;
  if (r.s_pooled > 0.0) {
    r.d = diff / r.s_pooled;
  } else if (diff == 0.0) {
    r.d = 0.0;
  } else {
    r.infinite_effect = true;
    r.d = std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  r.label = effect_size_label(r.d);
  return r;
}

std::string_view to_string(RankTestResult::Method m) {
  return m == RankTestResult::Method::Exact ? "exact" : "normal_approx";
}

double mann_whitney_u_statistic(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw InputError("Mann-Whitney U needs two non-empty samples");
  // Midranks over the pooled sample.
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(x.size() + y.size());
  for (double v : x) pooled.emplace_back(v, true);
  for (double v : y) pooled.emplace_back(v, false);
  std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum_x = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second) rank_sum_x += midrank;
    }
    i = j;
  }
  const double n1 = static_cast<double>(x.size());
  return rank_sum_x - n1 * (n1 + 1.0) / 2.0;
}

double mann_whitney_exact_p(double u, std::size_t n1, std::size_t n2) {
  if (n1 == 0 || n2 == 0) throw InputError("exact Mann-Whitney p needs non-empty samples");
  // prob[n][k] = P(U = k) for samples of size (m, n), built up over m.
  std::vector<std::vector<double>> prev(n2 + 1, std::vector<double>{1.0});
  for (std::size_t m = 1; m <= n1; ++m) {
    std::vector<std::vector<double>> cur(n2 + 1);
    cur[0] = {1.0};
    for (std::size_t n = 1; n <= n2; ++n) {
      std::vector<double> dist(m * n + 1, 0.0);
      const double px = static_cast<double>(m) / static_cast<double>(m + n);
      const double py = 1.0 - px;
      for (std::size_t k = 0; k < prev[n].size(); ++k) dist[k + n] += px * prev[n][k];
      for (std::size_t k = 0; k < cur[n - 1].size(); ++k) dist[k] += py * cur[n - 1][k];
      cur[n] = std::move(dist);
    }
    prev = std::move(cur);
  }
  const auto& dist = prev[n2];
  double lower = 0.0, upper = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double kk = static_cast<double>(k);
    if (kk <= u) lower += dist[k];
    if (kk >= u) upper += dist[k];
  }
  return std::min(1.0, 2.0 * std::min(lower, upper));
}

double mann_whitney_normal_p(std::span<const double> x, std::span<const double> y, double u) {
  const double n1 = static_cast<double>(x.size());
  const double n2 = static_cast<double>(y.size());
  const double n = n1 + n2;
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::sort(pooled.begin(), pooled.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

RankTestResult mann_whitney_u(std::span<const double> x, std::span<const double> y) {
  RankTestResult r;
  r.n1 = x.size();
  r.n2 = y.size();
  r.u_statistic = mann_whitney_u_statistic(x, y);
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::sort(pooled.begin(), pooled.end());
  const bool ties = std::adjacent_find(pooled.begin(), pooled.end()) != pooled.end();
  if (!ties && r.n1 + r.n2 <= kExactRankTestMaxN) {
    r.method = RankTestResult::Method::Exact;
    r.p_value = mann_whitney_exact_p(r.u_statistic, r.n1, r.n2);
  } else {
    r.method = RankTestResult::Method::NormalApprox;
    r.p_value = mann_whitney_normal_p(x, y, r.u_statistic);
  }
  return r;
}

double bonferroni_alpha(double alpha, std::size_t tests) {
  if (tests == 0) throw InputError("bonferroni_alpha: zero tests");
  return alpha / static_cast<double>(tests);
}

namespace {

using RefKey = std::pair<std::string, std::string>;

// For each reference of the model's evaluation: detected (true) or missed.
std::map<RefKey, bool> detection_status(const LesionMatchResult& m) {
  std::map<RefKey, bool> out;
  for (const auto& s : m.scans) {
    for (const auto& tp : s.true_positives) out[{s.scan_id, tp.nodule_id}] = true;
    for (const auto& fn : s.false_negatives) out[{s.scan_id, fn}] = false;
  }
  return out;
}

std::map<RefKey, const ReferenceNodule*> index_references(std::span<const ReferenceNodule> refs) {
  std::map<RefKey, const ReferenceNodule*> out;
  for (const auto& r : refs) {
    if (!out.emplace(RefKey{r.scan_id, r.nodule_id}, &r).second) {
      throw InputError(fmt::format("duplicate nodule_id {} in scan {}", r.nodule_id, r.scan_id));
    }
  }
  return out;
}

struct Pair {
  const ReferenceNodule* ref;
  bool detected;
};

std::vector<Pair> lesion_model_pairs(const ModelMatches& model, const std::map<RefKey, const ReferenceNodule*>& refs) {
  std::vector<Pair> out;
  for (const auto& [key, detected] : detection_status(model.matches)) {
    const auto it = refs.find(key);
    if (it == refs.end()) {
      throw InputError(fmt::format("model {}: matched nodule {}/{} is not in the reference file", model.model,
                                   key.first, key.second));
    }
    out.push_back({it->second, detected});
  }
  return out;
}

DetectabilityTable build_table(std::string scope, const std::vector<Pair>& pairs) {
  DetectabilityTable t;
  t.scope = std::move(scope);
  for (const auto& p : pairs) (p.detected ? t.detected_pairs : t.missed_pairs)++;
  if (t.missed_pairs == 0) {
    t.diagnostics.push_back(fmt::format("{}: every reference was detected; nothing to compare", t.scope));
    return t;
  }
  if (t.detected_pairs == 0) {
    t.diagnostics.push_back(fmt::format("{}: no reference was detected; nothing to compare", t.scope));
    return t;
  }
  for (auto c : kDetectabilityCharacteristics) {
    std::vector<double> det, mis;
    for (const auto& p : pairs) {
      if (!p.ref->ratings) continue;
      if (const auto v = p.ref->ratings->get(c)) (p.detected ? det : mis).push_back(*v);
    }
    if (det.empty() && mis.empty()) continue;
    if (det.size() < 2 || mis.size() < 2) {
      t.diagnostics.push_back(fmt::format("{}: {} has {} detected and {} missed values; needs two of each", t.scope,
                                          column_name(c), det.size(), mis.size()));
      continue;
    }
    CharacteristicRow row;
    row.characteristic = c;
    row.n_detected = det.size();
    row.n_missed = mis.size();
    row.effect = cohens_d(det, mis);
    row.mean_detected = row.effect.mean1;
    row.mean_missed = row.effect.mean2;
    row.mean_diff = row.mean_detected - row.mean_missed;
    row.rank_test = mann_whitney_u(det, mis);
    t.rows.push_back(row);
  }
  if (!t.rows.empty()) {
    t.corrected_alpha = bonferroni_alpha(kSignificanceAlpha, t.rows.size());
    for (auto& row : t.rows) row.significant_after_bonferroni = row.rank_test.p_value < t.corrected_alpha;
  }
  return t;
}

std::vector<std::pair<std::string, std::set<RefKey>>> missed_sets(std::span<const ModelMatches> models) {
  std::vector<std::pair<std::string, std::set<RefKey>>> out;
  std::optional<std::set<RefKey>> universe;
  for (const auto& m : models) {
    std::set<RefKey> all, missed;
    for (const auto& [key, detected] : detection_status(m.matches)) {
      all.insert(key);
      if (!detected) missed.insert(key);
    }
    if (universe && *universe != all) {
      throw InputError(fmt::format("model {} was evaluated on a different reference set", m.model));
    }
    universe = all;
    out.emplace_back(m.model, std::move(missed));
  }
  return out;
}

std::optional<ScoreSummary> diameter_summary(const std::set<RefKey>& keys,
                                             const std::map<RefKey, const ReferenceNodule*>& refs) {
  if (keys.empty()) return std::nullopt;
  std::vector<double> d;
  for (const auto& k : keys) {
    const auto it = refs.find(k);
    if (it == refs.end()) {
      throw InputError(fmt::format("missed nodule {}/{} is not in the reference file", k.first, k.second));
    }
    d.push_back(it->second->diameter_mm);
  }
  return summarize_scores(std::move(d));
}

}  // namespace

std::vector<DetectabilityTable> detected_vs_missed_table(std::span<const ModelMatches> models,
                                                         std::span<const ReferenceNodule> references, bool pooled) {
  const auto refs = index_references(references);
  std::vector<DetectabilityTable> out;
  if (pooled) {
    std::vector<Pair> all;
    for (const auto& m : models) {
      const auto p = lesion_model_pairs(m, refs);
      all.insert(all.end(), p.begin(), p.end());
    }
    out.push_back(build_table("pooled", all));
    return out;
  }
  for (const auto& m : models) {
    auto t = build_table(m.model, lesion_model_pairs(m, refs));
    std::stable_sort(t.rows.begin(), t.rows.end(), [](const CharacteristicRow& a, const CharacteristicRow& b) {
      return std::abs(a.effect.d) > std::abs(b.effect.d);
    });
    out.push_back(std::move(t));
  }
  return out;
}

MissedOverlap missed_overlap_table(std::span<const ModelMatches> models, std::span<const ReferenceNodule> references) {
  if (models.size() < 2) throw InputError("missed overlap analysis needs at least two models");
  const auto refs = index_references(references);
  const auto sets = missed_sets(models);

  std::set<RefKey> any, all = sets.front().second;
  for (const auto& [name, s] : sets) {
    any.insert(s.begin(), s.end());
    std::set<RefKey> keep;
    std::set_intersection(all.begin(), all.end(), s.begin(), s.end(), std::inserter(keep, keep.begin()));
    all = std::move(keep);
  }

  MissedOverlap out;
  out.missed_by_any = any.size();
  auto pct = [&](std::size_t n) { return any.empty() ? 0.0 : 100.0 * static_cast<double>(n) / any.size(); };
  out.categories.push_back({"missed-by-all", all.size(), pct(all.size()), diameter_summary(all, refs)});
  for (std::size_t i = 0; i < sets.size(); ++i) {
    std::set<RefKey> unique;
    for (const auto& k : sets[i].second) {
      bool elsewhere = false;
      for (std::size_t j = 0; j < sets.size() && !elsewhere; ++j) {
        if (j != i && sets[j].second.count(k)) elsewhere = true;
      }
      if (!elsewhere) unique.insert(k);
    }
    out.models.push_back({sets[i].first, sets[i].second.size(), unique.size(), diameter_summary(sets[i].second, refs)});
    out.categories.push_back(
        {fmt::format("{} only", sets[i].first), unique.size(), pct(unique.size()), diameter_summary(unique, refs)});
  }
  return out;
}

std::vector<ConsensusRow> consensus_table(std::span<const ModelMatches> models,
                                          std::span<const ReferenceNodule> references) {
  const auto strat = consensus_stratifier();
  const auto refs = index_references(references);
  std::vector<ConsensusRow> out;
  std::vector<std::vector<ProbabilityGroup>> per_model;
  for (const auto& m : models) {
    // Only the references this model was evaluated on.
    std::vector<ReferenceNodule> evaluated;
    for (const auto& p : lesion_model_pairs(m, refs)) evaluated.push_back(*p.ref);
    per_model.push_back(detection_probability_summary(m.matches, evaluated, strat));
  }
  for (auto pattern : {ConsensusPattern::R1_1of1, ConsensusPattern::R2_2of2, ConsensusPattern::R2_1of2,
                       ConsensusPattern::R3_3of3, ConsensusPattern::R3_2of3, ConsensusPattern::NoVotes,
                       ConsensusPattern::Other}) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      for (const auto& g : per_model[i]) {
        if (g.group == display_name(pattern)) out.push_back({pattern, models[i].model, g});
      }
    }
  }
  return out;
}

}  // namespace trifuse

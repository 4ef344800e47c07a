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

#include "trifuse/froc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "trifuse/parallel.hpp"

namespace trifuse {

std::size_t LesionMatchResult::true_positive_count() const {
  std::size_t n = 0;
  for (const auto& s : scans) n += s.true_positives.size();
  return n;
}

std::size_t LesionMatchResult::false_negative_count() const {
  std::size_t n = 0;
  for (const auto& s : scans) n += s.false_negatives.size();
  return n;
}

std::size_t LesionMatchResult::false_positive_count() const {
  std::size_t n = 0;
  for (const auto& s : scans) n += s.false_positives.size();
  return n;
}

EvaluationSet EvaluationSet::assemble(std::vector<CandidateDetection> candidates,
                                      std::vector<ReferenceNodule> references,
                                      std::optional<std::vector<std::string>> scans) {
  std::set<std::string> ids;
  if (scans) {
    ids.insert(scans->begin(), scans->end());
    for (const auto& c : candidates) {
      if (!ids.count(c.scan_id)) throw InputError(fmt::format("candidate scan {} is not in the scan list", c.scan_id));
    }
    for (const auto& r : references) {
      if (!ids.count(r.scan_id)) throw InputError(fmt::format("reference scan {} is not in the scan list", r.scan_id));
    }
  } else {
    for (const auto& c : candidates) ids.insert(c.scan_id);
    for (const auto& r : references) ids.insert(r.scan_id);
  }
  return EvaluationSet{{ids.begin(), ids.end()}, std::move(candidates), std::move(references)};
}

ScanMatch match_scan(const std::string& scan_id, std::span<const CandidateDetection> candidates,
                     std::span<const ReferenceNodule> references) {
  std::set<std::string> nodule_ids;
  for (const auto& r : references) {
    r.validate();
    if (r.scan_id != scan_id) throw InputError(fmt::format("reference {} is not in scan {}", r.nodule_id, scan_id));
    if (!nodule_ids.insert(r.nodule_id).second) {
      throw InputError(fmt::format("duplicate nodule_id {} in scan {}", r.nodule_id, scan_id));
    }
  }
  std::vector<const CandidateDetection*> order;
  std::set<std::pair<std::string, SourceModel>> candidate_ids;
  for (const auto& c : candidates) {
    c.validate();
    if (c.scan_id != scan_id) throw InputError(fmt::format("candidate {} is not in scan {}", c.candidate_id, scan_id));
    if (!candidate_ids.emplace(c.candidate_id, c.source_model).second) {
      throw InputError(fmt::format("duplicate candidate_id {} in scan {}", c.candidate_id, scan_id));
    }
    order.push_back(&c);
  }
  std::sort(order.begin(), order.end(), [](const CandidateDetection* x, const CandidateDetection* y) {
    if (x->score != y->score) return x->score > y->score;
    return std::tie(x->candidate_id, x->source_model) < std::tie(y->candidate_id, y->source_model);
  });

  ScanMatch out;
  out.scan_id = scan_id;
  std::vector<bool> taken(references.size(), false);
  for (const auto* c : order) {
    std::optional<std::size_t> best;
    double best_dist = 0.0;
    for (std::size_t r = 0; r < references.size(); ++r) {
      if (taken[r] || !is_hit(*c, references[r])) continue;
      const double d = distance(c->center, references[r].center);
      if (!best || d < best_dist || (d == best_dist && references[r].nodule_id < references[*best].nodule_id)) {
        best = r;
        best_dist = d;
      }
    }
    if (best) {
      taken[*best] = true;
      out.true_positives.push_back({references[*best].nodule_id, c->candidate_id, c->source_model, c->score});
    } else {
      out.false_positives.push_back({c->candidate_id, c->source_model, c->score});
    }
  }
  for (std::size_t r = 0; r < references.size(); ++r) {
    if (!taken[r]) out.false_negatives.push_back(references[r].nodule_id);
  }
  std::sort(out.false_negatives.begin(), out.false_negatives.end());
  return out;
}

LesionMatchResult match_lesions(const EvaluationSet& set) {
  std::map<std::string, std::pair<std::vector<CandidateDetection>, std::vector<ReferenceNodule>>> by_scan;
  for (const auto& s : set.scans) by_scan[s];
  for (const auto& c : set.candidates) {
    auto it = by_scan.find(c.scan_id);
    if (it == by_scan.end()) throw InputError(fmt::format("candidate scan {} is not in the scan set", c.scan_id));
    it->second.first.push_back(c);
  }
  for (const auto& r : set.references) {
    auto it = by_scan.find(r.scan_id);
    if (it == by_scan.end()) throw InputError(fmt::format("reference scan {} is not in the scan set", r.scan_id));
    it->second.second.push_back(r);
  }
  std::vector<const decltype(by_scan)::value_type*> work;
  for (const auto& kv : by_scan) work.push_back(&kv);
  LesionMatchResult out;
  out.scans.resize(work.size());
  parallel_for(work.size(), [&](std::size_t i) {
    const auto& [scan, lists] = *work[i];
    out.scans[i] = match_scan(scan, lists.first, lists.second);
  });
  return out;
}

namespace {

struct Ranked {
  double score;
  bool tp;
};

// Sensitivities for a pooled, unsorted list of scored outcomes.
std::array<double, 7> sensitivities_of(std::vector<Ranked>& ranked, std::size_t n_scans, std::size_t n_lesions) {
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  // Cumulative (fp, tp) after each block of equal scores, starting with the empty set.
  std::vector<std::pair<std::size_t, std::size_t>> cum = {{0, 0}};
  std::size_t fp = 0, tp = 0;
  for (std::size_t i = 0; i < ranked.size();) {
    std::size_t j = i;
    while (j < ranked.size() && ranked[j].score == ranked[i].score) {
      (ranked[j].tp ? tp : fp)++;
      ++j;
    }
    cum.emplace_back(fp, tp);
    i = j;
  }
  std::array<double, 7> sens{};
  for (std::size_t r = 0; r < kFrocRates.size(); ++r) {
    const double allowed = kFrocRates[r] * static_cast<double>(n_scans);
    std::size_t best_tp = 0;
    for (const auto& [f, t] : cum) {
      if (static_cast<double>(f) > allowed) break;
      best_tp = t;
    }
    sens[r] = static_cast<double>(best_tp) / static_cast<double>(n_lesions);
  }
  return sens;
}

void append_ranked(const ScanMatch& s, std::vector<Ranked>& out) {
  for (const auto& t : s.true_positives) out.push_back({t.score, true});
  for (const auto& f : s.false_positives) out.push_back({f.score, false});
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

std::optional<Interval> interval_of(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  return Interval{percentile(values, 0.025), percentile(values, 0.975)};
}

}  // namespace

FrocCurve froc_curve(const LesionMatchResult& matches) {
  if (matches.scans.empty()) throw InputError("froc_curve: no scans");
  FrocCurve curve;
  curve.n_scans = matches.scans.size();
  curve.n_lesions = matches.reference_count();
  curve.candidates_total = matches.candidate_count();
  if (curve.n_lesions == 0) throw InputError("froc_curve: no reference lesions, sensitivity undefined");
  std::vector<Ranked> ranked;
  ranked.reserve(curve.candidates_total);
  for (const auto& s : matches.scans) append_ranked(s, ranked);
  curve.sensitivities = sensitivities_of(ranked, curve.n_scans, curve.n_lesions);
  return curve;
}

double cpm(const FrocCurve& curve) {
  double sum = 0.0;
  for (double s : curve.sensitivities) sum += s;
  return sum / static_cast<double>(curve.sensitivities.size());
}

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InputError("percentile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapOutcome bootstrap(const LesionMatchResult& matches, int resamples, std::uint64_t seed) {
  if (resamples < 1) throw InputError("bootstrap: resamples must be >= 1");
  if (matches.scans.empty()) throw InputError("bootstrap: no scans");
  const std::size_t n = matches.scans.size();

  std::vector<std::optional<std::array<double, 7>>> draws(static_cast<std::size_t>(resamples));
  parallel_for(draws.size(), [&](std::size_t r) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(r))));
    std::vector<Ranked> ranked;
    std::size_t lesions = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = matches.scans[bounded(rng, n)];
      lesions += s.references();
      append_ranked(s, ranked);
    }
    if (lesions == 0) return;
    draws[r] = sensitivities_of(ranked, n, lesions);
  });

  BootstrapOutcome out;
  out.resamples = resamples;
  std::vector<double> cpms;
  std::array<std::vector<double>, 7> per_rate;
  for (const auto& d : draws) {
    if (!d) {
      ++out.skipped;
      continue;
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < 7; ++k) {
      per_rate[k].push_back((*d)[k]);
      sum += (*d)[k];
    }
    cpms.push_back(sum / 7.0);
  }
  out.cpm = interval_of(std::move(cpms));
  for (std::size_t k = 0; k < 7; ++k) out.sensitivity[k] = interval_of(std::move(per_rate[k]));
  return out;
}

std::optional<Interval> bootstrap_ci(const LesionMatchResult& matches, Statistic statistic, int resamples,
                                     std::uint64_t seed) {
  const auto b = bootstrap(matches, resamples, seed);
  if (statistic.kind == Statistic::Kind::Cpm) return b.cpm;
  if (statistic.rate_index >= kFrocRates.size()) throw InputError("bootstrap_ci: rate index out of range");
  return b.sensitivity[statistic.rate_index];
}

namespace {

// The percentile interval can miss the point estimate on small skewed
// samples; widen it to cover the estimate.
std::optional<Interval> covering(std::optional<Interval> ci, double estimate) {
  if (!ci) return ci;
  ci->lo = std::min(ci->lo, estimate);
  ci->hi = std::max(ci->hi, estimate);
  return ci;
}

}  // namespace

FrocResult summarize(const LesionMatchResult& matches, const EvalOptions& opts) {
  FrocResult r;
  r.curve = froc_curve(matches);
  r.cpm = cpm(r.curve);
  r.detected = matches.true_positive_count();
  r.lesions = r.curve.n_lesions;
  r.candidates = r.curve.candidates_total;
  r.scans = r.curve.n_scans;
  r.candidates_per_scan = static_cast<double>(r.candidates) / static_cast<double>(r.scans);
  if (opts.confidence_intervals) {
    const auto b = bootstrap(matches, opts.resamples, opts.seed);
    r.cpm_ci = covering(b.cpm, r.cpm);
    for (std::size_t k = 0; k < 7; ++k) r.sensitivity_ci[k] = covering(b.sensitivity[k], r.curve.sensitivities[k]);
    r.bootstrap_skipped = b.skipped;
  }
  return r;
}

FrocResult evaluate(const EvaluationSet& set, const EvalOptions& opts) {
  return summarize(match_lesions(set), opts);
}

SizeBinSpec SizeBinSpec::dlcs() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {{{"<6", 0.0, 6.0}, {"6-10", 6.0, 10.0}, {">=10", 10.0, inf}}};
}

SizeBinSpec SizeBinSpec::imd() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {{{"<10", 0.0, 10.0}, {"10-20", 10.0, 20.0}, {">=20", 20.0, inf}}};
}

void SizeBinSpec::validate() const {
  if (bins.empty()) throw ConfigError("size bins: no bins");
  if (bins.front().lo != 0.0) throw ConfigError("size bins must start at 0");
  if (!std::isinf(bins.back().hi)) throw ConfigError("size bins must extend to infinity");
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (!(bins[i].lo < bins[i].hi)) throw ConfigError(fmt::format("size bin {} is empty", bins[i].name));
    if (i + 1 < bins.size() && bins[i].hi != bins[i + 1].lo) {
      throw ConfigError(fmt::format("size bins {} and {} are not contiguous", bins[i].name, bins[i + 1].name));
    }
  }
}

const SizeBin& SizeBinSpec::bin_of(double diameter_mm) const {
  for (const auto& b : bins) {
    if (diameter_mm >= b.lo && diameter_mm < b.hi) return b;
  }
  throw InputError(fmt::format("diameter {} falls in no size bin", diameter_mm));
}

std::string Stratifier::stratum_of(const ReferenceNodule& r) const {
  auto s = assign(r);
  return s ? *s : std::string(kUnknownStratum);
}

Stratifier size_stratifier(const SizeBinSpec& spec) {
  spec.validate();
  Stratifier s;
  s.name = "size";
  for (const auto& b : spec.bins) s.strata.push_back(b.name);
  s.assign = [spec](const ReferenceNodule& r) -> std::optional<std::string> { return spec.bin_of(r.diameter_mm).name; };
  return s;
}

Stratifier lungrads_stratifier() {
  Stratifier s;
  s.name = "lungrads";
  for (auto c : {LungRads::Cat1, LungRads::Cat2, LungRads::Cat3, LungRads::Cat4A, LungRads::Cat4B, LungRads::Cat4X}) {
    s.strata.emplace_back(to_string(c));
  }
  s.assign = [](const ReferenceNodule& r) -> std::optional<std::string> {
    if (!r.lungrads) return std::nullopt;
    return std::string(to_string(*r.lungrads));
  };
  return s;
}

Stratifier diagnosis_stratifier() {
  Stratifier s;
  s.name = "diagnosis";
  s.strata = {"benign", "cancer"};
  s.assign = [](const ReferenceNodule& r) -> std::optional<std::string> {
    if (r.diagnosis == Diagnosis::Unknown) return std::nullopt;
    return std::string(to_string(r.diagnosis));
  };
  return s;
}

namespace {

std::vector<std::string> ordered_strata(const Stratifier& stratifier, std::span<const ReferenceNodule> refs) {
  std::vector<std::string> order = stratifier.strata;
  for (const auto& r : refs) {
    const auto s = stratifier.stratum_of(r);
    if (std::find(order.begin(), order.end(), s) == order.end()) order.push_back(s);
  }
  return order;
}

}  // namespace

StratifiedResult stratified_eval(const EvaluationSet& set, const Stratifier& stratifier, const EvalOptions& opts) {
  StratifiedResult out;
  out.overall = evaluate(set, opts);
  for (const auto& name : ordered_strata(stratifier, set.references)) {
    EvaluationSet sub;
    std::set<std::string> scans;
    for (const auto& r : set.references) {
      if (stratifier.stratum_of(r) == name) {
        sub.references.push_back(r);
        scans.insert(r.scan_id);
      }
    }
    if (sub.references.empty()) {
      out.warnings.push_back(fmt::format("{} stratum '{}' has no references; omitted", stratifier.name, name));
      continue;
    }
    sub.scans.assign(scans.begin(), scans.end());
    for (const auto& c : set.candidates) {
      if (scans.count(c.scan_id)) sub.candidates.push_back(c);
    }
    out.strata.push_back({name, sub.references.size(), evaluate(sub, opts)});
  }
  return out;
}

ScoreSummary summarize_scores(std::vector<double> values) {
  if (values.empty()) throw InputError("summarize_scores: empty sample");
  std::sort(values.begin(), values.end());
  ScoreSummary s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  s.median = percentile(values, 0.5);
  s.min = values.front();
  s.max = values.back();
  return s;
}

std::vector<ProbabilityGroup> detection_probability_summary(const LesionMatchResult& matches,
                                                            std::span<const ReferenceNodule> references,
                                                            const Stratifier& group_by) {
  std::map<std::pair<std::string, std::string>, double> detected;
  for (const auto& s : matches.scans) {
    for (const auto& tp : s.true_positives) detected[{s.scan_id, tp.nodule_id}] = tp.score;
  }
  std::vector<ProbabilityGroup> out;
  for (const auto& name : ordered_strata(group_by, references)) {
    ProbabilityGroup g;
    g.group = name;
    std::vector<double> scores;
    for (const auto& r : references) {
      if (group_by.stratum_of(r) != name) continue;
      ++g.n_gt;
      if (auto it = detected.find({r.scan_id, r.nodule_id}); it != detected.end()) scores.push_back(it->second);
    }
    if (g.n_gt == 0) continue;
    g.n_detected = scores.size();
    if (!scores.empty()) g.scores = summarize_scores(std::move(scores));
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace trifuse

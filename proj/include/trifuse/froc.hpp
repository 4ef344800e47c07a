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

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trifuse/core.hpp"

namespace trifuse {

// False positives per scan at which sensitivity is read off the FROC curve.
inline constexpr std::array<double, 7> kFrocRates = {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
inline constexpr std::size_t kRateOneIndex = 3;

struct TruePositive {
  std::string nodule_id;
  std::string candidate_id;
  SourceModel model = SourceModel::CadeA;
  double score = 0.0;
};

struct FalsePositive {
  std::string candidate_id;
  SourceModel model = SourceModel::CadeA;
  double score = 0.0;
};

struct ScanMatch {
  std::string scan_id;
  std::vector<TruePositive> true_positives;
  std::vector<std::string> false_negatives;
  std::vector<FalsePositive> false_positives;
  std::size_t references() const { return true_positives.size() + false_negatives.size(); }
  std::size_t candidates() const { return true_positives.size() + false_positives.size(); }
};

// Per-scan outcome, ordered by scan_id.
struct LesionMatchResult {
  std::vector<ScanMatch> scans;

  std::size_t true_positive_count() const;
  std::size_t false_negative_count() const;
  std::size_t false_positive_count() const;
  std::size_t reference_count() const { return true_positive_count() + false_negative_count(); }
  std::size_t candidate_count() const { return true_positive_count() + false_positive_count(); }
};

// Candidates and references over a fixed scan set. Scans without references
// still count in the FP/scan denominator.
struct EvaluationSet {
  std::vector<std::string> scans;
  std::vector<CandidateDetection> candidates;
  std::vector<ReferenceNodule> references;

  // When `scans` is absent it is the union of the scan ids in both lists.
  static EvaluationSet assemble(std::vector<CandidateDetection> candidates, std::vector<ReferenceNodule> references,
                                std::optional<std::vector<std::string>> scans = std::nullopt);
};

// Greedy one-to-one matching of one scan: candidates by descending score take
// the nearest unmatched reference they hit.
ScanMatch match_scan(const std::string& scan_id, std::span<const CandidateDetection> candidates,
                     std::span<const ReferenceNodule> references);

LesionMatchResult match_lesions(const EvaluationSet& set);

struct FrocCurve {
  std::array<double, 7> sensitivities{};
  std::size_t n_scans = 0;
  std::size_t n_lesions = 0;
  std::size_t candidates_total = 0;
};

FrocCurve froc_curve(const LesionMatchResult& matches);
double cpm(const FrocCurve& curve);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Statistic {
  enum class Kind { Cpm, Sensitivity };
  Kind kind = Kind::Cpm;
  std::size_t rate_index = 0;

  static Statistic cpm() { return {Kind::Cpm, 0}; }
  static Statistic sensitivity_at(std::size_t rate_index) { return {Kind::Sensitivity, rate_index}; }
};

struct BootstrapOutcome {
  std::optional<Interval> cpm;
  std::array<std::optional<Interval>, 7> sensitivity{};
  int resamples = 0;
  // Resamples that drew no lesions and were left out.
  int skipped = 0;
};

// Scan-level percentile bootstrap (2.5 / 97.5). Resample r draws from an
// engine seeded by (seed, r), so results do not depend on scheduling.
BootstrapOutcome bootstrap(const LesionMatchResult& matches, int resamples, std::uint64_t seed);
std::optional<Interval> bootstrap_ci(const LesionMatchResult& matches, Statistic statistic, int resamples,
                                     std::uint64_t seed);

// Linear interpolation between order statistics; `sorted` must be ascending.
double percentile(std::span<const double> sorted, double q);

struct EvalOptions {
  bool confidence_intervals = false;
  int resamples = 1000;
  std::uint64_t seed = 17;
};

struct FrocResult {
  FrocCurve curve;
  double cpm = 0.0;
  std::optional<Interval> cpm_ci;
  std::array<std::optional<Interval>, 7> sensitivity_ci{};
  std::size_t detected = 0;
  std::size_t lesions = 0;
  std::size_t candidates = 0;
  std::size_t scans = 0;
  double candidates_per_scan = 0.0;
  int bootstrap_skipped = 0;

  double sensitivity_at_one() const { return curve.sensitivities[kRateOneIndex]; }
};

FrocResult summarize(const LesionMatchResult& matches, const EvalOptions& opts);
FrocResult evaluate(const EvaluationSet& set, const EvalOptions& opts);

// Half-open [lo, hi) diameter bins covering (0, inf).
struct SizeBin {
  std::string name;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

struct SizeBinSpec {
  std::vector<SizeBin> bins;

  static SizeBinSpec dlcs();
  static SizeBinSpec imd();
  void validate() const;
  const SizeBin& bin_of(double diameter_mm) const;
};

// Maps a reference to a stratum name; nullopt means the attribute is missing
// and the reference goes to "unknown".
struct Stratifier {
  std::string name;
  std::vector<std::string> strata;
  std::function<std::optional<std::string>(const ReferenceNodule&)> assign;

  std::string stratum_of(const ReferenceNodule& r) const;
};

inline constexpr const char* kUnknownStratum = "unknown";

Stratifier size_stratifier(const SizeBinSpec& spec);
Stratifier lungrads_stratifier();
Stratifier diagnosis_stratifier();

struct StratumResult {
  std::string stratum;
  std::size_t n_references = 0;
  FrocResult result;
};

struct StratifiedResult {
  FrocResult overall;
  std::vector<StratumResult> strata;
  std::vector<std::string> warnings;
};

// Each stratum keeps its own references and only the scans that contain one.
StratifiedResult stratified_eval(const EvaluationSet& set, const Stratifier& stratifier, const EvalOptions& opts);

struct ScoreSummary {
  double mean = 0.0;
  std::optional<double> sd;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

ScoreSummary summarize_scores(std::vector<double> values);

struct ProbabilityGroup {
  std::string group;
  std::size_t n_gt = 0;
  std::size_t n_detected = 0;
  std::optional<ScoreSummary> scores;
};

// Score statistics of the matched candidate for each detected reference.
std::vector<ProbabilityGroup> detection_probability_summary(const LesionMatchResult& matches,
                                                            std::span<const ReferenceNodule> references,
                                                            const Stratifier& group_by);

}  // namespace trifuse

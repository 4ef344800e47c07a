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

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trifuse/core.hpp"
#include "trifuse/fusion.hpp"
#include "trifuse/volume.hpp"

namespace trifuse {

enum class Lobe { LUL, LLL, RUL, RML, RLL };
enum class Laterality { Left, Right };

std::string_view to_string(Lobe l);
std::string_view to_string(Laterality l);
std::optional<Lobe> parse_lobe(std::string_view s);
std::optional<Laterality> parse_laterality(std::string_view s);
Laterality laterality_of(Lobe l);
// Segmentation label 28..32 to lobe.
std::optional<Lobe> lobe_from_label(int label);

struct ReportEntity {
  std::string report_id;
  std::string scan_id;
  std::optional<double> size_mm;
  std::optional<Lobe> lobe;
  std::optional<Laterality> laterality;
  std::optional<LungRads> lungrads;
  std::map<Characteristic, int> ordinals;
  std::string raw_span;
};

// Ordered pattern rules. One rule per line: `<target> <regex>`, where target
// is one of mention, size_mm, size_cm, lobe=<LUL|LLL|RUL|RML|RLL>,
// laterality=<left|right>, lungrads, ordinal=<Characteristic>. Value rules
// read their first capture group. Matching is case-insensitive; the first
// matching rule for a field wins.
class ExtractionGrammar {
 public:
  static const ExtractionGrammar& builtin();
  static std::string_view builtin_source();
  static ExtractionGrammar parse(std::string_view source);
  static ExtractionGrammar load(const std::filesystem::path& path);

  // One entity per sentence that contains a mention.
  std::vector<ReportEntity> extract(std::string_view text, const std::string& report_id = {},
                                    const std::string& scan_id = {}) const;

 private:
  enum class Target { Mention, SizeMm, SizeCm, Lobe, Laterality, LungRads, Ordinal };
  struct Rule {
    Target target;
    std::optional<trifuse::Lobe> lobe;
    std::optional<trifuse::Laterality> laterality;
    std::optional<Characteristic> characteristic;
    std::regex pattern;
  };
  std::vector<Rule> rules_;
};

std::vector<ReportEntity> extract_entities(std::string_view report_text, const ExtractionGrammar& grammar);

// Splits on . ! ? ; and newlines; a period between digits does not split.
std::vector<std::string> split_sentences(std::string_view text);

std::optional<Lobe> lobe_of_candidate(const WorldPoint& center, const LabelVolume& mask);
std::optional<Lobe> lobe_of_candidate(const FusedCandidate& candidate, const LabelVolume& mask);

// Anything a report entity can be linked to: fused candidates, or annotated
// references that carry ordinal ratings.
struct LinkTarget {
  std::string id;
  std::string scan_id;
  WorldPoint center = WorldPoint::Zero();
  std::optional<double> diameter_mm;
  ConfidenceTier tier = ConfidenceTier::T3;
  double cade_score_avg = 0.0;
  std::optional<Lobe> lobe;
  std::map<Characteristic, int> ordinals;

  static LinkTarget from(const FusedCandidate& c, const LabelVolume* mask);
};

struct LinkTolerances {
  double size_mm = 3.0;
  int ordinal_levels = 1;
};

enum class Criterion { Pass, Fail, NotApplicable };
std::string_view to_string(Criterion c);

struct ScoreBreakdown {
  Criterion location = Criterion::NotApplicable;
  Criterion size = Criterion::NotApplicable;
  Criterion ordinals = Criterion::NotApplicable;

  bool admissible() const {
    return location != Criterion::Fail && size != Criterion::Fail && ordinals != Criterion::Fail;
  }
};

ScoreBreakdown assess(const ReportEntity& e, const LinkTarget& t, const LinkTolerances& tol = {});

enum class MatchStatus { Matched, ReportOnly, CandidateOnly };
std::string_view to_string(MatchStatus s);

struct EntityMatch {
  std::optional<ReportEntity> entity;
  std::optional<std::string> candidate_id;
  MatchStatus status = MatchStatus::ReportOnly;
  std::optional<ScoreBreakdown> breakdown;
};

// One-to-one linking for one scan. The assignment maximizes the number of
// matched entities, then prefers higher tier, higher CADe score, smaller size
// difference. Entities come back in input order, then unmatched targets.
std::vector<EntityMatch> match_entities(std::span<const ReportEntity> entities, std::span<const LinkTarget> targets,
                                        const LinkTolerances& tol = {});

// Groups by scan and runs match_entities per scan, in scan order.
std::vector<EntityMatch> link_all(std::span<const ReportEntity> entities, std::span<const LinkTarget> targets,
                                  const LinkTolerances& tol = {});

}  // namespace trifuse

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

#include "trifuse/core.hpp"

#include <fmt/format.h>

#include "trifuse/text.hpp"

namespace trifuse {

std::string_view to_string(SourceModel m) {
  switch (m) {
    case SourceModel::CadeA: return "CADE_A";
    case SourceModel::CadeB: return "CADE_B";
    case SourceModel::Fused: return "FUSED";
  }
  return "?";
}

SourceModel parse_source_model(std::string_view text) {
  const auto t = text::trim(text);
  if (text::iequals(t, "CADE_A")) return SourceModel::CadeA;
  if (text::iequals(t, "CADE_B")) return SourceModel::CadeB;
  if (text::iequals(t, "FUSED")) return SourceModel::Fused;
  throw InputError(fmt::format("unknown model '{}' (expected CADE_A, CADE_B or FUSED)", t));
}

void CandidateDetection::validate() const {
  if (scan_id.empty()) throw InputError("candidate has empty scan_id");
  if (candidate_id.empty()) throw InputError(fmt::format("candidate in scan {} has empty candidate_id", scan_id));
  if (!center.allFinite()) {
    throw InputError(fmt::format("candidate {}/{}: non-finite centroid", scan_id, candidate_id));
  }
  if (!(score >= 0.0 && score <= 1.0)) {
    throw InputError(fmt::format("candidate {}/{}: score {} outside [0,1]", scan_id, candidate_id, score));
  }
  if (diameter_mm && !(std::isfinite(*diameter_mm) && *diameter_mm > 0.0)) {
    throw InputError(fmt::format("candidate {}/{}: diameter must be positive", scan_id, candidate_id));
  }
}

std::string_view to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::Benign: return "benign";
    case Diagnosis::Cancer: return "cancer";
    case Diagnosis::Unknown: return "unknown";
  }
  return "unknown";
}

Diagnosis parse_diagnosis(std::string_view text) {
  const auto t = text::trim(text);
  if (t.empty() || text::iequals(t, "unknown")) return Diagnosis::Unknown;
  if (text::iequals(t, "benign")) return Diagnosis::Benign;
  if (text::iequals(t, "cancer") || text::iequals(t, "malignant")) return Diagnosis::Cancer;
  throw InputError(fmt::format("unknown diagnosis '{}'", t));
}

std::string_view to_string(LungRads c) {
  switch (c) {
    case LungRads::Cat1: return "1";
    case LungRads::Cat2: return "2";
    case LungRads::Cat3: return "3";
    case LungRads::Cat4A: return "4A";
    case LungRads::Cat4B: return "4B";
    case LungRads::Cat4X: return "4X";
  }
  return "?";
}

std::optional<LungRads> parse_lungrads(std::string_view text) {
  const auto t = text::to_lower(text::trim(text));
  if (t == "1") return LungRads::Cat1;
  if (t == "2") return LungRads::Cat2;
  if (t == "3") return LungRads::Cat3;
  if (t == "4a") return LungRads::Cat4A;
  if (t == "4b") return LungRads::Cat4B;
  if (t == "4x") return LungRads::Cat4X;
  return std::nullopt;
}

namespace {

struct CharacteristicInfo {
  std::string_view column;
  std::string_view display;
  RatingRange range;
  bool ordinal;
};

const CharacteristicInfo& info(Characteristic c) {
  static const std::array<CharacteristicInfo, kCharacteristicCount> table = {{
      {"DiamEq_Rad", "DiamEq_Rad (mm)", {0.0, 1e9}, false},
      {"Texture", "Texture (1–5)", {1, 5}, true},
      {"Malignancy", "Malignancy (0–5)", {0, 5}, true},
      {"Subtlety", "Subtlety (1–5)", {1, 5}, true},
      {"Spiculation", "Spiculation (1–5)", {1, 5}, true},
      {"Lobulation", "Lobulation (1–4)", {1, 4}, true},
      {"Margin", "Margin (1–5)", {1, 5}, true},
      {"Sphericity", "Sphericity (1–5)", {1, 5}, true},
      {"InternalStructure", "Internal structure (1–4)", {1, 4}, true},
      {"Calcification", "Calcification (1–6)", {1, 6}, true},
  }};
  return table[static_cast<std::size_t>(c)];
}

}  // namespace

std::string_view column_name(Characteristic c) { return info(c).column; }
std::string_view display_name(Characteristic c) { return info(c).display; }
bool is_ordinal(Characteristic c) { return info(c).ordinal; }
RatingRange rating_range(Characteristic c) { return info(c).range; }

std::optional<Characteristic> parse_characteristic(std::string_view name) {
  const auto t = text::trim(name);
  for (auto c : kAllCharacteristics) {
    if (text::iequals(t, column_name(c))) return c;
  }
  return std::nullopt;
}

bool SemanticRatings::empty() const {
  for (const auto& v : values_) {
    if (v) return false;
  }
  return true;
}

void SemanticRatings::validate() const {
  for (auto c : kAllCharacteristics) {
    const auto v = get(c);
    if (!v) continue;
    const auto r = rating_range(c);
    if (!std::isfinite(*v)) throw InputError(fmt::format("{} rating is not finite", column_name(c)));
    if (c == Characteristic::DiameterRad) {
      if (!(*v > 0.0)) throw InputError("DiamEq_Rad must be positive");
      continue;
    }
    if (*v < r.lo || *v > r.hi || std::floor(*v) != *v) {
      throw InputError(fmt::format("{} rating {} outside {}..{}", column_name(c), *v, r.lo, r.hi));
    }
  }
}

void ReferenceNodule::validate() const {
  if (scan_id.empty()) throw InputError("reference has empty scan_id");
  if (nodule_id.empty()) throw InputError(fmt::format("reference in scan {} has empty nodule_id", scan_id));
  if (!center.allFinite()) throw InputError(fmt::format("reference {}/{}: non-finite centroid", scan_id, nodule_id));
  if (!(std::isfinite(diameter_mm) && diameter_mm > 0.0)) {
    throw InputError(fmt::format("reference {}/{}: diameter must be positive", scan_id, nodule_id));
  }
  if (votes) {
    if (votes->reviewers < 1 || votes->positive_votes < 0 || votes->positive_votes > votes->reviewers) {
      throw InputError(fmt::format("reference {}/{}: invalid votes {}/{}", scan_id, nodule_id,
                                   votes->positive_votes, votes->reviewers));
    }
  }
  if (ratings) ratings->validate();
}

void PipelineConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(tau_cadx)) throw ConfigError(fmt::format("tau_cadx {} outside [0,1]", tau_cadx));
  if (!unit(tau_cade)) throw ConfigError(fmt::format("tau_cade {} outside [0,1]", tau_cade));
  if (lung_labels.empty()) throw ConfigError("lung_labels must not be empty");
  if (bootstrap_resamples < 1) throw ConfigError("bootstrap_resamples must be >= 1");
  if (consensus_radius.kind == ConsensusRadiusPolicy::Kind::Fixed &&
      !(consensus_radius.fixed_radius_mm >= 0.0 && std::isfinite(consensus_radius.fixed_radius_mm))) {
    throw ConfigError("fixed consensus radius must be a non-negative finite value");
  }
  if (dedup_radius_mm && !(*dedup_radius_mm >= 0.0 && std::isfinite(*dedup_radius_mm))) {
    throw ConfigError("dedup radius must be a non-negative finite value");
  }
}

bool is_hit(const CandidateDetection& candidate, const ReferenceNodule& reference) {
  if (candidate.scan_id != reference.scan_id) {
    throw InputError(fmt::format("is_hit: candidate scan {} does not match reference scan {}",
                                 candidate.scan_id, reference.scan_id));
  }
  return within_tolerance(candidate.center, reference.center, reference.diameter_mm);
}

}  // namespace trifuse

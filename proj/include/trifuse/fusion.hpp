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

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trifuse/core.hpp"
#include "trifuse/volume.hpp"

namespace trifuse {

// Malignancy probabilities from the two classifiers.
struct CadxScores {
  double p_luna = 0.0;
  double p_dlcs = 0.0;

  void validate() const;
};

double ensemble_cadx(const CadxScores& s);

struct ConsensusPair {
  CandidateDetection member_a;
  CandidateDetection member_b;
  WorldPoint merged_center = WorldPoint::Zero();
  double merged_score = 0.0;
};

struct ConsensusResult {
  std::vector<ConsensusPair> pairs;
  std::vector<CandidateDetection> disagreements;
};

double consensus_radius(const CandidateDetection& a, const CandidateDetection& b,
                        const ConsensusRadiusPolicy& policy);

// One-to-one pairing of detector A and detector B proposals. Admissible pairs
// are taken greedily by descending score sum.
ConsensusResult cross_detector_consensus(std::span<const CandidateDetection> list_a,
                                         std::span<const CandidateDetection> list_b,
                                         const ConsensusRadiusPolicy& policy = {});

enum class ConfidenceTier { T1, T2, T3 };
enum class Stage { Consensus, CadxPromoted, CadeRefined };

double tier_value(ConfidenceTier t);
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);
ConfidenceTier tier_of(Stage s);

struct FusedCandidate {
  std::string scan_id;
  std::string fused_id;
  WorldPoint center = WorldPoint::Zero();
  std::optional<double> diameter_mm;
  ConfidenceTier tier = ConfidenceTier::T3;
  Stage stage = Stage::CadeRefined;
  double cade_score_avg = 0.0;
  std::optional<double> cadx_avg;
  // "<MODEL>:<candidate_id>" for every input candidate folded into this one.
  std::vector<std::string> provenance;
};

std::string provenance_key(const CandidateDetection& c);

// Collapses same-model detections within `radius_mm` onto the best-scoring
// one. Returns survivors with the candidates each one absorbed.
struct Suppressed {
  CandidateDetection kept;
  std::vector<CandidateDetection> absorbed;
};
std::vector<Suppressed> suppress_duplicates(std::span<const CandidateDetection> list, double radius_mm);

using CadxProvider = std::function<CadxScores(const CandidateDetection&)>;

// How every input candidate was disposed of, counted per input candidate.
struct Accounting {
  std::size_t inputs = 0;
  std::size_t mask_rejected = 0;
  std::size_t pair_members = 0;
  std::size_t promoted = 0;
  std::size_t refined = 0;
  std::size_t rejected = 0;

  std::size_t total() const { return mask_rejected + pair_members + promoted + refined + rejected; }
};

struct TriStageResult {
  std::string scan_id;
  std::vector<FusedCandidate> fused;
  std::vector<ConsensusPair> pairs;
  std::vector<CandidateDetection> rejected;
  std::vector<CandidateDetection> mask_rejected;
  Accounting accounting;
};

// Lung gating, consensus (tier 1.0), ensemble CADx promotion (tier 0.5) and
// CADe refinement (tier 0.2) for a single scan.
TriStageResult run_tri_stage(std::span<const CandidateDetection> list_a,
                             std::span<const CandidateDetection> list_b, const CadxProvider& cadx,
                             const LabelVolume* mask, const PipelineConfig& cfg);

using MaskLookup = std::function<const LabelVolume*(const std::string& scan_id)>;

// All scans, processed concurrently, returned in scan_id order.
std::vector<TriStageResult> run_pipeline(std::span<const CandidateDetection> all_a,
                                         std::span<const CandidateDetection> all_b,
                                         const CadxProvider& cadx, const MaskLookup& masks,
                                         const PipelineConfig& cfg);

// Score file lookup keyed by (scan_id, model, candidate_id).
class ScoreTableProvider {
 public:
  void add(const std::string& scan_id, SourceModel model, const std::string& candidate_id, CadxScores s);
  CadxScores operator()(const CandidateDetection& c) const;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, CadxScores> table_;
};

// Writes a patch for each candidate and runs `command` with the patch header
// path on stdin; stdout must hold two probabilities.
class ExternalScorerProvider {
 public:
  using VolumeLookup = std::function<const IntensityVolume*(const std::string& scan_id)>;

  ExternalScorerProvider(std::string command, VolumeLookup volumes, std::filesystem::path work_dir);
  CadxScores operator()(const CandidateDetection& c) const;

 private:
  std::string command_;
  VolumeLookup volumes_;
  std::filesystem::path work_dir_;
};

CadxScores parse_scorer_output(std::string_view out);

}  // namespace trifuse

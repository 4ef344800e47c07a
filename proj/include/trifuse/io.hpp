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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trifuse/core.hpp"
#include "trifuse/csv.hpp"
#include "trifuse/froc.hpp"
#include "trifuse/fusion.hpp"
#include "trifuse/reader_stats.hpp"
#include "trifuse/report_link.hpp"
#include "trifuse/threshold.hpp"

namespace trifuse::io {

// Convention of the coordinates in a file. Everything in memory is LPS.
enum class CoordinateConvention { Lps, Ras };

CoordinateConvention parse_coordinate_convention(std::string_view s);
std::string_view to_string(CoordinateConvention c);
// RAS and LPS differ by the sign of x and y, so the map is its own inverse.
WorldPoint convert(const WorldPoint& p, CoordinateConvention c);

// First line of every CSV output.
std::string manifest_comment(std::string_view digest);

// Candidates: scan_id, candidate_id, x_mm, y_mm, z_mm, diameter_mm, score, model.
std::vector<CandidateDetection> parse_candidates(const csv::Table& t, CoordinateConvention c = CoordinateConvention::Lps);
std::vector<CandidateDetection> read_candidates(const std::filesystem::path& path,
                                                CoordinateConvention c = CoordinateConvention::Lps);
std::string format_candidates(std::span<const CandidateDetection> list, std::string_view digest = {});

// References: scan_id, nodule_id, x_mm, y_mm, z_mm, diameter_mm, diagnosis,
// lungrads, reviewers, positive_votes, then optional rating columns.
std::vector<ReferenceNodule> parse_references(const csv::Table& t, CoordinateConvention c = CoordinateConvention::Lps);
std::vector<ReferenceNodule> read_references(const std::filesystem::path& path,
                                             CoordinateConvention c = CoordinateConvention::Lps);
std::string format_references(std::span<const ReferenceNodule> list, std::string_view digest = {});

// CADx scores: scan_id, model, candidate_id, p_luna, p_dlcs.
ScoreTableProvider parse_cadx_scores(const csv::Table& t);
ScoreTableProvider read_cadx_scores(const std::filesystem::path& path);

// Candidate columns (score = mean CADe score, model = FUSED, candidate_id =
// fused id) plus tier, stage, cadx_avg, provenance (';'-joined).
std::string format_fused(std::span<const FusedCandidate> list, std::string_view digest = {});
std::vector<FusedCandidate> parse_fused(const csv::Table& t, CoordinateConvention c = CoordinateConvention::Lps);
std::vector<FusedCandidate> read_fused(const std::filesystem::path& path,
                                       CoordinateConvention c = CoordinateConvention::Lps);

// Link targets from a fused file; rating columns named like the reference
// file, when present, become ordinals, and an optional lobe column is read.
std::vector<LinkTarget> parse_link_targets(const csv::Table& t, CoordinateConvention c = CoordinateConvention::Lps);

// Match outcomes: scan_id, status (TP, FN, FP, or NONE for an empty scan),
// nodule_id, candidate_id, model, score.
std::string format_matches(const LesionMatchResult& m, std::string_view digest = {});
LesionMatchResult parse_matches(const csv::Table& t);
LesionMatchResult read_matches(const std::filesystem::path& path);

// score, label (0/1, benign/cancer).
std::vector<LabeledScore> parse_labeled_scores(const csv::Table& t);

struct Report {
  std::string report_id;
  std::string scan_id;
  std::string text;
};

// Tab-separated report_id, scan_id, text. An empty file has no reports.
std::vector<Report> read_reports(const std::filesystem::path& path);

std::string format_link_matches(std::span<const EntityMatch> matches, std::string_view digest = {});

// Thresholds as "a,b,c", or the named default grid.
std::vector<double> parse_thresholds(std::string_view s, std::string_view mode);

std::string format_cadx_sweep(std::span<const CadxSweepRow> rows, std::string_view digest = {});
std::string format_cade_sweep(std::span<const CadeSweepRow> rows, std::string_view dataset,
                              std::string_view digest = {});

// Six significant digits unless `full_precision`.
nlohmann::json metrics_json(const StratifiedResult& r, std::string_view stratify, std::string_view digest,
                            bool full_precision);
// Stratum, CPM, Sen. @1 FP/scan, Detection Rate (Candidate/Scans).
std::string format_summary(const StratifiedResult& r, std::string_view digest = {});
// Sensitivity at every FP rate, detected/lesions and candidates per scan.
std::string format_froc(const StratifiedResult& r, std::string_view digest = {});

std::string format_detectability(std::span<const DetectabilityTable> tables, std::string_view digest = {});
std::string format_overlap(const MissedOverlap& o, std::string_view digest = {});
std::string format_consensus(std::span<const ConsensusRow> rows, std::string_view digest = {});

double round_significant(double v, int digits);

}  // namespace trifuse::io

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
#include <vector>

#include "trifuse/froc.hpp"

namespace trifuse {

struct LabeledScore {
  double score = 0.0;
  bool cancer = false;
};

struct CadxSweepRow {
  double threshold = 0.0;
  double recall = 0.0;
  // Absent when nothing is flagged.
  std::optional<double> precision;
  double fpr = 0.0;
  double flagged_pct = 0.0;
  std::size_t fn = 0;
  std::size_t fp = 0;
  std::size_t tp = 0;
  std::size_t missed() const { return fn; }
};

// Flagged = score >= threshold. Rows come back in ascending threshold order.
std::vector<CadxSweepRow> sweep_cadx(std::span<const LabeledScore> scored, std::vector<double> thresholds);

struct CadeSweepRow {
  double threshold = 0.0;
  double cpm = 0.0;
  std::size_t candidates_forwarded = 0;
  std::size_t missed = 0;
};

// Re-evaluates FROC on candidates with score >= threshold; the scan set is
// held fixed across rows.
std::vector<CadeSweepRow> sweep_cade(const EvaluationSet& set, std::vector<double> thresholds);

std::vector<double> cadx_default_grid();
// 0.05, 0.10, ..., 0.50
std::vector<double> cade_default_grid();

}  // namespace trifuse

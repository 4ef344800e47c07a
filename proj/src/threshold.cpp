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

#include "trifuse/threshold.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "trifuse/parallel.hpp"

namespace trifuse {

namespace {

std::vector<double> normalized_grid(std::vector<double> thresholds) {
  if (thresholds.empty()) throw InputError("threshold list is empty");
  for (double t : thresholds) {
    if (!std::isfinite(t)) throw InputError("thresholds must be finite");
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  return thresholds;
}

}  // namespace

std::vector<CadxSweepRow> sweep_cadx(std::span<const LabeledScore> scored, std::vector<double> thresholds) {
  const auto grid = normalized_grid(std::move(thresholds));
  std::size_t positives = 0;
  for (const auto& s : scored) {
    if (!(s.score >= 0.0 && s.score <= 1.0)) throw InputError(fmt::format("CADx score {} outside [0,1]", s.score));
    positives += s.cancer ? 1 : 0;
  }
  if (positives == 0) throw InputError("sweep_cadx: no cancer examples, recall undefined");
  const std::size_t negatives = scored.size() - positives;

  std::vector<CadxSweepRow> rows;
  rows.reserve(grid.size());
  for (double t : grid) {
    CadxSweepRow row;
    row.threshold = t;
    for (const auto& s : scored) {
      const bool flagged = s.score >= t;
      if (flagged && s.cancer) ++row.tp;
      else if (flagged) ++row.fp;
      else if (s.cancer) ++row.fn;
    }
    row.recall = static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fn);
    if (row.tp + row.fp > 0) row.precision = static_cast<double>(row.tp) / static_cast<double>(row.tp + row.fp);
    row.fpr = negatives > 0 ? static_cast<double>(row.fp) / static_cast<double>(negatives) : 0.0;
    row.flagged_pct = 100.0 * static_cast<double>(row.tp + row.fp) / static_cast<double>(scored.size());
    rows.push_back(row);
  }
  return rows;
}

std::vector<CadeSweepRow> sweep_cade(const EvaluationSet& set, std::vector<double> thresholds) {
  const auto grid = normalized_grid(std::move(thresholds));
  std::vector<CadeSweepRow> rows(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    EvaluationSet filtered{set.scans, {}, set.references};
    for (const auto& c : set.candidates) {
      if (c.score >= grid[i]) filtered.candidates.push_back(c);
    }
    const auto matches = match_lesions(filtered);
    rows[i].threshold = grid[i];
    rows[i].candidates_forwarded = filtered.candidates.size();
    rows[i].missed = matches.false_negative_count();
    rows[i].cpm = cpm(froc_curve(matches));
  });
  return rows;
}

std::vector<double> cadx_default_grid() { return {0.02, 0.03, 0.04, 0.08, 0.10}; }

std::vector<double> cade_default_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 10; ++k) g.push_back(k / 20.0);
  return g;
}

}  // namespace trifuse

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

#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "trifuse/io.hpp"
#include "trifuse/threshold.hpp"

using namespace trifuse;

namespace {

std::vector<LabeledScore> random_labeled(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution cancer(0.3);
  std::vector<LabeledScore> out;
  for (int i = 0; i < n; ++i) out.push_back({std::round(u(rng) * 50) / 50, cancer(rng)});
  out.push_back({u(rng), true});
  return out;
}

}  // namespace

TEST_CASE("threshold zero flags everything") {
  const std::vector<LabeledScore> s = {{0.0, true}, {0.3, false}, {0.9, true}};
  const auto rows = sweep_cadx(s, {0.0});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].recall == 1.0);
  CHECK(rows[0].flagged_pct == 100.0);
  CHECK(rows[0].fn == 0);
  CHECK(rows[0].fp == 1);
  CHECK(rows[0].tp == 2);
  CHECK(rows[0].fpr == 1.0);
  CHECK(*rows[0].precision == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("precision is absent when nothing is flagged") {
  const std::vector<LabeledScore> s = {{0.2, true}, {0.3, false}};
  const auto rows = sweep_cadx(s, {0.5});
  CHECK_FALSE(rows[0].precision.has_value());
  CHECK(rows[0].recall == 0.0);
  CHECK(rows[0].missed() == 1);
}

TEST_CASE("cadx sweep needs a cancer example") {
  const std::vector<LabeledScore> s = {{0.2, false}};
  CHECK_THROWS_AS(sweep_cadx(s, {0.1}), InputError);
  CHECK_THROWS_AS(sweep_cadx(std::vector<LabeledScore>{{1.5, true}}, {0.1}), InputError);
}

TEST_CASE("cadx sweep rows equal a brute-force confusion matrix") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_labeled(rng, 40);
    std::vector<double> grid;
    for (int k = 0; k <= 20; ++k) grid.push_back(k / 20.0);
    const auto rows = sweep_cadx(s, grid);
    REQUIRE(rows.size() == grid.size());
    for (const auto& r : rows) {
      std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
      for (const auto& x : s) {
        if (x.score >= r.threshold) (x.cancer ? tp : fp)++;
        else (x.cancer ? fn : tn)++;
      }
      CHECK(r.tp == tp);
      CHECK(r.fp == fp);
      CHECK(r.fn == fn);
      CHECK(r.recall == static_cast<double>(tp) / static_cast<double>(tp + fn));
      CHECK(r.flagged_pct == 100.0 * static_cast<double>(tp + fp) / static_cast<double>(s.size()));
      if (fp + tn) CHECK(r.fpr == static_cast<double>(fp) / static_cast<double>(fp + tn));
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].recall <= rows[i - 1].recall);
      CHECK(rows[i].flagged_pct <= rows[i - 1].flagged_pct);
    }
  }
}

TEST_CASE("thresholds are sorted and deduplicated") {
  const std::vector<LabeledScore> s = {{0.2, true}};
  const auto rows = sweep_cadx(s, {0.3, 0.1, 0.3});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].threshold == 0.1);
  CHECK(rows[1].threshold == 0.3);
}

TEST_CASE("default grids") {
  CHECK(cadx_default_grid() == std::vector<double>{0.02, 0.03, 0.04, 0.08, 0.10});
  const auto g = cade_default_grid();
  REQUIRE(g.size() == 10);
  CHECK(g.front() == 0.05);
  CHECK(g[3] == 0.20);
  CHECK(g.back() == 0.50);
}

TEST_CASE("cade sweep rows match the FROC oracle on the filtered list") {
  const auto set = EvaluationSet::assemble(io::read_candidates(testing::fixtures() / "ladder/candidates.csv"),
                                           io::read_references(testing::fixtures() / "ladder/references.csv"));
  const auto rows = sweep_cade(set, cade_default_grid());
  REQUIRE(rows.size() == 10);
  for (const auto& r : rows) {
    std::vector<CandidateDetection> kept;
    for (const auto& c : set.candidates) {
      if (c.score >= r.threshold) kept.push_back(c);
    }
    CHECK(r.candidates_forwarded == kept.size());
    const auto o = oracle::brute_force_froc(kept, set.references, set.scans.size());
    CHECK(std::abs(r.cpm - o.cpm) <= 1e-12);
  }
  CHECK(rows.front().missed == 1);
  CHECK(rows.back().missed == 2);
}

TEST_CASE("cade sweep is monotone on random inputs") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CandidateDetection> c;
    std::vector<ReferenceNodule> refs;
    for (int s = 0; s < 4; ++s) {
      const auto scan = fmt::format("s{}", s);
      for (auto& x : testing::random_candidates(rng, scan, SourceModel::CadeA, 6, 10)) c.push_back(x);
      for (auto& x : testing::random_references(rng, scan, 2, 10)) refs.push_back(x);
    }
    const auto rows = sweep_cade(EvaluationSet::assemble(c, refs), cade_default_grid());
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].candidates_forwarded <= rows[i - 1].candidates_forwarded);
      CHECK(rows[i].missed >= rows[i - 1].missed);
    }
  }
}

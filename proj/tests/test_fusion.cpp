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

#include <fstream>
#include <random>
#include <set>

#include "support.hpp"
#include "trifuse/atomic_file.hpp"
#include "trifuse/fusion.hpp"

using namespace trifuse;

namespace {

CandidateDetection cand(std::string id, SourceModel m, WorldPoint p, double score,
                        std::optional<double> d = std::nullopt, std::string scan = "s1") {
  return {std::move(scan), std::move(id), p, d, score, m};
}

constexpr auto A = SourceModel::CadeA;
constexpr auto B = SourceModel::CadeB;

CadxProvider constant_cadx(double p) {
  return [p](const CandidateDetection&) { return CadxScores{p, p}; };
}

// Every input candidate key, and where it ended up.
std::multiset<std::string> disposed(const TriStageResult& r) {
  std::multiset<std::string> out;
  for (const auto& f : r.fused) out.insert(f.provenance.begin(), f.provenance.end());
  for (const auto& c : r.rejected) out.insert(provenance_key(c));
  for (const auto& c : r.mask_rejected) out.insert(provenance_key(c));
  return out;
}

}  // namespace

TEST_CASE("ensemble CADx averages the two models") {
  CHECK(ensemble_cadx({0.2, 0.4}) == doctest::Approx(0.3));
  CHECK_THROWS_AS(ensemble_cadx({1.2, 0.4}), InputError);
}

TEST_CASE("diameter-aware consensus radius never falls below 5 mm") {
  const auto a = cand("a", A, WorldPoint::Zero(), 0.5, 30.0);
  const auto b = cand("b", B, WorldPoint::Zero(), 0.5, 4.0);
  CHECK(consensus_radius(a, b, {}) == 5.0);
  CHECK(consensus_radius(cand("a", A, WorldPoint::Zero(), 0.5), cand("b", B, WorldPoint::Zero(), 0.5), {}) == 5.0);
  ConsensusRadiusPolicy fixed{ConsensusRadiusPolicy::Kind::Fixed, 3.0};
  CHECK(consensus_radius(a, b, fixed) == 3.0);
}

TEST_CASE("two identical one-candidate lists give one tier 1.0 candidate") {
  const auto a = cand("1", A, WorldPoint(1, 2, 3), 0.7, 6.0);
  auto b = a;
  b.source_model = B;
  const auto r = run_tri_stage(std::vector{a}, std::vector{b}, constant_cadx(0.0), nullptr, {});
  REQUIRE(r.fused.size() == 1);
  CHECK(r.fused[0].tier == ConfidenceTier::T1);
  CHECK(tier_value(r.fused[0].tier) == 1.0);
  CHECK(r.fused[0].fused_id == "CADE_A:1+CADE_B:1");
  CHECK((r.fused[0].center - a.center).norm() < 1e-12);
  CHECK(r.fused[0].cade_score_avg == 0.7);
}

TEST_CASE("consensus pairs greedily by score sum, one to one") {
  // b1 is close to both a1 and a2; the higher sum (a2) wins it.
  const std::vector a = {cand("a1", A, WorldPoint(0, 0, 0), 0.5), cand("a2", A, WorldPoint(2, 0, 0), 0.9)};
  const std::vector b = {cand("b1", B, WorldPoint(1, 0, 0), 0.6)};
  const auto r = cross_detector_consensus(a, b);
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].member_a.candidate_id == "a2");
  REQUIRE(r.disagreements.size() == 1);
  CHECK(r.disagreements[0].candidate_id == "a1");
  CHECK(r.pairs[0].merged_score == doctest::Approx(0.75));
  CHECK(r.pairs[0].merged_center.x() == doctest::Approx((0.9 * 2 + 0.6 * 1) / 1.5));
}

TEST_CASE("equal score sums break ties by candidate id") {
  const std::vector a = {cand("a2", A, WorldPoint(0, 0, 0), 0.5), cand("a1", A, WorldPoint(0, 1, 0), 0.5)};
  const std::vector b = {cand("b1", B, WorldPoint(0, 0.5, 0), 0.5)};
  const auto r = cross_detector_consensus(a, b);
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].member_a.candidate_id == "a1");
}

TEST_CASE("pairing distance is inclusive at the radius") {
  const std::vector a = {cand("a", A, WorldPoint(0, 0, 0), 0.5)};
  CHECK(cross_detector_consensus(a, std::vector{cand("b", B, WorldPoint(5, 0, 0), 0.5)}).pairs.size() == 1);
  CHECK(cross_detector_consensus(a, std::vector{cand("b", B, WorldPoint(5.0001, 0, 0), 0.5)}).pairs.empty());
}

TEST_CASE("zero scores merge at the midpoint") {
  const auto r = cross_detector_consensus(std::vector{cand("a", A, WorldPoint(0, 0, 0), 0.0)},
                                          std::vector{cand("b", B, WorldPoint(2, 0, 0), 0.0)});
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs[0].merged_center.x() == 1.0);
}

TEST_CASE("disagreements are promoted, refined or rejected at inclusive thresholds") {
  const std::vector a = {cand("p", A, WorldPoint(0, 0, 0), 0.05), cand("r", A, WorldPoint(50, 0, 0), 0.20),
                         cand("x", A, WorldPoint(100, 0, 0), 0.19)};
  const CadxProvider cadx = [](const CandidateDetection& c) {
    return c.candidate_id == "p" ? CadxScores{0.05, 0.15} : CadxScores{0.0, 0.0};
  };
  const auto r = run_tri_stage(a, {}, cadx, nullptr, {});
  REQUIRE(r.fused.size() == 2);
  CHECK(r.fused[0].fused_id == "CADE_A:p");
  CHECK(r.fused[0].stage == Stage::CadxPromoted);
  CHECK(r.fused[0].cadx_avg.value() == doctest::Approx(0.10));
  CHECK(r.fused[1].fused_id == "CADE_A:r");
  CHECK(r.fused[1].stage == Stage::CadeRefined);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].candidate_id == "x");
  CHECK(r.accounting.promoted == 1);
  CHECK(r.accounting.refined == 1);
  CHECK(r.accounting.rejected == 1);
}

TEST_CASE("lung mask gates candidates before fusion") {
  VolumeHeader h;
  h.dims = {10, 1, 1};
  const auto mask = LabelVolume::generate(h, [](int i, int, int) { return i < 5 ? 30 : 0; });
  const std::vector a = {cand("in", A, WorldPoint(1, 0, 0), 0.9), cand("out", A, WorldPoint(8, 0, 0), 0.9),
                         cand("far", A, WorldPoint(80, 0, 0), 0.9)};
  const auto r = run_tri_stage(a, {}, constant_cadx(1.0), &mask, {});
  REQUIRE(r.fused.size() == 1);
  CHECK(r.fused[0].fused_id == "CADE_A:in");
  CHECK(r.mask_rejected.size() == 2);
  CHECK(r.accounting.mask_rejected == 2);
}

TEST_CASE("same-model duplicates fold into the best-scoring neighbour") {
  const std::vector a = {cand("lo", A, WorldPoint(0, 0, 0), 0.3), cand("hi", A, WorldPoint(1.5, 0, 0), 0.8),
                         cand("apart", A, WorldPoint(4.0, 0, 0), 0.2)};
  const auto kept = suppress_duplicates(a, 2.0);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].kept.candidate_id == "hi");
  REQUIRE(kept[0].absorbed.size() == 1);
  CHECK(kept[0].absorbed[0].candidate_id == "lo");
  CHECK(kept[1].kept.candidate_id == "apart");

  const auto r = run_tri_stage(a, {}, constant_cadx(1.0), nullptr, {});
  REQUIRE(r.fused.size() == 2);
  CHECK(r.fused[0].provenance == std::vector<std::string>{"CADE_A:hi", "CADE_A:lo"});
  CHECK(r.accounting.promoted == 3);

  PipelineConfig off;
  off.dedup_radius_mm.reset();
  CHECK(run_tri_stage(a, {}, constant_cadx(1.0), nullptr, off).fused.size() == 3);
}

TEST_CASE("scorer failures name the candidate") {
  const std::vector a = {cand("bad", A, WorldPoint(0, 0, 0), 0.9)};
  const CadxProvider boom = [](const CandidateDetection&) -> CadxScores { throw std::runtime_error("down"); };
  try {
    run_tri_stage(a, {}, boom, nullptr, {});
    FAIL("expected ScorerError");
  } catch (const ScorerError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  const CadxProvider out_of_range = [](const CandidateDetection&) { return CadxScores{1.5, 0.0}; };
  CHECK_THROWS_AS(run_tri_stage(a, {}, out_of_range, nullptr, {}), ScorerError);
}

TEST_CASE("input lists are validated") {
  CHECK_THROWS_AS(run_tri_stage(std::vector{cand("a", B, WorldPoint::Zero(), 0.5)}, {}, constant_cadx(0), nullptr, {}),
                  InputError);
  CHECK_THROWS_AS(run_tri_stage(std::vector{cand("a", A, WorldPoint::Zero(), 0.5), cand("a", A, WorldPoint(9, 9, 9), 0.5)},
                                {}, constant_cadx(0), nullptr, {}),
                  InputError);
  CHECK_THROWS_AS(run_tri_stage(std::vector{cand("a", A, WorldPoint::Zero(), 0.5, std::nullopt, "x")},
                                std::vector{cand("b", B, WorldPoint::Zero(), 0.5, std::nullopt, "y")}, constant_cadx(0),
                                nullptr, {}),
                  InputError);
}

TEST_CASE("every candidate is disposed of exactly once on random scans") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n(0, 7);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  VolumeHeader h;
  h.dims = {21, 21, 21};
  h.origin_mm = WorldPoint(-10, -10, -10);
  const auto mask = LabelVolume::generate(h, [](int i, int j, int k) { return (i + j + k) % 3 ? 28 + i % 5 : 0; });
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = testing::random_candidates(rng, "s", A, n(rng), 12);
    const auto b = testing::random_candidates(rng, "s", B, n(rng), 12);
    std::map<std::string, CadxScores> scores;
    for (const auto& list : {a, b})
      for (const auto& c : list) scores[provenance_key(c)] = {p(rng), p(rng)};
    const CadxProvider cadx = [&](const CandidateDetection& c) { return scores.at(provenance_key(c)); };
    PipelineConfig cfg;
    cfg.tau_cadx = p(rng);
    cfg.tau_cade = p(rng);
    const LabelVolume* m = trial % 2 ? &mask : nullptr;
    const auto r = run_tri_stage(a, b, cadx, m, cfg);
    std::multiset<std::string> inputs;
    for (const auto& list : {a, b})
      for (const auto& c : list) inputs.insert(provenance_key(c));
    CHECK(disposed(r) == inputs);
    CHECK(r.accounting.total() == a.size() + b.size());
  }
}

TEST_CASE("pipeline output does not depend on the worker count") {
  std::mt19937_64 rng(7);
  std::vector<CandidateDetection> a, b;
  for (int s = 0; s < 20; ++s) {
    const auto scan = fmt::format("scan{:02d}", s);
    for (auto& c : testing::random_candidates(rng, scan, A, 5, 15)) a.push_back(c);
    for (auto& c : testing::random_candidates(rng, scan, B, 5, 15)) b.push_back(c);
  }
  const auto cadx = [](const CandidateDetection& c) { return CadxScores{c.score, 1 - c.score}; };
  ::setenv("TRIFUSE_THREADS", "1", 1);
  const auto one = run_pipeline(a, b, cadx, {}, {});
  ::setenv("TRIFUSE_THREADS", "4", 1);
  const auto four = run_pipeline(a, b, cadx, {}, {});
  ::unsetenv("TRIFUSE_THREADS");
  REQUIRE(one.size() == 20);
  REQUIRE(four.size() == 20);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].scan_id == four[i].scan_id);
    REQUIRE(one[i].fused.size() == four[i].fused.size());
    for (std::size_t k = 0; k < one[i].fused.size(); ++k) {
      CHECK(one[i].fused[k].fused_id == four[i].fused[k].fused_id);
      CHECK(one[i].fused[k].center == four[i].fused[k].center);
    }
  }
}

TEST_CASE("score table lookup needs every row") {
  ScoreTableProvider t;
  t.add("s1", A, "1", {0.1, 0.2});
  CHECK(t(cand("1", A, WorldPoint::Zero(), 0.5)).p_dlcs == 0.2);
  CHECK_THROWS_AS(t(cand("1", B, WorldPoint::Zero(), 0.5)), ScorerError);
}

TEST_CASE("scorer output needs exactly two probabilities") {
  CHECK(parse_scorer_output("0.25 0.75\n").p_dlcs == 0.75);
  CHECK(parse_scorer_output("0.25\n0.75").p_luna == 0.25);
  CHECK_THROWS_AS(parse_scorer_output("0.25"), ScorerError);
  CHECK_THROWS_AS(parse_scorer_output("0.25 0.5 0.5"), ScorerError);
  CHECK_THROWS_AS(parse_scorer_output("0.25 high"), ScorerError);
  CHECK_THROWS_AS(parse_scorer_output("1.25 0.5"), ScorerError);
}

TEST_CASE("external scorer receives a patch header on stdin") {
  testing::TempDir dir("scorer");
  VolumeHeader h;
  h.dims = {40, 40, 40};
  h.origin_mm = WorldPoint(-20, -20, -20);
  const auto ct = IntensityVolume::filled(h, 100.0f);
  const auto script = dir / "score.sh";
  write_file_atomic(script,
                    "#!/bin/sh\nread hdr\ntest -f \"$hdr\" || exit 5\ngrep -q 'dims = 64 64 64' \"$hdr\" || exit 6\n"
                    "echo 0.3 0.4\n");
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  const ExternalScorerProvider::VolumeLookup lookup = [&](const std::string&) { return &ct; };
  ExternalScorerProvider ok(script.string(), lookup, dir.path());
  const auto s = ok(cand("c", A, WorldPoint::Zero(), 0.5));
  CHECK(s.p_luna == 0.3);
  CHECK(s.p_dlcs == 0.4);

  ExternalScorerProvider failing("exit 3", lookup, dir.path());
  CHECK_THROWS_AS(failing(cand("c", A, WorldPoint::Zero(), 0.5)), ScorerError);
  ExternalScorerProvider no_volume(script.string(), {}, dir.path());
  CHECK_THROWS_AS(no_volume(cand("c", A, WorldPoint::Zero(), 0.5)), ScorerError);
}

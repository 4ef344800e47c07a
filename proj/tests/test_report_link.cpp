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
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "trifuse/errors.hpp"
#include "trifuse/report_link.hpp"

using namespace trifuse;

namespace {

LinkTarget target(std::string id, std::optional<double> d, std::optional<Lobe> lobe = {},
                  ConfidenceTier tier = ConfidenceTier::T3, double score = 0.5) {
  LinkTarget t;
  t.id = std::move(id);
  t.scan_id = "s";
  t.diameter_mm = d;
  t.lobe = lobe;
  t.tier = tier;
  t.cade_score_avg = score;
  return t;
}

ReportEntity entity(std::optional<double> size, std::optional<Lobe> lobe = {}) {
  ReportEntity e;
  e.scan_id = "s";
  e.report_id = "r";
  e.size_mm = size;
  e.lobe = lobe;
  if (lobe) e.laterality = laterality_of(*lobe);
  return e;
}

std::size_t matched(const std::vector<EntityMatch>& m) {
  return static_cast<std::size_t>(
      std::count_if(m.begin(), m.end(), [](const EntityMatch& x) { return x.status == MatchStatus::Matched; }));
}

}  // namespace

TEST_CASE("lobe labels and names") {
  CHECK(lobe_from_label(28) == Lobe::LUL);
  CHECK(lobe_from_label(29) == Lobe::LLL);
  CHECK(lobe_from_label(30) == Lobe::RUL);
  CHECK(lobe_from_label(31) == Lobe::RML);
  CHECK(lobe_from_label(32) == Lobe::RLL);
  CHECK_FALSE(lobe_from_label(0));
  CHECK_FALSE(lobe_from_label(33));
  CHECK(laterality_of(Lobe::RML) == Laterality::Right);
  CHECK(laterality_of(Lobe::LLL) == Laterality::Left);
  for (auto l : {Lobe::LUL, Lobe::LLL, Lobe::RUL, Lobe::RML, Lobe::RLL}) CHECK(parse_lobe(to_string(l)) == l);
  CHECK(parse_laterality("right") == Laterality::Right);
  CHECK_FALSE(parse_lobe("XYZ"));
}

TEST_CASE("sentence splitting keeps decimals") {
  const auto s = split_sentences("A 1.5 cm nodule. Another one; stable!\nDone");
  REQUIRE(s.size() == 4);
  CHECK(s[0] == "A 1.5 cm nodule");
  CHECK(s[1] == "Another one");
  CHECK(s[2] == "stable");
  CHECK(s[3] == "Done");
  CHECK(split_sentences("  ").empty());
  CHECK(split_sentences("ends with 3.").back() == "ends with 3");
}

TEST_CASE("builtin grammar extraction") {
  const auto& g = ExtractionGrammar::builtin();
  const auto es = g.extract(
      "There is a 1.2 cm spiculated nodule in the right upper lobe, Lung-RADS 4B, subtlety 4 and malignancy score of 5. "
      "Lungs are otherwise clear. Small 4 mm granuloma at the left base. A mass measuring 30 mm in the LLL.",
      "r1", "scan9");
  REQUIRE(es.size() == 3);
  CHECK(es[0].report_id == "r1");
  CHECK(es[0].scan_id == "scan9");
  REQUIRE(es[0].size_mm);
  CHECK(*es[0].size_mm == doctest::Approx(12.0));
  CHECK(es[0].lobe == Lobe::RUL);
  CHECK(es[0].laterality == Laterality::Right);
  CHECK(es[0].lungrads == LungRads::Cat4B);
  CHECK(es[0].ordinals.at(Characteristic::Subtlety) == 4);
  CHECK(es[0].ordinals.at(Characteristic::Malignancy) == 5);
  CHECK(es[0].raw_span.find("right upper lobe") != std::string::npos);

  CHECK(*es[1].size_mm == 4.0);
  CHECK_FALSE(es[1].lobe);
  CHECK(es[1].laterality == Laterality::Left);

  CHECK(*es[2].size_mm == 30.0);
  CHECK(es[2].lobe == Lobe::LLL);
  CHECK(es[2].laterality == Laterality::Left);
}

TEST_CASE("out-of-range ordinals are dropped") {
  const auto es = ExtractionGrammar::builtin().extract("Nodule with subtlety 9 and texture 3");
  REQUIRE(es.size() == 1);
  CHECK(es[0].ordinals.count(Characteristic::Subtlety) == 0);
  CHECK(es[0].ordinals.at(Characteristic::Texture) == 3);
  CHECK(extract_entities("No findings", ExtractionGrammar::builtin()).empty());
}

TEST_CASE("grammar file matches the builtin rules") {
  const auto path = testing::fs::path(TRIFUSE_DATA) / "default_grammar.txt";
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto rules = [](std::string_view text) {
    std::vector<std::string> out;
    std::istringstream lines{std::string(text)};
    for (std::string l; std::getline(lines, l);) {
      if (!l.empty() && l[0] != '#') out.push_back(l);
    }
    return out;
  };
  CHECK(rules(ss.str()) == rules(ExtractionGrammar::builtin_source()));
  const auto g = ExtractionGrammar::load(path);
  const auto es = g.extract("A 7 mm nodule in the RML");
  REQUIRE(es.size() == 1);
  CHECK(es[0].lobe == Lobe::RML);
}

TEST_CASE("grammar errors") {
  CHECK_THROWS_AS(ExtractionGrammar::parse("size_mm (\\d+) mm"), ConfigError);
  CHECK_THROWS_AS(ExtractionGrammar::parse("mention nodule\nbogus x"), ConfigError);
  CHECK_THROWS_AS(ExtractionGrammar::parse("mention nodule\nlobe=XYZ x"), ConfigError);
  CHECK_THROWS_AS(ExtractionGrammar::parse("mention nodule\nlaterality=up x"), ConfigError);
  CHECK_THROWS_AS(ExtractionGrammar::parse("mention nodule\nordinal=DiamEq_Rad (\\d)"), ConfigError);
  CHECK_THROWS_AS(ExtractionGrammar::parse("mention nodule\nsize_mm \\d+ mm"), ConfigError);
  CHECK_THROWS_AS(ExtractionGrammar::parse("mention (unclosed"), ConfigError);
  CHECK_THROWS_AS(ExtractionGrammar::parse("mention"), ConfigError);
  try {
    ExtractionGrammar::parse("# c\nmention nodule\n\nlobe=Q x");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK_THROWS_AS(ExtractionGrammar::load("/nonexistent/grammar.txt"), ConfigError);
  const auto g = ExtractionGrammar::parse("mention \\bspot\\b\nsize_mm (\\d+)mm");
  const auto es = g.extract("A spot of 8mm. A nodule of 9mm.");
  REQUIRE(es.size() == 1);
  CHECK(*es[0].size_mm == 8.0);
}

TEST_CASE("assess boundaries") {
  const auto t = target("c", 10.0, Lobe::RUL);
  CHECK(assess(entity(13.0), t).size == Criterion::Pass);
  CHECK(assess(entity(7.0), t).size == Criterion::Pass);
  CHECK(assess(entity(13.01), t).size == Criterion::Fail);
  CHECK(assess(entity(std::nullopt), t).size == Criterion::NotApplicable);
  CHECK(assess(entity(13.5), t, {4.0, 1}).size == Criterion::Pass);

  CHECK(assess(entity(10.0, Lobe::RUL), t).location == Criterion::Pass);
  CHECK(assess(entity(10.0, Lobe::RML), t).location == Criterion::Fail);
  auto side = entity(10.0);
  side.laterality = Laterality::Right;
  CHECK(assess(side, t).location == Criterion::Pass);
  side.laterality = Laterality::Left;
  CHECK(assess(side, t).location == Criterion::Fail);
  CHECK(assess(entity(10.0, Lobe::LUL), target("c", 10.0)).location == Criterion::NotApplicable);

  auto tt = t;
  tt.ordinals[Characteristic::Subtlety] = 3;
  auto e = entity(10.0);
  CHECK(assess(e, tt).ordinals == Criterion::NotApplicable);
  e.ordinals[Characteristic::Subtlety] = 4;
  CHECK(assess(e, tt).ordinals == Criterion::Pass);
  e.ordinals[Characteristic::Subtlety] = 5;
  CHECK(assess(e, tt).ordinals == Criterion::Fail);
  CHECK(assess(e, tt, {3.0, 2}).ordinals == Criterion::Pass);
  e.ordinals[Characteristic::Subtlety] = 3;
  e.ordinals[Characteristic::Margin] = 1;
  CHECK(assess(e, tt).ordinals == Criterion::Pass);
  CHECK(assess(e, tt).admissible());
}

TEST_CASE("preference among admissible targets") {
  const std::vector<ReportEntity> one = {entity(10.0)};
  std::vector<LinkTarget> ts = {target("t3", 10.0, {}, ConfidenceTier::T3, 0.99),
                                target("t1", 12.0, {}, ConfidenceTier::T1, 0.3)};
  auto m = match_entities(one, ts);
  REQUIRE(m.size() == 2);
  CHECK(m[0].status == MatchStatus::Matched);
  CHECK(*m[0].candidate_id == "t1");
  CHECK(m[1].status == MatchStatus::CandidateOnly);
  CHECK(*m[1].candidate_id == "t3");

  ts = {target("lo", 10.0, {}, ConfidenceTier::T2, 0.4), target("hi", 12.5, {}, ConfidenceTier::T2, 0.6)};
  CHECK(*match_entities(one, ts)[0].candidate_id == "hi");
  ts = {target("far", 12.5), target("near", 10.5)};
  CHECK(*match_entities(one, ts)[0].candidate_id == "near");
  ts = {target("b", 10.0), target("a", 10.0)};
  CHECK(*match_entities(one, ts)[0].candidate_id == "a");
}

TEST_CASE("assignment prefers more matches over a better single match") {
  // e0 fits both; e1 fits only the preferred target.
  const std::vector<ReportEntity> es = {entity(10.0), entity(14.0)};
  const std::vector<LinkTarget> ts = {target("best", 12.0, {}, ConfidenceTier::T1), target("other", 9.0)};
  const auto m = match_entities(es, ts);
  REQUIRE(m.size() == 2);
  CHECK(*m[0].candidate_id == "other");
  CHECK(*m[1].candidate_id == "best");
}

TEST_CASE("statuses and edge cases") {
  CHECK(match_entities({}, {}).empty());
  const std::vector<ReportEntity> es = {entity(40.0)};
  const auto m = match_entities(es, {});
  REQUIRE(m.size() == 1);
  CHECK(m[0].status == MatchStatus::ReportOnly);
  CHECK_FALSE(m[0].candidate_id);
  auto other = entity(3.0);
  other.scan_id = "z";
  const std::vector<ReportEntity> mixed = {entity(1.0), other};
  CHECK_THROWS_AS(match_entities(mixed, {}), InputError);
  CHECK(to_string(MatchStatus::CandidateOnly) == "candidate_only");
  CHECK(to_string(Criterion::NotApplicable) == "n/a");
}

TEST_CASE("random instances reach the maximum matching") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> size(3.0, 30.0);
  std::uniform_int_distribution<int> lobe(0, 5);
  std::uniform_int_distribution<int> count(0, 7);
  auto pick_lobe = [&]() -> std::optional<Lobe> {
    const int l = lobe(rng);
    return l == 5 ? std::nullopt : std::optional(static_cast<Lobe>(l));
  };
  for (int k = 0; k < 300; ++k) {
    std::vector<ReportEntity> es;
    std::vector<LinkTarget> ts;
    const int ne = count(rng), nt = count(rng);
    for (int i = 0; i < ne; ++i) es.push_back(entity(size(rng), pick_lobe()));
    for (int j = 0; j < nt; ++j) {
      ts.push_back(target(fmt::format("t{}", j), size(rng), pick_lobe(), static_cast<ConfidenceTier>(j % 3)));
    }
    size_t previous = std::numeric_limits<std::size_t>::max();
    for (double tol : {6.0, 3.0, 1.0, 0.0}) {
      const LinkTolerances lt{tol, 1};
      std::vector<std::vector<bool>> adj(es.size(), std::vector<bool>(ts.size()));
      for (std::size_t i = 0; i < es.size(); ++i) {
        for (std::size_t j = 0; j < ts.size(); ++j) adj[i][j] = assess(es[i], ts[j], lt).admissible();
      }
      const auto m = match_entities(es, ts, lt);
      const auto n = matched(m);
      CHECK(n == oracle::max_matching(adj));
      CHECK(n <= previous);
      previous = n;
      CHECK(m.size() == es.size() + ts.size() - n);
      std::set<std::string> used;
      for (std::size_t i = 0; i < es.size(); ++i) {
        if (m[i].status != MatchStatus::Matched) continue;
        CHECK(used.insert(*m[i].candidate_id).second);
        CHECK(m[i].breakdown->admissible());
      }
    }
  }
}

TEST_CASE("injected mentions are all recovered") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> size(4.0, 25.0);
  for (int k = 0; k < 100; ++k) {
    std::vector<LinkTarget> ts;
    for (int j = 0; j < 8; ++j) ts.push_back(target(fmt::format("t{}", j), size(rng), static_cast<Lobe>(j % 5)));
    std::vector<ReportEntity> es;
    for (int j = 0; j < 8; j += 1 + k % 3) es.push_back(entity(ts[j].diameter_mm, ts[j].lobe));
    const auto m = match_entities(es, ts);
    CHECK(matched(m) == es.size());
  }
}

TEST_CASE("link_all groups by scan") {
  auto e1 = entity(10.0);
  auto e2 = entity(10.0);
  e2.scan_id = "a";
  auto t1 = target("x", 10.0);
  auto t2 = target("y", 10.0);
  t2.scan_id = "a";
  const std::vector<ReportEntity> es = {e1, e2};
  const std::vector<LinkTarget> ts = {t1, t2};
  const auto m = link_all(es, ts);
  REQUIRE(m.size() == 2);
  CHECK(m[0].entity->scan_id == "a");
  CHECK(*m[0].candidate_id == "y");
  CHECK(*m[1].candidate_id == "x");
}

TEST_CASE("lobe_of_candidate reads the nearest voxel") {
  VolumeHeader h;
  h.dims = Eigen::Vector3i(4, 4, 4);
  h.spacing_mm = Eigen::Vector3d(2.0, 2.0, 2.0);
  const auto mask = LabelVolume::generate(h, [](Eigen::Index i, Eigen::Index, Eigen::Index) {
    return static_cast<std::int32_t>(i < 2 ? 30 : 29);
  });
  CHECK(lobe_of_candidate(WorldPoint(0.9, 0, 0), mask) == Lobe::RUL);
  CHECK(lobe_of_candidate(WorldPoint(4.1, 2, 2), mask) == Lobe::LLL);
  CHECK_FALSE(lobe_of_candidate(WorldPoint(100, 0, 0), mask));
  FusedCandidate c;
  c.fused_id = "f";
  c.scan_id = "s";
  c.center = WorldPoint(6, 6, 6);
  c.diameter_mm = 5.0;
  c.tier = ConfidenceTier::T1;
  const auto t = LinkTarget::from(c, &mask);
  CHECK(t.lobe == Lobe::LLL);
  CHECK(t.tier == ConfidenceTier::T1);
  CHECK_FALSE(LinkTarget::from(c, nullptr).lobe);
}

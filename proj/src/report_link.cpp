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

#include "trifuse/report_link.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "trifuse/atomic_file.hpp"
#include "trifuse/text.hpp"

namespace trifuse {

std::string_view to_string(Lobe l) {
  switch (l) {
    case Lobe::LUL: return "LUL";
    case Lobe::LLL: return "LLL";
    case Lobe::RUL: return "RUL";
    case Lobe::RML: return "RML";
    case Lobe::RLL: return "RLL";
  }
  return "?";
}

std::string_view to_string(Laterality l) { return l == Laterality::Left ? "left" : "right"; }

std::optional<Lobe> parse_lobe(std::string_view s) {
  const auto t = text::trim(s);
  for (auto l : {Lobe::LUL, Lobe::LLL, Lobe::RUL, Lobe::RML, Lobe::RLL}) {
    if (text::iequals(t, to_string(l))) return l;
  }
  return std::nullopt;
}

std::optional<Laterality> parse_laterality(std::string_view s) {
  const auto t = text::trim(s);
  if (text::iequals(t, "left")) return Laterality::Left;
  if (text::iequals(t, "right")) return Laterality::Right;
  return std::nullopt;
}

Laterality laterality_of(Lobe l) {
  return (l == Lobe::LUL || l == Lobe::LLL) ? Laterality::Left : Laterality::Right;
}

std::optional<Lobe> lobe_from_label(int label) {
  switch (label) {
    case 28: return Lobe::LUL;
    case 29: return Lobe::LLL;
    case 30: return Lobe::RUL;
    case 31: return Lobe::RML;
    case 32: return Lobe::RLL;
    default: return std::nullopt;
  }
}

namespace {

constexpr std::string_view kBuiltinGrammar = R"(# Default English extraction rules: <target> <regex>
mention           \b(nodules?|mass(es)?|opacit(y|ies)|lesions?|granulomas?)\b
size_cm           (\d+(?:\.\d+)?)\s*cm\b
size_mm           (\d+(?:\.\d+)?)\s*mm\b
lobe=RUL          \bright\s+upper\s+lobe\b
lobe=RML          \bright\s+middle\s+lobe\b
lobe=RLL          \bright\s+lower\s+lobe\b
lobe=LUL          \bleft\s+upper\s+lobe\b
lobe=LLL          \bleft\s+lower\s+lobe\b
lobe=RUL          \bRUL\b
lobe=RML          \bRML\b
lobe=RLL          \bRLL\b
lobe=LUL          \bLUL\b
lobe=LLL          \bLLL\b
laterality=right  \bright\b
laterality=left   \bleft\b
lungrads          \blung-?rads\s*(?:category\s*)?([1-4][abx]?)\b
ordinal=Texture       \btexture\s*(?:score\s*)?(?:of\s*)?(\d)\b
ordinal=Subtlety      \bsubtlety\s*(?:score\s*)?(?:of\s*)?(\d)\b
ordinal=Malignancy    \bmalignancy\s*(?:score\s*)?(?:of\s*)?(\d)\b
ordinal=Spiculation   \bspiculation\s*(?:score\s*)?(?:of\s*)?(\d)\b
ordinal=Lobulation    \blobulation\s*(?:score\s*)?(?:of\s*)?(\d)\b
ordinal=Margin        \bmargin\s*(?:score\s*)?(?:of\s*)?(\d)\b
ordinal=Sphericity    \bsphericity\s*(?:score\s*)?(?:of\s*)?(\d)\b
ordinal=Calcification \bcalcification\s*(?:score\s*)?(?:of\s*)?(\d)\b
)";

}  // namespace

std::string_view ExtractionGrammar::builtin_source() { return kBuiltinGrammar; }

const ExtractionGrammar& ExtractionGrammar::builtin() {
  static const ExtractionGrammar g = parse(kBuiltinGrammar);
  return g;
}

ExtractionGrammar ExtractionGrammar::parse(std::string_view source) {
  ExtractionGrammar g;
  std::istringstream in{std::string(source)};
  std::string line;
  int line_no = 0;
  bool has_mention = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto split = t.find_first_of(" \t");
    if (split == std::string_view::npos) {
      throw ConfigError(fmt::format("grammar line {}: expected '<target> <regex>'", line_no));
    }
    const auto target = t.substr(0, split);
    const auto pattern = text::trim(t.substr(split));
    Rule rule{Target::Mention, {}, {}, {}, {}};
    const auto eq = target.find('=');
    const auto head = target.substr(0, eq);
    const auto arg = eq == std::string_view::npos ? std::string_view{} : target.substr(eq + 1);
    bool needs_group = true;
    if (head == "mention" && arg.empty()) {
      rule.target = Target::Mention;
      needs_group = false;
      has_mention = true;
    } else if (head == "size_mm" && arg.empty()) {
      rule.target = Target::SizeMm;
    } else if (head == "size_cm" && arg.empty()) {
      rule.target = Target::SizeCm;
    } else if (head == "lungrads" && arg.empty()) {
      rule.target = Target::LungRads;
    } else if (head == "lobe") {
      rule.target = Target::Lobe;
      rule.lobe = parse_lobe(arg);
      if (!rule.lobe) throw ConfigError(fmt::format("grammar line {}: unknown lobe '{}'", line_no, arg));
      needs_group = false;
    } else if (head == "laterality") {
      rule.target = Target::Laterality;
      rule.laterality = parse_laterality(arg);
      if (!rule.laterality) throw ConfigError(fmt::format("grammar line {}: unknown laterality '{}'", line_no, arg));
      needs_group = false;
    } else if (head == "ordinal") {
      rule.target = Target::Ordinal;
      rule.characteristic = parse_characteristic(arg);
      if (!rule.characteristic || !is_ordinal(*rule.characteristic)) {
        throw ConfigError(fmt::format("grammar line {}: unknown ordinal characteristic '{}'", line_no, arg));
      }
    } else {
      throw ConfigError(fmt::format("grammar line {}: unknown target '{}'", line_no, target));
    }
    try {
      rule.pattern = std::regex(std::string(pattern), std::regex::ECMAScript | std::regex::icase);
    } catch (const std::regex_error& e) {
      throw ConfigError(fmt::format("grammar line {}: invalid pattern: {}", line_no, e.what()));
    }
    if (needs_group && rule.pattern.mark_count() < 1) {
      throw ConfigError(fmt::format("grammar line {}: target '{}' needs a capture group", line_no, target));
    }
    g.rules_.push_back(std::move(rule));
  }
  if (!has_mention) throw ConfigError("grammar has no mention rule");
  return g;
}

ExtractionGrammar ExtractionGrammar::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> split_sentences(std::string_view t) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const auto s = text::trim(cur);
    if (!s.empty()) out.emplace_back(s);
    cur.clear();
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    const char c = t[i];
    const bool decimal = c == '.' && i > 0 && i + 1 < t.size() && std::isdigit(static_cast<unsigned char>(t[i - 1])) &&
                         std::isdigit(static_cast<unsigned char>(t[i + 1]));
    if ((c == '.' && !decimal) || c == '!' || c == '?' || c == ';' || c == '\n' || c == '\r') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<ReportEntity> ExtractionGrammar::extract(std::string_view report_text, const std::string& report_id,
                                                     const std::string& scan_id) const {
  std::vector<ReportEntity> out;
  for (const auto& sentence : split_sentences(report_text)) {
    bool mention = false;
    for (const auto& r : rules_) {
      if (r.target == Target::Mention && std::regex_search(sentence, r.pattern)) {
        mention = true;
        break;
      }
    }
    if (!mention) continue;

    ReportEntity e;
    e.report_id = report_id;
    e.scan_id = scan_id;
    e.raw_span = sentence;
    std::optional<Laterality> explicit_side;
    for (const auto& r : rules_) {
      std::smatch m;
      if (r.target == Target::Mention || !std::regex_search(sentence, m, r.pattern)) continue;
      switch (r.target) {
        case Target::SizeMm:
        case Target::SizeCm:
          if (!e.size_mm) {
            const auto v = text::parse_double(m[1].str());
            if (v && *v > 0.0 && std::isfinite(*v)) e.size_mm = r.target == Target::SizeCm ? *v * 10.0 : *v;
          }
          break;
        case Target::Lobe:
          if (!e.lobe) e.lobe = r.lobe;
          break;
        case Target::Laterality:
          if (!explicit_side) explicit_side = r.laterality;
          break;
        case Target::LungRads:
          if (!e.lungrads) e.lungrads = parse_lungrads(m[1].str());
          break;
        case Target::Ordinal: {
          const auto c = *r.characteristic;
          if (e.ordinals.count(c)) break;
          const auto v = text::parse_int(m[1].str());
          const auto range = rating_range(c);
          if (v && *v >= range.lo && *v <= range.hi) e.ordinals[c] = static_cast<int>(*v);
          break;
        }
        case Target::Mention: break;
      }
    }
    e.laterality = e.lobe ? std::optional(laterality_of(*e.lobe)) : explicit_side;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ReportEntity> extract_entities(std::string_view report_text, const ExtractionGrammar& grammar) {
  return grammar.extract(report_text);
}

std::optional<Lobe> lobe_of_candidate(const WorldPoint& center, const LabelVolume& mask) {
  const auto label = nearest_voxel(mask, center);
  return label ? lobe_from_label(*label) : std::nullopt;
}

std::optional<Lobe> lobe_of_candidate(const FusedCandidate& candidate, const LabelVolume& mask) {
  return lobe_of_candidate(candidate.center, mask);
}

LinkTarget LinkTarget::from(const FusedCandidate& c, const LabelVolume* mask) {
  LinkTarget t;
  t.id = c.fused_id;
  t.scan_id = c.scan_id;
  t.center = c.center;
  t.diameter_mm = c.diameter_mm;
  t.tier = c.tier;
  t.cade_score_avg = c.cade_score_avg;
  if (mask) t.lobe = lobe_of_candidate(c, *mask);
  return t;
}

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::Pass: return "pass";
    case Criterion::Fail: return "fail";
    case Criterion::NotApplicable: return "n/a";
  }
  return "?";
}

std::string_view to_string(MatchStatus s) {
  switch (s) {
    case MatchStatus::Matched: return "matched";
    case MatchStatus::ReportOnly: return "report_only";
    case MatchStatus::CandidateOnly: return "candidate_only";
  }
  return "?";
}

ScoreBreakdown assess(const ReportEntity& e, const LinkTarget& t, const LinkTolerances& tol) {
  ScoreBreakdown b;
  if (e.lobe && t.lobe) {
    b.location = *e.lobe == *t.lobe ? Criterion::Pass : Criterion::Fail;
  } else if (e.laterality && t.lobe) {
    b.location = *e.laterality == laterality_of(*t.lobe) ? Criterion::Pass : Criterion::Fail;
  }
  if (e.size_mm && t.diameter_mm) {
    b.size = std::abs(*e.size_mm - *t.diameter_mm) <= tol.size_mm ? Criterion::Pass : Criterion::Fail;
  }
  for (const auto& [c, v] : e.ordinals) {
    const auto it = t.ordinals.find(c);
    if (it == t.ordinals.end()) continue;
    if (std::abs(v - it->second) <= tol.ordinal_levels) {
      if (b.ordinals == Criterion::NotApplicable) b.ordinals = Criterion::Pass;
    } else {
      b.ordinals = Criterion::Fail;
    }
  }
  return b;
}

namespace {

// Min-cost perfect assignment on a square matrix (potentials method).
std::vector<int> solve_assignment(const std::vector<std::vector<long long>>& cost) {
  const int n = static_cast<int>(cost.size());
  constexpr long long inf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<long long> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      long long delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const long long cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

int tier_rank(ConfidenceTier t) {
  switch (t) {
    case ConfidenceTier::T1: return 3;
    case ConfidenceTier::T2: return 2;
    case ConfidenceTier::T3: return 1;
  }
  return 0;
}

}  // namespace

std::vector<EntityMatch> match_entities(std::span<const ReportEntity> entities, std::span<const LinkTarget> targets,
                                        const LinkTolerances& tol) {
  std::optional<std::string> scan;
  for (const auto& e : entities) {
    if (scan && e.scan_id != *scan) throw InputError(fmt::format("match_entities: mixed scans {} and {}", *scan, e.scan_id));
    scan = e.scan_id;
  }
  for (const auto& t : targets) {
    if (scan && t.scan_id != *scan) throw InputError(fmt::format("match_entities: mixed scans {} and {}", *scan, t.scan_id));
    scan = t.scan_id;
  }

  struct Edge {
    std::size_t e;
    std::size_t t;
    ScoreBreakdown breakdown;
    double size_diff;
    long long weight = 0;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    for (std::size_t j = 0; j < targets.size(); ++j) {
      const auto b = assess(entities[i], targets[j], tol);
      if (!b.admissible()) continue;
      const double diff = (entities[i].size_mm && targets[j].diameter_mm)
                              ? std::abs(*entities[i].size_mm - *targets[j].diameter_mm)
                              : 0.0;
      edges.push_back({i, j, b, diff});
    }
  }
  // Rank edges by preference; better edges get larger weights.
  std::vector<std::size_t> order(edges.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  auto key = [&](const Edge& x) {
    return std::make_tuple(-tier_rank(targets[x.t].tier), -targets[x.t].cade_score_avg, x.size_diff,
                           std::cref(targets[x.t].id), x.e);
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(edges[a]) < key(edges[b]); });
  const long long n_edges = static_cast<long long>(edges.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) edges[order[pos]].weight = n_edges - static_cast<long long>(pos);
  const long long cardinality_weight = n_edges * static_cast<long long>(std::min(entities.size(), targets.size())) + 1;

  const std::size_t n = std::max(entities.size(), targets.size());
  std::vector<std::vector<long long>> cost(n, std::vector<long long>(n, 0));
  for (const auto& e : edges) cost[e.e][e.t] = -(cardinality_weight + e.weight);
  const auto assignment = n > 0 ? solve_assignment(cost) : std::vector<int>{};

  std::vector<std::optional<std::size_t>> entity_edge(entities.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    if (assignment[e.e] == static_cast<int>(e.t)) entity_edge[e.e] = k;
  }

  std::vector<EntityMatch> out;
  std::vector<bool> target_used(targets.size(), false);
  for (std::size_t i = 0; i < entities.size(); ++i) {
    EntityMatch m;
    m.entity = entities[i];
    if (entity_edge[i]) {
      const auto& e = edges[*entity_edge[i]];
      m.status = MatchStatus::Matched;
      m.candidate_id = targets[e.t].id;
      m.breakdown = e.breakdown;
      target_used[e.t] = true;
    }
    out.push_back(std::move(m));
  }
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (target_used[j]) continue;
    EntityMatch m;
    m.status = MatchStatus::CandidateOnly;
    m.candidate_id = targets[j].id;
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<EntityMatch> link_all(std::span<const ReportEntity> entities, std::span<const LinkTarget> targets,
                                  const LinkTolerances& tol) {
  std::map<std::string, std::pair<std::vector<ReportEntity>, std::vector<LinkTarget>>> by_scan;
  for (const auto& e : entities) by_scan[e.scan_id].first.push_back(e);
  for (const auto& t : targets) by_scan[t.scan_id].second.push_back(t);
  std::vector<EntityMatch> out;
  for (const auto& [scan, lists] : by_scan) {
    auto m = match_entities(lists.first, lists.second, tol);
    out.insert(out.end(), std::make_move_iterator(m.begin()), std::make_move_iterator(m.end()));
  }
  return out;
}

}  // namespace trifuse

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

#include "trifuse/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <numeric>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "trifuse/atomic_file.hpp"
#include "trifuse/parallel.hpp"
#include "trifuse/text.hpp"

namespace trifuse {

void CadxScores::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(p_luna) || !unit(p_dlcs)) {
    throw InputError(fmt::format("CADx scores ({}, {}) outside [0,1]", p_luna, p_dlcs));
  }
}

double ensemble_cadx(const CadxScores& s) {
  s.validate();
  return (s.p_luna + s.p_dlcs) / 2.0;
}

double consensus_radius(const CandidateDetection& a, const CandidateDetection& b,
                        const ConsensusRadiusPolicy& policy) {
  if (policy.kind == ConsensusRadiusPolicy::Kind::Fixed) return policy.fixed_radius_mm;
  std::optional<double> d;
  for (const auto& c : {a.diameter_mm, b.diameter_mm}) {
    if (c) d = d ? std::max(*d, *c) : *c;
  }
  return d ? std::max(5.0, match_tolerance(*d)) : 5.0;
}

namespace {

void require_single_scan(std::span<const CandidateDetection> a, std::span<const CandidateDetection> b,
                         const char* where) {
  const std::string* scan = nullptr;
  for (auto list : {a, b}) {
    for (const auto& c : list) {
      if (!scan) scan = &c.scan_id;
      if (c.scan_id != *scan) {
        throw InputError(fmt::format("{}: mixed scan ids {} and {}", where, *scan, c.scan_id));
      }
    }
  }
}

bool ranks_before(const CandidateDetection& x, const CandidateDetection& y) {
  if (x.score != y.score) return x.score > y.score;
  return x.candidate_id < y.candidate_id;
}

}  // namespace

ConsensusResult cross_detector_consensus(std::span<const CandidateDetection> list_a,
                                         std::span<const CandidateDetection> list_b,
                                         const ConsensusRadiusPolicy& policy) {
  require_single_scan(list_a, list_b, "cross_detector_consensus");

  struct Edge {
    std::size_t a;
    std::size_t b;
    double sum;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < list_a.size(); ++i) {
    for (std::size_t j = 0; j < list_b.size(); ++j) {
      const auto& ca = list_a[i];
      const auto& cb = list_b[j];
      if (distance(ca.center, cb.center) <= consensus_radius(ca, cb, policy)) {
        edges.push_back({i, j, ca.score + cb.score});
      }
    }
  }
  std::sort(edges.begin(), edges.end(), [&](const Edge& x, const Edge& y) {
    if (x.sum != y.sum) return x.sum > y.sum;
    return std::tie(list_a[x.a].candidate_id, list_b[x.b].candidate_id) <
           std::tie(list_a[y.a].candidate_id, list_b[y.b].candidate_id);
  });

  std::vector<bool> used_a(list_a.size(), false);
  std::vector<bool> used_b(list_b.size(), false);
  ConsensusResult out;
  for (const auto& e : edges) {
    if (used_a[e.a] || used_b[e.b]) continue;
    used_a[e.a] = used_b[e.b] = true;
    const auto& ca = list_a[e.a];
    const auto& cb = list_b[e.b];
    ConsensusPair p{ca, cb, WorldPoint::Zero(), (ca.score + cb.score) / 2.0};
    p.merged_center = e.sum > 0.0 ? ((ca.score * ca.center + cb.score * cb.center) / e.sum).eval()
                                  : ((ca.center + cb.center) / 2.0).eval();
    out.pairs.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < list_a.size(); ++i) {
    if (!used_a[i]) out.disagreements.push_back(list_a[i]);
  }
  for (std::size_t j = 0; j < list_b.size(); ++j) {
    if (!used_b[j]) out.disagreements.push_back(list_b[j]);
  }
  return out;
}

double tier_value(ConfidenceTier t) {
  switch (t) {
    case ConfidenceTier::T1: return 1.0;
    case ConfidenceTier::T2: return 0.5;
    case ConfidenceTier::T3: return 0.2;
  }
  return 0.0;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Consensus: return "consensus";
    case Stage::CadxPromoted: return "cadx_promoted";
    case Stage::CadeRefined: return "cade_refined";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  const auto t = text::trim(s);
  if (t == "consensus") return Stage::Consensus;
  if (t == "cadx_promoted") return Stage::CadxPromoted;
  if (t == "cade_refined") return Stage::CadeRefined;
  throw InputError(fmt::format("unknown stage '{}'", t));
}

ConfidenceTier tier_of(Stage s) {
  switch (s) {
    case Stage::Consensus: return ConfidenceTier::T1;
    case Stage::CadxPromoted: return ConfidenceTier::T2;
    case Stage::CadeRefined: return ConfidenceTier::T3;
  }
  return ConfidenceTier::T3;
}

std::string provenance_key(const CandidateDetection& c) {
  return fmt::format("{}:{}", to_string(c.source_model), c.candidate_id);
}

std::vector<Suppressed> suppress_duplicates(std::span<const CandidateDetection> list, double radius_mm) {
  std::vector<const CandidateDetection*> order;
  order.reserve(list.size());
  for (const auto& c : list) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return ranks_before(*x, *y); });

  std::vector<Suppressed> kept;
  for (const auto* c : order) {
    auto owner = std::find_if(kept.begin(), kept.end(), [&](const Suppressed& s) {
      return distance(s.kept.center, c->center) <= radius_mm;
    });
    if (owner == kept.end()) {
      kept.push_back({*c, {}});
    } else {
      owner->absorbed.push_back(*c);
    }
  }
  return kept;
}

namespace {

void validate_list(std::span<const CandidateDetection> list, SourceModel expected) {
  std::set<std::string> ids;
  for (const auto& c : list) {
    c.validate();
    if (c.source_model != expected) {
      throw InputError(fmt::format("candidate {}/{} tagged {} in the {} list", c.scan_id, c.candidate_id,
                                   to_string(c.source_model), to_string(expected)));
    }
    if (!ids.insert(c.candidate_id).second) {
      throw InputError(fmt::format("duplicate candidate_id {} in scan {} for {}", c.candidate_id, c.scan_id,
                                   to_string(expected)));
    }
  }
}

struct Tracked {
  CandidateDetection primary;
  std::vector<CandidateDetection> absorbed;
};

std::vector<std::string> provenance_of(const std::vector<const Tracked*>& members) {
  std::vector<std::string> out;
  for (const auto* m : members) out.push_back(provenance_key(m->primary));
  for (const auto* m : members) {
    for (const auto& d : m->absorbed) out.push_back(provenance_key(d));
  }
  return out;
}

}  // namespace

TriStageResult run_tri_stage(std::span<const CandidateDetection> list_a,
                             std::span<const CandidateDetection> list_b, const CadxProvider& cadx,
                             const LabelVolume* mask, const PipelineConfig& cfg) {
  cfg.validate();
  require_single_scan(list_a, list_b, "run_tri_stage");
  validate_list(list_a, SourceModel::CadeA);
  validate_list(list_b, SourceModel::CadeB);

  TriStageResult result;
  if (!list_a.empty()) result.scan_id = list_a.front().scan_id;
  else if (!list_b.empty()) result.scan_id = list_b.front().scan_id;
  result.accounting.inputs = list_a.size() + list_b.size();

  auto gate = [&](std::span<const CandidateDetection> list) {
    std::vector<CandidateDetection> kept;
    for (const auto& c : list) {
      if (mask && !centroid_in_lung(c.center, *mask, cfg.lung_labels)) {
        result.mask_rejected.push_back(c);
      } else {
        kept.push_back(c);
      }
    }
    return kept;
  };
  auto dedup = [&](const std::vector<CandidateDetection>& list) {
    std::vector<Tracked> out;
    if (!cfg.dedup_radius_mm) {
      for (const auto& c : list) out.push_back({c, {}});
      return out;
    }
    for (auto& s : suppress_duplicates(list, *cfg.dedup_radius_mm)) {
      out.push_back({std::move(s.kept), std::move(s.absorbed)});
    }
    return out;
  };

  const auto tracked_a = dedup(gate(list_a));
  const auto tracked_b = dedup(gate(list_b));

  std::map<std::string, const Tracked*> by_key;
  std::vector<CandidateDetection> lead_a, lead_b;
  for (const auto& t : tracked_a) {
    by_key[provenance_key(t.primary)] = &t;
    lead_a.push_back(t.primary);
  }
  for (const auto& t : tracked_b) {
    by_key[provenance_key(t.primary)] = &t;
    lead_b.push_back(t.primary);
  }

  auto consensus = cross_detector_consensus(lead_a, lead_b, cfg.consensus_radius);

  for (const auto& p : consensus.pairs) {
    const std::vector<const Tracked*> members = {by_key.at(provenance_key(p.member_a)),
                                                 by_key.at(provenance_key(p.member_b))};
    FusedCandidate f;
    f.scan_id = result.scan_id;
    f.fused_id = provenance_key(p.member_a) + "+" + provenance_key(p.member_b);
    f.center = p.merged_center;
    std::vector<double> diam;
    for (const auto& d : {p.member_a.diameter_mm, p.member_b.diameter_mm}) {
      if (d) diam.push_back(*d);
    }
    if (!diam.empty()) f.diameter_mm = std::accumulate(diam.begin(), diam.end(), 0.0) / diam.size();
    f.stage = Stage::Consensus;
    f.tier = ConfidenceTier::T1;
    f.cade_score_avg = p.merged_score;
    f.provenance = provenance_of(members);
    result.accounting.pair_members += f.provenance.size();
    result.fused.push_back(std::move(f));
  }
  result.pairs = std::move(consensus.pairs);

  for (const auto& c : consensus.disagreements) {
    const Tracked* t = by_key.at(provenance_key(c));
    CadxScores scores;
    try {
      scores = cadx(c);
      scores.validate();
    } catch (const std::exception& e) {
      throw ScorerError(fmt::format("CADx scoring failed for candidate {} ({}) in scan {}: {}", c.candidate_id,
                                    to_string(c.source_model), c.scan_id, e.what()));
    }
    const double avg = ensemble_cadx(scores);
    FusedCandidate f;
    f.scan_id = result.scan_id;
    f.fused_id = provenance_key(c);
    f.center = c.center;
    f.diameter_mm = c.diameter_mm;
    f.cade_score_avg = c.score;
    f.provenance = provenance_of({t});
    if (avg >= cfg.tau_cadx) {
      f.stage = Stage::CadxPromoted;
      f.cadx_avg = avg;
      result.accounting.promoted += f.provenance.size();
    } else if (c.score >= cfg.tau_cade) {
      f.stage = Stage::CadeRefined;
      result.accounting.refined += f.provenance.size();
    } else {
      result.rejected.push_back(t->primary);
      result.rejected.insert(result.rejected.end(), t->absorbed.begin(), t->absorbed.end());
      continue;
    }
    f.tier = tier_of(f.stage);
    result.fused.push_back(std::move(f));
  }
  result.accounting.rejected = result.rejected.size();
  result.accounting.mask_rejected = result.mask_rejected.size();

  std::sort(result.fused.begin(), result.fused.end(), [](const FusedCandidate& x, const FusedCandidate& y) {
    if (x.tier != y.tier) return static_cast<int>(x.tier) < static_cast<int>(y.tier);
    if (x.cade_score_avg != y.cade_score_avg) return x.cade_score_avg > y.cade_score_avg;
    return x.fused_id < y.fused_id;
  });

  if (result.accounting.total() != result.accounting.inputs) {
    throw InvariantError(fmt::format("scan {}: {} inputs but {} accounted for", result.scan_id,
                                     result.accounting.inputs, result.accounting.total()));
  }
  return result;
}

std::vector<TriStageResult> run_pipeline(std::span<const CandidateDetection> all_a,
                                         std::span<const CandidateDetection> all_b,
                                         const CadxProvider& cadx, const MaskLookup& masks,
                                         const PipelineConfig& cfg) {
  std::map<std::string, std::pair<std::vector<CandidateDetection>, std::vector<CandidateDetection>>> scans;
  for (const auto& c : all_a) scans[c.scan_id].first.push_back(c);
  for (const auto& c : all_b) scans[c.scan_id].second.push_back(c);

  std::vector<const decltype(scans)::value_type*> work;
  for (const auto& kv : scans) work.push_back(&kv);
  std::vector<TriStageResult> out(work.size());
  parallel_for(work.size(), [&](std::size_t i) {
    const auto& [scan, lists] = *work[i];
    const LabelVolume* mask = masks ? masks(scan) : nullptr;
    out[i] = run_tri_stage(lists.first, lists.second, cadx, mask, cfg);
    out[i].scan_id = scan;
  });
  return out;
}

void ScoreTableProvider::add(const std::string& scan_id, SourceModel model, const std::string& candidate_id,
                             CadxScores s) {
  s.validate();
  const auto key = fmt::format("{}\x1f{}\x1f{}", scan_id, to_string(model), candidate_id);
  if (!table_.emplace(key, s).second) {
    throw InputError(fmt::format("duplicate CADx score row for {}/{}/{}", scan_id, to_string(model), candidate_id));
  }
}

CadxScores ScoreTableProvider::operator()(const CandidateDetection& c) const {
  const auto key = fmt::format("{}\x1f{}\x1f{}", c.scan_id, to_string(c.source_model), c.candidate_id);
  const auto it = table_.find(key);
  if (it == table_.end()) throw ScorerError("no CADx score row");
  return it->second;
}

ExternalScorerProvider::ExternalScorerProvider(std::string command, VolumeLookup volumes,
                                               std::filesystem::path work_dir)
    : command_(std::move(command)), volumes_(std::move(volumes)), work_dir_(std::move(work_dir)) {}

CadxScores parse_scorer_output(std::string_view out) {
  std::string flattened(out);
  std::replace_if(flattened.begin(), flattened.end(), [](char ch) { return ch == '\n' || ch == '\r'; }, ' ');
  const auto flat = text::split_ws(flattened);
  if (flat.size() != 2) throw ScorerError(fmt::format("expected two probabilities, got '{}'", text::trim(out)));
  const auto a = text::parse_double(flat[0]);
  const auto b = text::parse_double(flat[1]);
  if (!a || !b) throw ScorerError(fmt::format("unparseable scorer output '{}'", text::trim(out)));
  CadxScores s{*a, *b};
  try {
    s.validate();
  } catch (const InputError& e) {
    throw ScorerError(e.what());
  }
  return s;
}

CadxScores ExternalScorerProvider::operator()(const CandidateDetection& c) const {
  static std::atomic<unsigned long> counter{0};
  const IntensityVolume* vol = volumes_ ? volumes_(c.scan_id) : nullptr;
  if (!vol) throw ScorerError(fmt::format("no CT volume available for scan {}", c.scan_id));

  std::string stem = fmt::format("{}_{}_{}_{}", c.scan_id, to_string(c.source_model), c.candidate_id, counter++);
  for (auto& ch : stem) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  const auto header = std::filesystem::absolute(work_dir_ / (stem + ".hdr"));
  write_patch(extract_patch(*vol, c.center), header);
  const auto stdin_file = work_dir_ / (stem + ".stdin");
  write_file_atomic(stdin_file, header.string() + "\n");

  const std::string cmd = fmt::format("{} < '{}'", command_, stdin_file.string());
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw ScorerError(fmt::format("cannot start scorer command '{}'", command_));
  std::string output;
  char buf[256];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
  const int status = ::pclose(pipe);
  if (status != 0) throw ScorerError(fmt::format("scorer exited with status {}", status));
  return parse_scorer_output(output);
}

}  // namespace trifuse

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

// Independent reference implementations used only by the tests. They work on
// plain arrays and share no code with the library beyond the record types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trifuse/core.hpp"

namespace trifuse::oracle {

inline double hit_radius(double d) { return d < 10.0 ? 0.5 * d : 5.0; }

inline double dist(const WorldPoint& a, const WorldPoint& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline bool hit(const CandidateDetection& c, const ReferenceNodule& r) {
  return c.scan_id == r.scan_id && dist(c.center, r.center) <= hit_radius(r.diameter_mm);
}

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
};

// Greedy matching of one scan on the candidates with score >= cutoff:
// descending score, each takes the nearest free reference it hits.
inline Counts greedy_counts(std::vector<CandidateDetection> cands, const std::vector<ReferenceNodule>& refs,
                            double cutoff) {
  std::erase_if(cands, [&](const CandidateDetection& c) { return c.score < cutoff; });
  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.candidate_id < b.candidate_id;
  });
  std::vector<bool> used(refs.size(), false);
  Counts out;
  for (const auto& c : cands) {
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < refs.size(); ++j) {
      if (used[j] || !hit(c, refs[j])) continue;
      const double d = dist(c.center, refs[j].center);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best) {
      used[*best] = true;
      ++out.tp;
    } else {
      ++out.fp;
    }
  }
  return out;
}

struct Froc {
  std::array<double, 7> sens{};
  double cpm = 0.0;
};

// Tries every score cutoff; at each FP/scan rate keeps the best sensitivity
// among cutoffs whose FP count stays within the budget.
inline Froc brute_force_froc(const std::vector<CandidateDetection>& cands, const std::vector<ReferenceNodule>& refs,
                             std::size_t n_scans) {
  const std::array<double, 7> rates = {1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0, 2.0, 4.0, 8.0};
  std::set<double> cutoffs = {std::numeric_limits<double>::infinity()};
  for (const auto& c : cands) cutoffs.insert(c.score);
  std::map<std::string, std::pair<std::vector<CandidateDetection>, std::vector<ReferenceNodule>>> by_scan;
  for (const auto& c : cands) by_scan[c.scan_id].first.push_back(c);
  for (const auto& r : refs) by_scan[r.scan_id].second.push_back(r);
  Froc f;
  for (double t : cutoffs) {
    Counts total;
    for (const auto& [scan, lists] : by_scan) {
      const auto c = greedy_counts(lists.first, lists.second, t);
      total.tp += c.tp;
      total.fp += c.fp;
    }
    const double fp_rate = static_cast<double>(total.fp) / static_cast<double>(n_scans);
    const double s = static_cast<double>(total.tp) / static_cast<double>(refs.size());
    for (std::size_t i = 0; i < rates.size(); ++i) {
      if (fp_rate <= rates[i]) f.sens[i] = std::max(f.sens[i], s);
    }
  }
  f.cpm = std::accumulate(f.sens.begin(), f.sens.end(), 0.0) / 7.0;
  return f;
}

// Size of a maximum matching in a bipartite graph given as adjacency rows.
inline std::size_t max_matching(const std::vector<std::vector<bool>>& adj) {
  const std::size_t n = adj.size();
  const std::size_t m = n ? adj[0].size() : 0;
  std::function<std::size_t(std::size_t, unsigned)> best = [&](std::size_t i, unsigned used) -> std::size_t {
    if (i == n) return 0;
    std::size_t r = best(i + 1, used);
    for (std::size_t j = 0; j < m; ++j) {
      if (adj[i][j] && !(used & (1u << j))) r = std::max(r, 1 + best(i + 1, used | (1u << j)));
    }
    return r;
  };
  return best(0, 0);
}

// Two-sided exact Mann-Whitney p by enumerating every split of ranks 1..n.
inline double mann_whitney_enumerated_p(double u, std::size_t n1, std::size_t n2) {
  const std::size_t n = n1 + n2;
  std::map<long, double> counts;
  double total = 0.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n1) continue;
    long rank_sum = 0;
    for (std::size_t b = 0; b < n; ++b) {
      if (mask & (1u << b)) rank_sum += static_cast<long>(b + 1);
    }
    counts[rank_sum - static_cast<long>(n1 * (n1 + 1) / 2)] += 1.0;
    total += 1.0;
  }
  double lower = 0.0, upper = 0.0;
  for (const auto& [k, c] : counts) {
    if (static_cast<double>(k) <= u) lower += c;
    if (static_cast<double>(k) >= u) upper += c;
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

// U by direct pair counting.
inline double pair_count_u(const std::vector<double>& x, const std::vector<double>& y) {
  double u = 0.0;
  for (double a : x)
    for (double b : y) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return u;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double pooled = std::sqrt(((n1 - 1) * sample_var(a) + (n2 - 1) * sample_var(b)) / (n1 + n2 - 2));
  return (mean(a) - mean(b)) / pooled;
}

}  // namespace trifuse::oracle

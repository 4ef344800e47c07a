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

#include "trifuse/io.hpp"

#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "trifuse/atomic_file.hpp"
#include "trifuse/errors.hpp"
#include "trifuse/text.hpp"

namespace trifuse::io {

CoordinateConvention parse_coordinate_convention(std::string_view s) {
  const auto t = text::trim(s);
  if (text::iequals(t, "lps")) return CoordinateConvention::Lps;
  if (text::iequals(t, "ras")) return CoordinateConvention::Ras;
  throw ConfigError(fmt::format("unknown coordinate convention '{}' (expected lps or ras)", t));
}

std::string_view to_string(CoordinateConvention c) { return c == CoordinateConvention::Lps ? "lps" : "ras"; }

WorldPoint convert(const WorldPoint& p, CoordinateConvention c) {
  if (c == CoordinateConvention::Lps) return p;
  return WorldPoint(-p.x(), -p.y(), p.z());
}

std::string manifest_comment(std::string_view digest) { return fmt::format(" manifest_sha256={}", digest); }

double round_significant(double v, int digits) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  return std::stod(fmt::format("{:.{}g}", v, digits));
}

namespace {

using csv::format_optional;
using csv::format_real;

csv::Writer start(std::string_view digest, char delimiter = ',') {
  csv::Writer w(delimiter);
  if (!digest.empty()) w.comment(manifest_comment(digest));
  return w;
}

WorldPoint read_point(const csv::Table::Row& row, CoordinateConvention c) {
  return convert(WorldPoint(row.real("x_mm"), row.real("y_mm"), row.real("z_mm")), c);
}

// Re-raises a record validation failure with the file and line.
template <typename T>
void validate_record(const T& record, const csv::Table& t, const csv::Table::Row& row) {
  try {
    record.validate();
  } catch (const InputError& e) {
    throw InputError(fmt::format("{}: line {}: {}", t.source(), row.line(), e.what()));
  }
}

void reject_duplicates(const csv::Table& t, const csv::Table::Row& row, std::set<std::string>& seen,
                       const std::string& key, std::string_view what) {
  if (!seen.insert(key).second) {
    throw InputError(fmt::format("{}: line {}: duplicate {} {}", t.source(), row.line(), what, key));
  }
}

std::string fixed(double v, int decimals) { return fmt::format("{:.{}f}", v, decimals); }

}  // namespace

std::vector<CandidateDetection> parse_candidates(const csv::Table& t, CoordinateConvention c) {
  for (auto col : {"scan_id", "candidate_id", "x_mm", "y_mm", "z_mm", "diameter_mm", "score", "model"}) t.column(col);
  std::vector<CandidateDetection> out;
  out.reserve(t.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = t.row(i);
    CandidateDetection d;
    d.scan_id = row.required("scan_id");
    d.candidate_id = row.required("candidate_id");
    d.center = read_point(row, c);
    d.diameter_mm = row.optional_real("diameter_mm");
    d.score = row.real("score");
    try {
      d.source_model = parse_source_model(row.text("model"));
    } catch (const InputError& e) {
      row.fail("model", e.what());
    }
    validate_record(d, t, row);
    reject_duplicates(t, row, seen, fmt::format("{}/{}/{}", d.scan_id, trifuse::to_string(d.source_model), d.candidate_id),
                      "candidate");
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<CandidateDetection> read_candidates(const std::filesystem::path& path, CoordinateConvention c) {
  return parse_candidates(csv::Table::read(path), c);
}

std::string format_candidates(std::span<const CandidateDetection> list, std::string_view digest) {
  auto w = start(digest);
  w.record({"scan_id", "candidate_id", "x_mm", "y_mm", "z_mm", "diameter_mm", "score", "model"});
  for (const auto& d : list) {
    w.record({d.scan_id, d.candidate_id, format_real(d.center.x()), format_real(d.center.y()),
              format_real(d.center.z()), format_optional(d.diameter_mm), format_real(d.score),
              std::string(trifuse::to_string(d.source_model))});
  }
  return w.str();
}

std::vector<ReferenceNodule> parse_references(const csv::Table& t, CoordinateConvention c) {
  for (auto col : {"scan_id", "nodule_id", "x_mm", "y_mm", "z_mm", "diameter_mm", "diagnosis", "lungrads",
                   "reviewers", "positive_votes"}) {
    t.column(col);
  }
  std::vector<std::pair<Characteristic, std::string>> rating_columns;
  for (auto ch : kAllCharacteristics) {
    const std::string name(column_name(ch));
    if (t.has_column(name)) rating_columns.emplace_back(ch, name);
  }
  std::vector<ReferenceNodule> out;
  out.reserve(t.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = t.row(i);
    ReferenceNodule r;
    r.scan_id = row.required("scan_id");
    r.nodule_id = row.required("nodule_id");
    r.center = read_point(row, c);
    r.diameter_mm = row.real("diameter_mm");
    try {
      r.diagnosis = parse_diagnosis(row.text("diagnosis"));
    } catch (const InputError& e) {
      row.fail("diagnosis", e.what());
    }
    const auto lr = row.text("lungrads");
    if (!lr.empty()) {
      r.lungrads = parse_lungrads(lr);
      if (!r.lungrads) row.fail("lungrads", fmt::format("'{}' is not a Lung-RADS category", lr));
    }
    const auto reviewers = row.optional_integer("reviewers");
    const auto positive = row.optional_integer("positive_votes");
    if (reviewers.has_value() != positive.has_value()) {
      row.fail(reviewers ? "positive_votes" : "reviewers", "reviewers and positive_votes must be given together");
    }
    if (reviewers) r.votes = Votes{static_cast<int>(*reviewers), static_cast<int>(*positive)};
    SemanticRatings ratings;
    for (const auto& [ch, name] : rating_columns) ratings.set(ch, row.optional_real(name));
    if (!ratings.empty()) r.ratings = ratings;
    validate_record(r, t, row);
    reject_duplicates(t, row, seen, fmt::format("{}/{}", r.scan_id, r.nodule_id), "nodule");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ReferenceNodule> read_references(const std::filesystem::path& path, CoordinateConvention c) {
  return parse_references(csv::Table::read(path), c);
}

std::string format_references(std::span<const ReferenceNodule> list, std::string_view digest) {
  auto w = start(digest);
  std::vector<std::string> header = {"scan_id",  "nodule_id", "x_mm",      "y_mm",          "z_mm",
                                     "diameter_mm", "diagnosis", "lungrads", "reviewers", "positive_votes"};
  std::vector<Characteristic> rated;
  for (auto ch : kAllCharacteristics) {
    for (const auto& r : list) {
      if (r.ratings && r.ratings->get(ch)) {
        rated.push_back(ch);
        break;
      }
    }
  }
  for (auto ch : rated) header.emplace_back(column_name(ch));
  w.record(header);
  for (const auto& r : list) {
    std::vector<std::string> f = {r.scan_id,
                                  r.nodule_id,
                                  format_real(r.center.x()),
                                  format_real(r.center.y()),
                                  format_real(r.center.z()),
                                  format_real(r.diameter_mm),
                                  std::string(trifuse::to_string(r.diagnosis)),
                                  r.lungrads ? std::string(trifuse::to_string(*r.lungrads)) : std::string(),
                                  r.votes ? std::to_string(r.votes->reviewers) : std::string(),
                                  r.votes ? std::to_string(r.votes->positive_votes) : std::string()};
    for (auto ch : rated) f.push_back(format_optional(r.ratings ? r.ratings->get(ch) : std::nullopt));
    w.record(f);
  }
  return w.str();
}

ScoreTableProvider parse_cadx_scores(const csv::Table& t) {
  for (auto col : {"scan_id", "model", "candidate_id", "p_luna", "p_dlcs"}) t.column(col);
  ScoreTableProvider p;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = t.row(i);
    const auto scan = row.required("scan_id");
    SourceModel model{};
    try {
      model = parse_source_model(row.text("model"));
    } catch (const InputError& e) {
      row.fail("model", e.what());
    }
    const auto id = row.required("candidate_id");
    CadxScores s{row.real("p_luna"), row.real("p_dlcs")};
    validate_record(s, t, row);
    reject_duplicates(t, row, seen, fmt::format("{}/{}/{}", scan, trifuse::to_string(model), id), "score row");
    p.add(scan, model, id, s);
  }
  return p;
}

ScoreTableProvider read_cadx_scores(const std::filesystem::path& path) {
  return parse_cadx_scores(csv::Table::read(path));
}

std::string format_fused(std::span<const FusedCandidate> list, std::string_view digest) {
  auto w = start(digest);
  w.record({"scan_id", "candidate_id", "x_mm", "y_mm", "z_mm", "diameter_mm", "score", "model", "tier", "stage",
            "cadx_avg", "provenance"});
  for (const auto& f : list) {
    std::string prov;
    for (std::size_t i = 0; i < f.provenance.size(); ++i) {
      if (i) prov += ';';
      prov += f.provenance[i];
    }
    w.record({f.scan_id, f.fused_id, format_real(f.center.x()), format_real(f.center.y()), format_real(f.center.z()),
              format_optional(f.diameter_mm), format_real(f.cade_score_avg), "FUSED",
              fmt::format("{:.1f}", tier_value(f.tier)), std::string(to_string(f.stage)),
              format_optional(f.cadx_avg), prov});
  }
  return w.str();
}

std::vector<FusedCandidate> parse_fused(const csv::Table& t, CoordinateConvention c) {
  for (auto col : {"scan_id", "candidate_id", "x_mm", "y_mm", "z_mm", "diameter_mm", "score", "model", "tier", "stage",
                   "cadx_avg", "provenance"}) {
    t.column(col);
  }
  std::vector<FusedCandidate> out;
  out.reserve(t.size());
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = t.row(i);
    FusedCandidate f;
    f.scan_id = row.required("scan_id");
    f.fused_id = row.required("candidate_id");
    f.center = read_point(row, c);
    f.diameter_mm = row.optional_real("diameter_mm");
    if (f.diameter_mm && !(*f.diameter_mm > 0.0)) row.fail("diameter_mm", "must be positive");
    f.cade_score_avg = row.real("score");
    try {
      f.stage = parse_stage(row.text("stage"));
    } catch (const InputError& e) {
      row.fail("stage", e.what());
    }
    f.tier = tier_of(f.stage);
    if (row.real("tier") != tier_value(f.tier)) row.fail("tier", "does not agree with stage");
    f.cadx_avg = row.optional_real("cadx_avg");
    const auto prov = row.text("provenance");
    if (!prov.empty()) f.provenance = text::split(prov, ';');
    reject_duplicates(t, row, seen, fmt::format("{}/{}", f.scan_id, f.fused_id), "fused candidate");
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<FusedCandidate> read_fused(const std::filesystem::path& path, CoordinateConvention c) {
  return parse_fused(csv::Table::read(path), c);
}

std::vector<LinkTarget> parse_link_targets(const csv::Table& t, CoordinateConvention c) {
  const auto fused = parse_fused(t, c);
  std::vector<std::pair<Characteristic, std::string>> ordinal_columns;
  for (auto ch : kAllCharacteristics) {
    const std::string name(column_name(ch));
    if (is_ordinal(ch) && t.has_column(name)) ordinal_columns.emplace_back(ch, name);
  }
  const bool has_lobe = t.has_column("lobe");
  std::vector<LinkTarget> out;
  out.reserve(fused.size());
  for (std::size_t i = 0; i < fused.size(); ++i) {
    const auto row = t.row(i);
    auto target = LinkTarget::from(fused[i], nullptr);
    for (const auto& [ch, name] : ordinal_columns) {
      const auto v = row.optional_integer(name);
      if (!v) continue;
      const auto range = rating_range(ch);
      if (*v < range.lo || *v > range.hi) row.fail(name, "rating out of range");
      target.ordinals[ch] = static_cast<int>(*v);
    }
    if (has_lobe) {
      const auto s = row.text("lobe");
      if (!s.empty()) {
        target.lobe = parse_lobe(s);
        if (!target.lobe) row.fail("lobe", fmt::format("unknown lobe '{}'", s));
      }
    }
    out.push_back(std::move(target));
  }
  return out;
}

std::string format_matches(const LesionMatchResult& m, std::string_view digest) {
  auto w = start(digest);
  w.record({"scan_id", "status", "nodule_id", "candidate_id", "model", "score"});
  for (const auto& s : m.scans) {
    if (s.true_positives.empty() && s.false_negatives.empty() && s.false_positives.empty()) {
      w.record({s.scan_id, "NONE", "", "", "", ""});
    }
    for (const auto& tp : s.true_positives) {
      w.record({s.scan_id, "TP", tp.nodule_id, tp.candidate_id, std::string(trifuse::to_string(tp.model)),
                format_real(tp.score)});
    }
    for (const auto& fn : s.false_negatives) w.record({s.scan_id, "FN", fn, "", "", ""});
    for (const auto& fp : s.false_positives) {
      w.record({s.scan_id, "FP", "", fp.candidate_id, std::string(trifuse::to_string(fp.model)),
                format_real(fp.score)});
    }
  }
  return w.str();
}

LesionMatchResult parse_matches(const csv::Table& t) {
  for (auto col : {"scan_id", "status", "nodule_id", "candidate_id", "model", "score"}) t.column(col);
  std::map<std::string, ScanMatch> scans;
  auto model_of = [](const csv::Table::Row& row) {
    try {
      return parse_source_model(row.text("model"));
    } catch (const InputError& e) {
      row.fail("model", e.what());
    }
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = t.row(i);
    const auto scan = row.required("scan_id");
    auto& s = scans[scan];
    s.scan_id = scan;
    const auto status = row.text("status");
    if (status == "TP") {
      s.true_positives.push_back({row.required("nodule_id"), row.required("candidate_id"), model_of(row),
                                  row.real("score")});
    } else if (status == "FN") {
      s.false_negatives.push_back(row.required("nodule_id"));
    } else if (status == "FP") {
      s.false_positives.push_back({row.required("candidate_id"), model_of(row), row.real("score")});
    } else if (status != "NONE") {
      row.fail("status", fmt::format("'{}' is not one of TP, FN, FP, NONE", status));
    }
  }
  LesionMatchResult out;
  for (auto& [id, s] : scans) out.scans.push_back(std::move(s));
  return out;
}

LesionMatchResult read_matches(const std::filesystem::path& path) { return parse_matches(csv::Table::read(path)); }

std::vector<LabeledScore> parse_labeled_scores(const csv::Table& t) {
  t.column("score");
  t.column("label");
  std::vector<LabeledScore> out;
  out.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = t.row(i);
    LabeledScore s;
    s.score = row.real("score");
    const auto label = text::to_lower(row.text("label"));
    if (label == "1" || label == "cancer" || label == "malignant") {
      s.cancer = true;
    } else if (label == "0" || label == "benign") {
      s.cancer = false;
    } else {
      row.fail("label", fmt::format("'{}' is not 0/1 or benign/cancer", label));
    }
    out.push_back(s);
  }
  return out;
}

std::vector<Report> read_reports(const std::filesystem::path& path) {
  const auto body = read_file(path);
  if (text::trim(body).empty()) return {};
  const auto t = csv::Table::parse(body, path.string(), '\t');
  for (auto col : {"report_id", "scan_id", "text"}) t.column(col);
  std::vector<Report> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto row = t.row(i);
    Report r{row.required("report_id"), row.required("scan_id"), row.raw("text")};
    reject_duplicates(t, row, seen, r.report_id, "report");
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_link_matches(std::span<const EntityMatch> matches, std::string_view digest) {
  auto w = start(digest);
  w.record({"scan_id", "report_id", "status", "candidate_id", "size_mm", "lobe", "laterality", "lungrads",
            "location", "size", "ordinals", "span"});
  for (const auto& m : matches) {
    std::vector<std::string> f(12);
    if (m.entity) {
      const auto& e = *m.entity;
      f[0] = e.scan_id;
      f[1] = e.report_id;
      f[4] = format_optional(e.size_mm);
      f[5] = e.lobe ? std::string(to_string(*e.lobe)) : "";
      f[6] = e.laterality ? std::string(to_string(*e.laterality)) : "";
      f[7] = e.lungrads ? std::string(trifuse::to_string(*e.lungrads)) : "";
      f[11] = e.raw_span;
    }
    f[2] = std::string(to_string(m.status));
    f[3] = m.candidate_id.value_or("");
    if (m.breakdown) {
      f[8] = std::string(to_string(m.breakdown->location));
      f[9] = std::string(to_string(m.breakdown->size));
      f[10] = std::string(to_string(m.breakdown->ordinals));
    }
    w.record(f);
  }
  return w.str();
}

std::vector<double> parse_thresholds(std::string_view s, std::string_view mode) {
  const auto t = text::trim(s);
  if (text::iequals(t, "default")) {
    if (mode == "cadx") return cadx_default_grid();
    if (mode == "cade") return cade_default_grid();
    throw ConfigError(fmt::format("no default grid for mode '{}'", mode));
  }
  std::vector<double> out;
  for (const auto& part : text::split(t, ',')) {
    const auto v = text::parse_double(text::trim(part));
    if (!v || !std::isfinite(*v)) throw ConfigError(fmt::format("threshold '{}' is not a number", part));
    out.push_back(*v);
  }
  if (out.empty()) throw ConfigError("no thresholds given");
  return out;
}

std::string format_cadx_sweep(std::span<const CadxSweepRow> rows, std::string_view digest) {
  auto w = start(digest);
  w.record({"Missed", "Threshold", "Recall", "Precision", "FPR", "Flagged (%)", "FN", "FP", "TP"});
  for (const auto& r : rows) {
    w.record({std::to_string(r.missed()), format_real(r.threshold), format_real(r.recall),
              format_optional(r.precision), format_real(r.fpr), format_real(r.flagged_pct), std::to_string(r.fn),
              std::to_string(r.fp), std::to_string(r.tp)});
  }
  return w.str();
}

std::string format_cade_sweep(std::span<const CadeSweepRow> rows, std::string_view dataset, std::string_view digest) {
  auto w = start(digest);
  w.record({"Dataset", "τ_CADe", "CPM", "Candidates (n)", "Missed (n)"});
  for (const auto& r : rows) {
    w.record({std::string(dataset), format_real(r.threshold), format_real(r.cpm),
              std::to_string(r.candidates_forwarded), std::to_string(r.missed)});
  }
  return w.str();
}

namespace {

nlohmann::json interval_json(const std::optional<Interval>& iv, bool full) {
  if (!iv) return nullptr;
  auto num = [&](double v) { return full ? v : round_significant(v, 6); };
  return {{"lo", num(iv->lo)}, {"hi", num(iv->hi)}};
}

nlohmann::json result_json(const FrocResult& r, bool full) {
  auto num = [&](double v) { return full ? v : round_significant(v, 6); };
  nlohmann::json froc = nlohmann::json::array();
  for (std::size_t i = 0; i < kFrocRates.size(); ++i) {
    froc.push_back({{"fp_per_scan", kFrocRates[i]},
                    {"sensitivity", num(r.curve.sensitivities[i])},
                    {"ci", interval_json(r.sensitivity_ci[i], full)}});
  }
  return {{"cpm", num(r.cpm)},
          {"cpm_ci", interval_json(r.cpm_ci, full)},
          {"sensitivity_at_1fp", num(r.sensitivity_at_one())},
          {"froc", froc},
          {"detected", r.detected},
          {"lesions", r.lesions},
          {"candidates", r.candidates},
          {"scans", r.scans},
          {"candidates_per_scan", num(r.candidates_per_scan)},
          {"bootstrap_skipped", r.bootstrap_skipped}};
}

std::string with_ci(double v, const std::optional<Interval>& ci) {
  if (!ci) return fixed(v, 2);
  return fmt::format("{:.2f} ({:.2f}-{:.2f})", v, ci->lo, ci->hi);
}

template <typename F>
void for_each_stratum(const StratifiedResult& r, F&& f) {
  f(std::string("Overall"), r.overall);
  for (const auto& s : r.strata) f(s.stratum, s.result);
}

}  // namespace

nlohmann::json metrics_json(const StratifiedResult& r, std::string_view stratify, std::string_view digest,
                            bool full_precision) {
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : r.strata) {
    auto j = result_json(s.result, full_precision);
    j["stratum"] = s.stratum;
    j["n_references"] = s.n_references;
    strata.push_back(std::move(j));
  }
  return {{"manifest_sha256", digest},
          {"stratify", stratify.empty() ? "none" : stratify},
          {"overall", result_json(r.overall, full_precision)},
          {"strata", strata},
          {"warnings", r.warnings}};
}

std::string format_summary(const StratifiedResult& r, std::string_view digest) {
  auto w = start(digest);
  w.record({"Stratum", "CPM", "Sen. @1 FP/scan", "Detection Rate (Candidate/Scans)"});
  for_each_stratum(r, [&](const std::string& name, const FrocResult& f) {
    w.record({name, with_ci(f.cpm, f.cpm_ci), with_ci(f.sensitivity_at_one(), f.sensitivity_ci[kRateOneIndex]),
              fmt::format("{:.2f} ({}/{})", f.candidates_per_scan, f.candidates, f.scans)});
  });
  return w.str();
}

std::string format_froc(const StratifiedResult& r, std::string_view digest) {
  auto w = start(digest);
  w.record({"Stratum", "CPM", "@1/8", "@1/4", "@1/2", "@1", "@2", "@4", "@8", "Detected", "Lesions", "Candidates",
            "Scans", "Candidate/Scans"});
  for_each_stratum(r, [&](const std::string& name, const FrocResult& f) {
    std::vector<std::string> row = {name, format_real(f.cpm)};
    for (double s : f.curve.sensitivities) row.push_back(format_real(s));
    row.push_back(std::to_string(f.detected));
    row.push_back(std::to_string(f.lesions));
    row.push_back(std::to_string(f.candidates));
    row.push_back(std::to_string(f.scans));
    row.push_back(format_real(f.candidates_per_scan));
    w.record(row);
  });
  return w.str();
}

std::string format_detectability(std::span<const DetectabilityTable> tables, std::string_view digest) {
  auto w = start(digest);
  w.record({"Scope", "Rank", "Characteristic", "Detected Mean", "Missed Mean", "Mean Difference", "Mann-Whitney p",
            "Cohen's d", "Effect Size", "Significant", "Bonferroni alpha", "Detected (n)", "Missed (n)", "Test"});
  for (const auto& t : tables) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& r = t.rows[i];
      w.record({t.scope, t.scope == "pooled" ? std::string() : std::to_string(i + 1),
                std::string(display_name(r.characteristic)), format_real(r.mean_detected),
                format_real(r.mean_missed), format_real(r.mean_diff), format_real(r.rank_test.p_value),
                format_real(r.effect.d), std::string(to_string(r.effect.label)),
                r.significant_after_bonferroni ? "yes" : "no", format_real(t.corrected_alpha),
                std::to_string(r.n_detected), std::to_string(r.n_missed),
                std::string(to_string(r.rank_test.method))});
    }
  }
  return w.str();
}

namespace {

void diameter_fields(std::vector<std::string>& f, const std::optional<ScoreSummary>& d) {
  if (!d) {
    f.insert(f.end(), {"", "", ""});
    return;
  }
  f.push_back(d->sd ? fmt::format("{:.2f} ± {:.2f}", d->mean, *d->sd) : fixed(d->mean, 2));
  f.push_back(fixed(d->median, 2));
  f.push_back(fmt::format("{:.2f}–{:.2f}", d->min, d->max));
}

}  // namespace

std::string format_overlap(const MissedOverlap& o, std::string_view digest) {
  auto w = start(digest);
  w.record({"Group", "Total Missed (n)", "Uniquely Missed (n)", "Share of Missed (%)", "Mean Diameter (mm)",
            "Median Diameter (mm)", "Diameter Range (mm)"});
  for (const auto& m : o.models) {
    std::vector<std::string> f = {m.model, std::to_string(m.total_missed), std::to_string(m.uniquely_missed), ""};
    diameter_fields(f, m.diameter);
    w.record(f);
  }
  for (const auto& c : o.categories) {
    std::vector<std::string> f = {c.category, std::to_string(c.count), "", fixed(c.pct, 1)};
    diameter_fields(f, c.diameter);
    w.record(f);
  }
  return w.str();
}

std::string format_consensus(std::span<const ConsensusRow> rows, std::string_view digest) {
  auto w = start(digest);
  w.record({"Radiologist Consensus Pattern", "Model", "GT (n)", "Detected (n)", "Detection Probability (Mean ± SD)",
            "Range (Min–Max)"});
  for (const auto& r : rows) {
    std::string prob, range;
    if (r.group.scores) {
      const auto& s = *r.group.scores;
      prob = s.sd ? fmt::format("{:.2f} ± {:.2f}", s.mean, *s.sd) : fixed(s.mean, 2);
      range = fmt::format("{:.2f}-{:.2f}", s.min, s.max);
    }
    w.record({std::string(display_name(r.pattern)), r.model, std::to_string(r.group.n_gt),
              std::to_string(r.group.n_detected), prob, range});
  }
  return w.str();
}

}  // namespace trifuse::io

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

#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "trifuse/atomic_file.hpp"
#include "trifuse/errors.hpp"
#include "trifuse/froc.hpp"
#include "trifuse/fusion.hpp"
#include "trifuse/io.hpp"
#include "trifuse/manifest.hpp"
#include "trifuse/reader_stats.hpp"
#include "trifuse/report_link.hpp"
#include "trifuse/threshold.hpp"
#include "trifuse/volume.hpp"

namespace trifuse::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string convention = "lps";
  std::uint64_t seed = 17;

  io::CoordinateConvention coords() const { return io::parse_coordinate_convention(convention); }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--coordinate-convention", c.convention, "Coordinate convention of input and output files (lps|ras)")
      ->capture_default_str();
  sub->add_option("--seed", c.seed, "Seed for all randomness")->capture_default_str();
}

RunManifest begin_manifest(std::string command, const Common& c) {
  RunManifest m;
  m.command = std::move(command);
  m.seed = c.seed;
  m.started_at = utc_timestamp();
  m.config["coordinate_convention"] = c.convention;
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& path) {
  m.finished_at = utc_timestamp();
  write_file_atomic(path, m.to_json().dump(2) + "\n");
}

fs::path manifest_path_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

// Loads DIR/<scan>.hdr for every scan up front so lookups are read-only.
template <typename V, typename Load>
std::map<std::string, V> load_volumes(const fs::path& dir, const std::set<std::string>& scans, Load load,
                                      RunManifest& manifest, std::string_view what) {
  std::map<std::string, V> out;
  for (const auto& scan : scans) {
    const auto header = dir / (scan + ".hdr");
    if (!fs::exists(header)) throw InputError(fmt::format("no {} for scan {}: {} does not exist", what, scan, header.string()));
    out.emplace(scan, load(header));
    manifest.add_input(header);
  }
  return out;
}

// ---- fuse -----------------------------------------------------------------

struct FuseArgs {
  Common common;
  std::string cade_a;
  std::string cade_b;
  std::string cadx_scores;
  std::string cadx_cmd;
  std::string volumes;
  std::string masks;
  double tau_cadx = 0.10;
  double tau_cade = 0.20;
  double dedup_radius = 2.0;
  std::string out;
};


int cmd_fuse(const FuseArgs& a) {
  const auto coords = a.common.coords();
  PipelineConfig cfg;
  cfg.tau_cadx = a.tau_cadx;
  cfg.tau_cade = a.tau_cade;
  cfg.dedup_radius_mm = a.dedup_radius > 0.0 ? std::optional(a.dedup_radius) : std::nullopt;
  cfg.rng_seed = a.common.seed;
  cfg.validate();

  auto manifest = begin_manifest("fuse", a.common);
  manifest.config["tau_cadx"] = cfg.tau_cadx;
  manifest.config["tau_cade"] = cfg.tau_cade;
  manifest.config["dedup_radius_mm"] = a.dedup_radius;
  manifest.config["lung_labels"] = cfg.lung_labels;
  manifest.config["cadx_source"] = a.cadx_cmd.empty() ? "scores" : "command";
  if (!a.cadx_cmd.empty()) manifest.config["cadx_cmd"] = a.cadx_cmd;
  manifest.config["masks"] = !a.masks.empty();

  const auto list_a = io::read_candidates(a.cade_a, coords);
  const auto list_b = io::read_candidates(a.cade_b, coords);
  manifest.add_input(a.cade_a);
  manifest.add_input(a.cade_b);

  std::set<std::string> scans;
  for (const auto& c : list_a) scans.insert(c.scan_id);
  for (const auto& c : list_b) scans.insert(c.scan_id);

  std::map<std::string, LabelVolume> masks;
  if (!a.masks.empty()) {
    masks = load_volumes<LabelVolume>(a.masks, scans, load_label_volume, manifest, "lung mask");
  }
  const MaskLookup mask_lookup = [&](const std::string& scan) -> const LabelVolume* {
    const auto it = masks.find(scan);
    return it == masks.end() ? nullptr : &it->second;
  };

  std::map<std::string, IntensityVolume> volumes;
  std::optional<fs::path> work_dir;
  CadxProvider provider;
  ScoreTableProvider table;
  if (!a.cadx_scores.empty()) {
    table = io::read_cadx_scores(a.cadx_scores);
    manifest.add_input(a.cadx_scores);
    provider = [&table](const CandidateDetection& c) { return table(c); };
  } else {
    if (a.volumes.empty()) throw ConfigError("--cadx-cmd needs --volumes");
    volumes = load_volumes<IntensityVolume>(a.volumes, scans, load_intensity_volume, manifest, "CT volume");
    work_dir = fs::path(a.out).parent_path() / (fs::path(a.out).filename().string() + ".patches");
    fs::create_directories(*work_dir);
    auto scorer = std::make_shared<ExternalScorerProvider>(
        a.cadx_cmd,
        [&volumes](const std::string& scan) -> const IntensityVolume* {
          const auto it = volumes.find(scan);
          return it == volumes.end() ? nullptr : &it->second;
        },
        *work_dir);
    provider = [scorer](const CandidateDetection& c) { return (*scorer)(c); };
  }

  std::vector<TriStageResult> results;
  try {
    results = run_pipeline(list_a, list_b, provider, mask_lookup, cfg);
  } catch (...) {
    if (work_dir) fs::remove_all(*work_dir);
    throw;
  }
  if (work_dir) fs::remove_all(*work_dir);

  std::vector<FusedCandidate> fused;
  Accounting total;
  for (const auto& r : results) {
    for (auto f : r.fused) {
      f.center = io::convert(f.center, coords);
      fused.push_back(std::move(f));
    }
    total.inputs += r.accounting.inputs;
    total.mask_rejected += r.accounting.mask_rejected;
    total.pair_members += r.accounting.pair_members;
    total.promoted += r.accounting.promoted;
    total.refined += r.accounting.refined;
    total.rejected += r.accounting.rejected;
  }
  write_file_atomic(a.out, io::format_fused(fused, manifest.digest()));
  finish_manifest(manifest, manifest_path_for(a.out));
  std::cerr << fmt::format(
      "fused {} scans: {} inputs, {} mask-rejected, {} in consensus pairs, {} promoted, {} refined, {} rejected; "
      "{} output candidates\n",
      results.size(), total.inputs, total.mask_rejected, total.pair_members, total.promoted, total.refined,
      total.rejected, fused.size());
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string candidates;
  std::string references;
  std::string stratify;
  bool ci = false;
  int resamples = 1000;
  std::string out;
};

std::optional<Stratifier> make_stratifier(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name == "size:dlcs") return size_stratifier(SizeBinSpec::dlcs());
  if (name == "size:imd") return size_stratifier(SizeBinSpec::imd());
  if (name == "lungrads") return lungrads_stratifier();
  if (name == "diagnosis") return diagnosis_stratifier();
  if (name == "consensus") return consensus_stratifier();
  throw ConfigError(fmt::format("unknown stratification '{}'", name));
}

int cmd_eval(const EvalArgs& a) {
  const auto coords = a.common.coords();
  const auto stratifier = make_stratifier(a.stratify);
  if (a.resamples < 1) throw ConfigError("--resamples must be at least 1");
  EvalOptions opts;
  opts.confidence_intervals = a.ci;
  opts.resamples = a.resamples;
  opts.seed = a.common.seed;

  auto manifest = begin_manifest("eval", a.common);
  manifest.config["stratify"] = a.stratify.empty() ? "none" : a.stratify;
  manifest.config["ci"] = a.ci;
  manifest.config["resamples"] = a.resamples;

  auto candidates = io::read_candidates(a.candidates, coords);
  auto references = io::read_references(a.references, coords);
  manifest.add_input(a.candidates);
  manifest.add_input(a.references);
  if (references.empty()) throw InputError(fmt::format("{}: no reference nodules", a.references));

  const auto set = EvaluationSet::assemble(std::move(candidates), std::move(references));
  StratifiedResult result;
  if (stratifier) {
    result = stratified_eval(set, *stratifier, opts);
  } else {
    result.overall = evaluate(set, opts);
  }
  const auto matches = match_lesions(set);
  const auto digest = manifest.digest();

  const fs::path out(a.out);
  fs::create_directories(out);
  write_file_atomic(out / "metrics.json", io::metrics_json(result, a.stratify, digest, false).dump(2) + "\n");
  write_file_atomic(out / "metrics_raw.json", io::metrics_json(result, a.stratify, digest, true).dump(2) + "\n");
  write_file_atomic(out / "summary.csv", io::format_summary(result, digest));
  write_file_atomic(out / "froc.csv", io::format_froc(result, digest));
  write_file_atomic(out / "matches.csv", io::format_matches(matches, digest));
  finish_manifest(manifest, out / "manifest.json");
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << fmt::format("CPM {:.4f}, sensitivity @1 FP/scan {:.4f}, {}/{} lesions detected, {:.2f} candidates/scan\n",
                           result.overall.cpm, result.overall.sensitivity_at_one(), result.overall.detected,
                           result.overall.lesions, result.overall.candidates_per_scan);
  return kExitOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
  Common common;
  std::string mode;
  std::string scores;
  std::string candidates;
  std::string references;
  std::string thresholds = "default";
  std::string dataset = "dataset";
  std::string out;
};

int cmd_sweep(const SweepArgs& a) {
  const auto thresholds = io::parse_thresholds(a.thresholds, a.mode);
  auto manifest = begin_manifest("sweep", a.common);
  manifest.config["mode"] = a.mode;
  manifest.config["thresholds"] = thresholds;
  std::string body;
  if (a.mode == "cadx") {
    if (a.scores.empty()) throw ConfigError("--mode cadx needs --scores");
    const auto scored = io::parse_labeled_scores(csv::Table::read(a.scores));
    manifest.add_input(a.scores);
    body = io::format_cadx_sweep(sweep_cadx(scored, thresholds), manifest.digest());
  } else {
    if (a.candidates.empty() || a.references.empty()) throw ConfigError("--mode cade needs --candidates and --references");
    const auto coords = a.common.coords();
    auto candidates = io::read_candidates(a.candidates, coords);
    auto references = io::read_references(a.references, coords);
    manifest.add_input(a.candidates);
    manifest.add_input(a.references);
    manifest.config["dataset"] = a.dataset;
    const auto set = EvaluationSet::assemble(std::move(candidates), std::move(references));
    body = io::format_cade_sweep(sweep_cade(set, thresholds), a.dataset, manifest.digest());
  }
  write_file_atomic(a.out, body);
  finish_manifest(manifest, manifest_path_for(a.out));
  return kExitOk;
}

// ---- stats ----------------------------------------------------------------

struct StatsArgs {
  Common common;
  std::string matches;
  std::string references;
  std::string analysis;
  bool per_model = false;
  std::string out;
};

int cmd_stats(const StatsArgs& a) {
  auto manifest = begin_manifest("stats", a.common);
  manifest.config["analysis"] = a.analysis;
  manifest.config["per_model"] = a.per_model;

  std::vector<fs::path> files;
  if (!fs::is_directory(a.matches)) throw InputError(fmt::format("{} is not a directory", a.matches));
  for (const auto& entry : fs::directory_iterator(a.matches)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError(fmt::format("{}: no match files (*.csv)", a.matches));
  std::vector<ModelMatches> models;
  for (const auto& f : files) {
    models.push_back({f.stem().string(), io::read_matches(f)});
    manifest.add_input(f);
  }
  const auto references = io::read_references(a.references, a.common.coords());
  manifest.add_input(a.references);
  const auto digest = manifest.digest();

  std::string body;
  if (a.analysis == "consensus") {
    body = io::format_consensus(consensus_table(models, references), digest);
  } else if (a.analysis == "semantic") {
    const auto tables = detected_vs_missed_table(models, references, !a.per_model);
    for (const auto& t : tables) {
      for (const auto& d : t.diagnostics) std::cerr << fmt::format("note ({}): {}\n", t.scope, d);
    }
    body = io::format_detectability(tables, digest);
  } else {
    body = io::format_overlap(missed_overlap_table(models, references), digest);
  }
  write_file_atomic(a.out, body);
  finish_manifest(manifest, manifest_path_for(a.out));
  return kExitOk;
}

// ---- link -----------------------------------------------------------------

struct LinkArgs {
  Common common;
  std::string reports;
  std::string fused;
  std::string masks;
  std::string grammar;
  double size_tolerance = 3.0;
  int ordinal_tolerance = 1;
  std::string out;
};

int cmd_link(const LinkArgs& a) {
  LinkTolerances tol{a.size_tolerance, a.ordinal_tolerance};
  if (!(tol.size_mm >= 0.0) || tol.ordinal_levels < 0) throw ConfigError("link tolerances must be non-negative");
  auto manifest = begin_manifest("link", a.common);
  manifest.config["size_tolerance_mm"] = tol.size_mm;
  manifest.config["ordinal_tolerance"] = tol.ordinal_levels;

  const auto grammar = a.grammar.empty() ? ExtractionGrammar::builtin() : ExtractionGrammar::load(a.grammar);
  manifest.config["grammar"] = a.grammar.empty() ? "builtin" : "file";
  if (!a.grammar.empty()) manifest.add_input(a.grammar);

  const auto reports = io::read_reports(a.reports);
  manifest.add_input(a.reports);
  std::vector<ReportEntity> entities;
  std::set<std::string> scans;
  for (const auto& r : reports) {
    scans.insert(r.scan_id);
    auto found = grammar.extract(r.text, r.report_id, r.scan_id);
    entities.insert(entities.end(), found.begin(), found.end());
  }

  auto targets = io::parse_link_targets(csv::Table::read(a.fused), a.common.coords());
  manifest.add_input(a.fused);
  // Only scans with a report take part in linking.
  std::erase_if(targets, [&](const LinkTarget& t) { return !scans.count(t.scan_id); });
  if (!a.masks.empty()) {
    std::set<std::string> target_scans;
    for (const auto& t : targets) target_scans.insert(t.scan_id);
    const auto masks = load_volumes<LabelVolume>(a.masks, target_scans, load_label_volume, manifest, "lobe mask");
    for (auto& t : targets) {
      if (!t.lobe) t.lobe = lobe_of_candidate(t.center, masks.at(t.scan_id));
    }
  }
  manifest.config["masks"] = !a.masks.empty();

  const auto matches = link_all(entities, targets, tol);
  write_file_atomic(a.out, io::format_link_matches(matches, manifest.digest()));
  finish_manifest(manifest, manifest_path_for(a.out));
  std::size_t linked = 0;
  for (const auto& m : matches) linked += m.status == MatchStatus::Matched;
  std::cerr << fmt::format("{} report entities, {} linked\n", entities.size(), linked);
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Tri-stage fusion of lung nodule detections and FROC evaluation"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "key=value file mirroring the flags; subcommand keys go under [fuse], [eval], ...");

  std::function<int()> action;

  FuseArgs fuse;
  auto* f = app.add_subcommand("fuse", "Fuse two detector lists into one tiered candidate list");
  f->add_option("--cade-a", fuse.cade_a, "Candidates from detector A")->required()->check(CLI::ExistingFile);
  f->add_option("--cade-b", fuse.cade_b, "Candidates from detector B")->required()->check(CLI::ExistingFile);
  auto* scores_opt = f->add_option("--cadx-scores", fuse.cadx_scores, "Precomputed CADx scores")->check(CLI::ExistingFile);
  auto* cmd_opt = f->add_option("--cadx-cmd", fuse.cadx_cmd, "External CADx scorer command");
  scores_opt->excludes(cmd_opt);
  f->add_option("--volumes", fuse.volumes, "Directory of <scan>.hdr CT volumes for --cadx-cmd")
      ->check(CLI::ExistingDirectory);
  f->add_option("--masks", fuse.masks, "Directory of <scan>.hdr lung masks")->check(CLI::ExistingDirectory);
  f->add_option("--tau-cadx", fuse.tau_cadx, "Stage-2 ensemble CADx threshold")->capture_default_str();
  f->add_option("--tau-cade", fuse.tau_cade, "Stage-3 CADe score threshold")->capture_default_str();
  f->add_option("--dedup-radius", fuse.dedup_radius, "Same-model duplicate radius in mm; 0 disables")
      ->capture_default_str();
  f->add_option("--out", fuse.out, "Fused candidate CSV")->required();
  add_common(f, fuse.common);
  f->callback([&] {
    if (fuse.cadx_scores.empty() && fuse.cadx_cmd.empty()) throw CLI::ValidationError("--cadx-scores or --cadx-cmd is required");
    action = [&] { return cmd_fuse(fuse); };
  });

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "FROC evaluation against reference nodules");
  e->add_option("--candidates", eval.candidates, "Candidate CSV")->required()->check(CLI::ExistingFile);
  e->add_option("--references", eval.references, "Reference CSV")->required()->check(CLI::ExistingFile);
  e->add_option("--stratify", eval.stratify, "size:dlcs, size:imd, lungrads, diagnosis or consensus")
      ->check(CLI::IsMember({"size:dlcs", "size:imd", "lungrads", "diagnosis", "consensus"}));
  e->add_flag("--ci", eval.ci, "Bootstrap 95% confidence intervals");
  e->add_option("--resamples", eval.resamples, "Bootstrap resamples")->capture_default_str();
  e->add_option("--out", eval.out, "Output directory")->required();
  add_common(e, eval.common);
  e->callback([&] { action = [&] { return cmd_eval(eval); }; });

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Threshold sweeps for the CADx and CADe operating points");
  s->add_option("--mode", sweep.mode, "cadx or cade")->required()->check(CLI::IsMember({"cadx", "cade"}));
  s->add_option("--scores", sweep.scores, "score,label CSV (cadx)")->check(CLI::ExistingFile);
  s->add_option("--candidates", sweep.candidates, "Candidate CSV (cade)")->check(CLI::ExistingFile);
  s->add_option("--references", sweep.references, "Reference CSV (cade)")->check(CLI::ExistingFile);
  s->add_option("--thresholds", sweep.thresholds, "Comma-separated list, or 'default'")->capture_default_str();
  s->add_option("--dataset", sweep.dataset, "Dataset column value (cade)")->capture_default_str();
  s->add_option("--out", sweep.out, "Sweep CSV")->required();
  add_common(s, sweep.common);
  s->callback([&] { action = [&] { return cmd_sweep(sweep); }; });

  StatsArgs stats;
  auto* st = app.add_subcommand("stats", "Reader and characteristic analyses of match outcomes");
  st->add_option("--matches", stats.matches, "Directory with one match CSV per model")->required();
  st->add_option("--references", stats.references, "Reference CSV")->required()->check(CLI::ExistingFile);
  st->add_option("--analysis", stats.analysis, "consensus, semantic or overlap")
      ->required()
      ->check(CLI::IsMember({"consensus", "semantic", "overlap"}));
  st->add_flag("--per-model", stats.per_model, "Semantic analysis per model, ranked by |d|");
  st->add_option("--out", stats.out, "Output CSV")->required();
  add_common(st, stats.common);
  st->callback([&] { action = [&] { return cmd_stats(stats); }; });

  LinkArgs link;
  auto* l = app.add_subcommand("link", "Link report entities to fused candidates");
  l->add_option("--reports", link.reports, "Tab-separated report_id, scan_id, text")->required()->check(CLI::ExistingFile);
  l->add_option("--fused", link.fused, "Fused candidate CSV")->required()->check(CLI::ExistingFile);
  l->add_option("--masks", link.masks, "Directory of <scan>.hdr lobe masks")->check(CLI::ExistingDirectory);
  l->add_option("--grammar", link.grammar, "Extraction grammar file")->check(CLI::ExistingFile);
  l->add_option("--size-tolerance", link.size_tolerance, "Size tolerance in mm")->capture_default_str();
  l->add_option("--ordinal-tolerance", link.ordinal_tolerance, "Ordinal tolerance in levels")->capture_default_str();
  l->add_option("--out", link.out, "Match CSV")->required();
  add_common(l, link.common);
  l->callback([&] { action = [&] { return cmd_link(link); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    return action();
  } catch (const ScorerError& err) {
    std::cerr << "scorer error: " << err.what() << "\n";
    return kExitScorer;
  } catch (const InputError& err) {
    std::cerr << "input error: " << err.what() << "\n";
    return kExitInput;
  } catch (const InvariantError& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace trifuse::cli

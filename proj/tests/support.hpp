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

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

#include "trifuse/core.hpp"

namespace trifuse::testing {

namespace fs = std::filesystem;

inline fs::path fixtures() { return fs::path(TRIFUSE_FIXTURES); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> n{0};
    path_ = fs::temp_directory_path() / fmt::format("trifuse_{}_{}_{}", tag, ::getpid(), n++);
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Runs the command-line tool; returns its exit status. Output goes to `log`.
inline int run_cli(const std::string& args, const fs::path& log) {
  const auto cmd = fmt::format("'{}' {} > '{}' 2>&1", TRIFUSE_CLI, args, log.string());
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline WorldPoint random_point(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  return WorldPoint(u(rng), u(rng), u(rng));
}

inline std::vector<CandidateDetection> random_candidates(std::mt19937_64& rng, const std::string& scan,
                                                       SourceModel model, int n, double extent) {
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::uniform_real_distribution<double> dia(2.0, 15.0);
  std::bernoulli_distribution has_dia(0.5);
  std::vector<CandidateDetection> out;
  for (int i = 0; i < n; ++i) {
    CandidateDetection c;
    c.scan_id = scan;
    c.candidate_id = fmt::format("{}{}", model == SourceModel::CadeA ? "a" : "b", i);
    c.center = random_point(rng, extent);
    if (has_dia(rng)) c.diameter_mm = dia(rng);
    // Coarse scores so that ties occur.
    c.score = std::round(score(rng) * 20.0) / 20.0;
    c.source_model = model;
    out.push_back(c);
  }
  return out;
}

inline std::vector<ReferenceNodule> random_references(std::mt19937_64& rng, const std::string& scan, int n,
                                                      double extent) {
  std::uniform_real_distribution<double> dia(2.0, 16.0);
  std::vector<ReferenceNodule> out;
  for (int i = 0; i < n; ++i) {
    ReferenceNodule r;
    r.scan_id = scan;
    r.nodule_id = fmt::format("n{}", i);
    r.center = random_point(rng, extent);
    r.diameter_mm = dia(rng);
    out.push_back(r);
  }
  return out;
}

}  // namespace trifuse::testing

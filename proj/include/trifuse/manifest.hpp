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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

namespace trifuse {

inline constexpr std::string_view kToolVersion = "0.1.0";

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);
// ISO 8601 UTC, second resolution.
std::string utc_timestamp();

struct RunManifest {
  std::string command;
  // Effective settings, defaults included.
  nlohmann::json config = nlohmann::json::object();
  // Input path as given on the command line to its SHA-256.
  std::map<std::string, std::string> inputs;
  std::string tool_version{kToolVersion};
  std::uint64_t seed = 17;
  std::string started_at;
  std::string finished_at;

  void add_input(const std::filesystem::path& path);
  // Digest of everything except the timestamps, so a rerun on the same
  // inputs and flags has the same digest.
  std::string digest() const;
  nlohmann::json to_json() const;
};

}  // namespace trifuse

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

#include "trifuse/manifest.hpp"

#include <chrono>
#include <ctime>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "trifuse/atomic_file.hpp"
#include "trifuse/errors.hpp"

namespace trifuse {

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw InvariantError("SHA-256 computation failed");
  }
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const std::filesystem::path& path) { inputs[path.string()] = sha256_file(path); }

namespace {

nlohmann::json deterministic_part(const RunManifest& m) {
  return {{"command", m.command},
          {"config", m.config},
          {"inputs", m.inputs},
          {"tool_version", m.tool_version},
          {"seed", m.seed}};
}

}  // namespace

std::string RunManifest::digest() const { return sha256_hex(deterministic_part(*this).dump()); }

nlohmann::json RunManifest::to_json() const {
  auto j = deterministic_part(*this);
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["digest"] = digest();
  return j;
}

}  // namespace trifuse

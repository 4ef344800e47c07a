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

#include "trifuse/parallel.hpp"

#include <cstdlib>

#include "trifuse/text.hpp"

namespace trifuse {

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TRIFUSE_THREADS")) {
    if (const auto cap = text::parse_int(env); cap && *cap >= 1) {
      n = std::min<std::size_t>(n, static_cast<std::size_t>(*cap));
    }
  }
  return n;
}

}  // namespace trifuse

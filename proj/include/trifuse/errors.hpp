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

#include <stdexcept>
#include <string>

namespace trifuse {

// Malformed records, schema violations and precondition failures on data.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: grammar files, flag combinations, thresholds.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// The external CADx scorer failed for a candidate.
class ScorerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal invariant did not hold. Always a bug.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace trifuse

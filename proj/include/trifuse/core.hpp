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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "trifuse/errors.hpp"

namespace trifuse {

template <typename Scalar>
using Point3 = Eigen::Matrix<Scalar, 3, 1>;

// Millimeters, LPS patient coordinates.
using WorldPoint = Point3<double>;

enum class SourceModel { CadeA, CadeB, Fused };

std::string_view to_string(SourceModel m);
SourceModel parse_source_model(std::string_view text);

struct CandidateDetection {
  std::string scan_id;
  std::string candidate_id;
  WorldPoint center = WorldPoint::Zero();
  std::optional<double> diameter_mm;
  double score = 0.0;
  SourceModel source_model = SourceModel::CadeA;

  void validate() const;
};

enum class Diagnosis { Benign, Cancer, Unknown };

std::string_view to_string(Diagnosis d);
Diagnosis parse_diagnosis(std::string_view text);

enum class LungRads { Cat1, Cat2, Cat3, Cat4A, Cat4B, Cat4X };

std::string_view to_string(LungRads c);
std::optional<LungRads> parse_lungrads(std::string_view text);

struct Votes {
  int reviewers = 0;
  int positive_votes = 0;
};

// Radiologist semantic ratings. DiameterRad is a real (mm), the rest are
// ordinal scales.
enum class Characteristic {
  DiameterRad,
  Texture,
  Malignancy,
  Subtlety,
  Spiculation,
  Lobulation,
  Margin,
  Sphericity,
  InternalStructure,
  Calcification,
};

inline constexpr std::size_t kCharacteristicCount = 10;

inline constexpr std::array<Characteristic, kCharacteristicCount> kAllCharacteristics = {
    Characteristic::DiameterRad, Characteristic::Texture,     Characteristic::Malignancy,
    Characteristic::Subtlety,    Characteristic::Spiculation, Characteristic::Lobulation,
    Characteristic::Margin,      Characteristic::Sphericity,  Characteristic::InternalStructure,
    Characteristic::Calcification};

// The eight characteristics compared between detected and missed lesions.
inline constexpr std::array<Characteristic, 8> kDetectabilityCharacteristics = {
    Characteristic::DiameterRad, Characteristic::Texture,     Characteristic::Malignancy,
    Characteristic::Subtlety,    Characteristic::Spiculation, Characteristic::Lobulation,
    Characteristic::Margin,      Characteristic::Sphericity};

// Column name used in reference files, e.g. "Subtlety".
std::string_view column_name(Characteristic c);
// Table label with the scale, e.g. "Subtlety (1–5)".
std::string_view display_name(Characteristic c);
std::optional<Characteristic> parse_characteristic(std::string_view name);
bool is_ordinal(Characteristic c);

struct RatingRange {
  double lo;
  double hi;
};
RatingRange rating_range(Characteristic c);

class SemanticRatings {
 public:
  std::optional<double> get(Characteristic c) const { return values_[index(c)]; }
  void set(Characteristic c, std::optional<double> v) { values_[index(c)] = v; }
  bool empty() const;
  void validate() const;

 private:
  static std::size_t index(Characteristic c) { return static_cast<std::size_t>(c); }
  std::array<std::optional<double>, kCharacteristicCount> values_{};
};

struct ReferenceNodule {
  std::string scan_id;
  std::string nodule_id;
  WorldPoint center = WorldPoint::Zero();
  double diameter_mm = 0.0;
  Diagnosis diagnosis = Diagnosis::Unknown;
  std::optional<LungRads> lungrads;
  std::optional<Votes> votes;
  std::optional<SemanticRatings> ratings;

  void validate() const;
};

struct ConsensusRadiusPolicy {
  enum class Kind {
    // max(5 mm, match_tolerance(max diameter)); 5 mm when no diameters.
    DiameterAware,
    Fixed,
  };
  Kind kind = Kind::DiameterAware;
  double fixed_radius_mm = 5.0;
};

struct PipelineConfig {
  double tau_cadx = 0.10;
  double tau_cade = 0.20;
  ConsensusRadiusPolicy consensus_radius;
  // Same-model detections closer than this collapse onto the best-scoring
  // one. Absent disables suppression.
  std::optional<double> dedup_radius_mm = 2.0;
  std::set<int> lung_labels = {28, 29, 30, 31, 32};
  int bootstrap_resamples = 1000;
  std::uint64_t rng_seed = 17;

  void validate() const;
};

// Hit radius around a reference lesion: half the diameter below 10 mm,
// 5 mm from there on.
template <typename Scalar>
Scalar match_tolerance(Scalar diameter_mm) {
  if (!std::isfinite(diameter_mm) || !(diameter_mm > Scalar(0))) {
    throw InputError("match_tolerance: diameter must be positive and finite");
  }
  return diameter_mm < Scalar(10) ? diameter_mm / Scalar(2) : Scalar(5);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar distance(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b) {
  return (a - b).norm();
}

// Inclusive at the boundary.
template <typename DerivedA, typename DerivedB>
bool within_tolerance(const Eigen::MatrixBase<DerivedA>& candidate,
                      const Eigen::MatrixBase<DerivedB>& reference,
                      typename DerivedA::Scalar reference_diameter_mm) {
  return distance(candidate, reference) <= match_tolerance(reference_diameter_mm);
}

bool is_hit(const CandidateDetection& candidate, const ReferenceNodule& reference);

}  // namespace trifuse

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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "trifuse/core.hpp"

namespace trifuse {

enum class ElementType { UInt8, Int16, Float32 };

std::string_view to_string(ElementType t);
std::size_t element_size(ElementType t);

// Geometry of a voxel grid. Voxel (i, j, k) sits at origin + (i, j, k) * spacing,
// x fastest in memory.
struct VolumeHeader {
  Eigen::Vector3i dims = Eigen::Vector3i::Ones();
  Eigen::Vector3d spacing_mm = Eigen::Vector3d::Ones();
  WorldPoint origin_mm = WorldPoint::Zero();
  ElementType element_type = ElementType::Int16;
  std::string data_file;

  void validate() const;
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims.x()) * static_cast<std::size_t>(dims.y()) *
           static_cast<std::size_t>(dims.z());
  }
};

template <typename Derived>
Point3<double> world_to_voxel(const Eigen::MatrixBase<Derived>& p, const VolumeHeader& h) {
  return (p.template cast<double>() - h.origin_mm).cwiseQuotient(h.spacing_mm);
}

template <typename Derived>
WorldPoint voxel_to_world(const Eigen::MatrixBase<Derived>& v, const VolumeHeader& h) {
  return h.origin_mm + v.template cast<double>().cwiseProduct(h.spacing_mm);
}

template <typename T>
class Volume {
 public:
  using Scalar = T;
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;

  Volume() = default;
  Volume(VolumeHeader header, Storage voxels) : header_(std::move(header)), voxels_(std::move(voxels)) {
    header_.validate();
    if (static_cast<std::size_t>(voxels_.size()) != header_.voxel_count()) {
      throw InputError("voxel count does not match header dims");
    }
  }

  static Volume filled(const VolumeHeader& header, T value) {
    header.validate();
    return Volume(header, Storage::Constant(static_cast<Eigen::Index>(header.voxel_count()), value));
  }

  // f(i, j, k) -> T
  template <typename F>
  static Volume generate(const VolumeHeader& header, F&& f) {
    header.validate();
    Storage s(static_cast<Eigen::Index>(header.voxel_count()));
    Eigen::Index n = 0;
    for (int k = 0; k < header.dims.z(); ++k)
      for (int j = 0; j < header.dims.y(); ++j)
        for (int i = 0; i < header.dims.x(); ++i) s[n++] = static_cast<T>(f(i, j, k));
    return Volume(header, std::move(s));
  }

  const VolumeHeader& header() const { return header_; }
  const Storage& voxels() const { return voxels_; }

  bool contains(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < header_.dims.x() && j < header_.dims.y() &&
           k < header_.dims.z();
  }

  T operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const { return voxels_[offset(i, j, k)]; }
  T& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) { return voxels_[offset(i, j, k)]; }

 private:
  Eigen::Index offset(Eigen::Index i, Eigen::Index j, Eigen::Index k) const {
    return i + header_.dims.x() * (j + static_cast<Eigen::Index>(header_.dims.y()) * k);
  }

  VolumeHeader header_;
  Storage voxels_;
};

using LabelVolume = Volume<std::int32_t>;
using IntensityVolume = Volume<float>;

// Label of the voxel nearest to p; nullopt outside the grid.
template <typename T>
std::optional<T> nearest_voxel(const Volume<T>& vol, const WorldPoint& p) {
  if (!p.allFinite()) return std::nullopt;
  const Point3<double> v = world_to_voxel(p, vol.header()).array().round().matrix();
  const Eigen::Index i = static_cast<Eigen::Index>(v.x());
  const Eigen::Index j = static_cast<Eigen::Index>(v.y());
  const Eigen::Index k = static_cast<Eigen::Index>(v.z());
  if (!vol.contains(i, j, k)) return std::nullopt;
  return vol(i, j, k);
}

bool centroid_in_lung(const WorldPoint& p, const LabelVolume& vol, const std::set<int>& lung_labels);

// Trilinear sample at a continuous voxel coordinate. nullopt when the point
// lies outside [0, n-1] on any axis.
template <typename T, typename Scalar = double>
std::optional<Scalar> trilinear_sample(const Volume<T>& vol, const Point3<Scalar>& voxel) {
  const auto& dims = vol.header().dims;
  Eigen::Index base[3];
  Scalar frac[3];
  for (int a = 0; a < 3; ++a) {
    const Scalar c = voxel[a];
    const Scalar hi = Scalar(dims[a] - 1);
    if (!(c >= Scalar(0) && c <= hi)) return std::nullopt;
    Eigen::Index b = static_cast<Eigen::Index>(std::floor(c));
    if (b >= dims[a] - 1) b = std::max<Eigen::Index>(dims[a] - 2, 0);
    base[a] = b;
    frac[a] = c - Scalar(b);
  }
  Scalar acc = 0;
  for (int corner = 0; corner < 8; ++corner) {
    Scalar w = 1;
    Eigen::Index idx[3];
    for (int a = 0; a < 3; ++a) {
      const bool upper = (corner >> a) & 1;
      w *= upper ? frac[a] : Scalar(1) - frac[a];
      idx[a] = base[a] + (upper ? 1 : 0);
    }
    if (w == Scalar(0)) continue;
    acc += w * static_cast<Scalar>(vol(idx[0], idx[1], idx[2]));
  }
  return acc;
}

inline constexpr int kPatchSize = 64;
inline constexpr double kHuFloor = -1000.0;
inline constexpr double kHuCeiling = 500.0;

inline const Eigen::Vector3d& patch_spacing() {
  static const Eigen::Vector3d s(0.7, 0.7, 1.25);
  return s;
}

template <typename Scalar>
Scalar normalize_hu(Scalar hu) {
  const Scalar clipped = std::clamp(hu, Scalar(kHuFloor), Scalar(kHuCeiling));
  return (clipped - Scalar(kHuFloor)) / Scalar(kHuCeiling - kHuFloor);
}

// 64^3 normalized intensity cube. Grid index (32, 32, 32) sits on the center.
class Patch {
 public:
  using Storage = Eigen::Array<double, Eigen::Dynamic, 1>;

  explicit Patch(const WorldPoint& center)
      : center_(center), values_(Storage::Zero(kPatchSize * kPatchSize * kPatchSize)) {}

  const WorldPoint& center() const { return center_; }
  const Eigen::Vector3d& spacing_mm() const { return patch_spacing(); }
  WorldPoint origin_mm() const { return center_ - double(kPatchSize / 2) * patch_spacing(); }
  WorldPoint position(int i, int j, int k) const {
    return origin_mm() + Eigen::Vector3d(i, j, k).cwiseProduct(patch_spacing());
  }

  const Storage& values() const { return values_; }
  double operator()(int i, int j, int k) const { return values_[offset(i, j, k)]; }
  double& operator()(int i, int j, int k) { return values_[offset(i, j, k)]; }

  VolumeHeader header() const;

 private:
  static Eigen::Index offset(int i, int j, int k) {
    return i + kPatchSize * (j + Eigen::Index(kPatchSize) * k);
  }

  WorldPoint center_;
  Storage values_;
};

// Resamples onto the patch grid, clips to [-1000, 500] HU and maps to [0, 1].
// Grid points outside the source extent stay at 0.0 (air).
template <typename T>
Patch extract_patch(const Volume<T>& vol, const WorldPoint& center) {
  vol.header().validate();
  if (!center.allFinite()) throw InputError("extract_patch: non-finite center");
  Patch patch(center);
  const WorldPoint origin = patch.origin_mm();
  for (int k = 0; k < kPatchSize; ++k)
    for (int j = 0; j < kPatchSize; ++j)
      for (int i = 0; i < kPatchSize; ++i) {
        const WorldPoint p = origin + Eigen::Vector3d(i, j, k).cwiseProduct(patch_spacing());
        const auto hu = trilinear_sample<T, double>(vol, world_to_voxel(p, vol.header()));
        patch(i, j, k) = hu ? normalize_hu(*hu) : 0.0;
      }
  return patch;
}

// Two-file container: a `key = value` text header plus raw little-endian voxels.
VolumeHeader read_volume_header(const std::filesystem::path& header_path);
LabelVolume load_label_volume(const std::filesystem::path& header_path);
IntensityVolume load_intensity_volume(const std::filesystem::path& header_path);

// Writes `<stem>.raw` next to the header and points data_file at it.
void write_volume(const LabelVolume& vol, const std::filesystem::path& header_path, ElementType type);
void write_volume(const IntensityVolume& vol, const std::filesystem::path& header_path,
                  ElementType type = ElementType::Float32);
void write_patch(const Patch& patch, const std::filesystem::path& header_path);

std::string format_volume_header(const VolumeHeader& h);

}  // namespace trifuse

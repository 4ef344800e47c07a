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

#include "trifuse/volume.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "trifuse/atomic_file.hpp"
#include "trifuse/text.hpp"

namespace trifuse {

static_assert(std::endian::native == std::endian::little, "raw voxel I/O assumes a little-endian host");

std::string_view to_string(ElementType t) {
  switch (t) {
    case ElementType::UInt8: return "uint8";
    case ElementType::Int16: return "int16";
    case ElementType::Float32: return "float32";
  }
  return "?";
}

std::size_t element_size(ElementType t) {
  switch (t) {
    case ElementType::UInt8: return 1;
    case ElementType::Int16: return 2;
    case ElementType::Float32: return 4;
  }
  return 0;
}

void VolumeHeader::validate() const {
  if ((dims.array() < 1).any()) throw InputError("volume dims must be >= 1 on every axis");
  if (!spacing_mm.allFinite() || (spacing_mm.array() <= 0.0).any()) {
    throw InputError("volume spacing must be positive on every axis");
  }
  if (!origin_mm.allFinite()) throw InputError("volume origin must be finite");
}

bool centroid_in_lung(const WorldPoint& p, const LabelVolume& vol, const std::set<int>& lung_labels) {
  const auto label = nearest_voxel(vol, p);
  return label && lung_labels.count(*label) > 0;
}

VolumeHeader Patch::header() const {
  VolumeHeader h;
  h.dims = Eigen::Vector3i::Constant(kPatchSize);
  h.spacing_mm = patch_spacing();
  h.origin_mm = origin_mm();
  h.element_type = ElementType::Float32;
  return h;
}

namespace {

template <int N>
Eigen::Matrix<double, N, 1> parse_reals(const std::string& key, const std::vector<std::string>& tokens) {
  if (static_cast<int>(tokens.size()) != N) {
    throw InputError(fmt::format("header key {} expects {} values, got {}", key, N, tokens.size()));
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) {
    const auto v = text::parse_double(tokens[i]);
    if (!v) throw InputError(fmt::format("header key {}: '{}' is not a number", key, tokens[i]));
    out[i] = *v;
  }
  return out;
}

ElementType parse_element_type(std::string_view s) {
  if (s == "uint8") return ElementType::UInt8;
  if (s == "int16") return ElementType::Int16;
  if (s == "float32") return ElementType::Float32;
  throw InputError(fmt::format("unsupported element_type '{}'", s));
}

std::vector<char> read_raw(const VolumeHeader& h, const std::filesystem::path& header_path) {
  const auto data_path = header_path.parent_path() / h.data_file;
  const std::string bytes = read_file(data_path);
  const std::size_t expected = h.voxel_count() * element_size(h.element_type);
  if (bytes.size() != expected) {
    throw InputError(fmt::format("{}: expected {} bytes, found {}", data_path.string(), expected, bytes.size()));
  }
  return std::vector<char>(bytes.begin(), bytes.end());
}

template <typename Out>
Eigen::Array<Out, Eigen::Dynamic, 1> decode(const VolumeHeader& h, const std::vector<char>& raw) {
  const auto n = static_cast<Eigen::Index>(h.voxel_count());
  Eigen::Array<Out, Eigen::Dynamic, 1> out(n);
  switch (h.element_type) {
    case ElementType::UInt8:
      for (Eigen::Index i = 0; i < n; ++i) out[i] = static_cast<Out>(static_cast<std::uint8_t>(raw[i]));
      break;
    case ElementType::Int16:
      for (Eigen::Index i = 0; i < n; ++i) {
        std::int16_t v;
        std::memcpy(&v, raw.data() + 2 * i, 2);
        out[i] = static_cast<Out>(v);
      }
      break;
    case ElementType::Float32:
      for (Eigen::Index i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, raw.data() + 4 * i, 4);
        if constexpr (std::is_integral_v<Out>) {
          if (!std::isfinite(v) || std::floor(v) != v) {
            throw InputError(fmt::format("label voxel {} is not an integer ({})", i, v));
          }
        }
        out[i] = static_cast<Out>(v);
      }
      break;
  }
  return out;
}

template <typename T>
std::string encode(const Volume<T>& vol, ElementType type) {
  const auto& v = vol.voxels();
  std::string out(static_cast<std::size_t>(v.size()) * element_size(type), '\0');
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    switch (type) {
      case ElementType::UInt8: {
        if (v[i] < 0 || v[i] > 255) throw InputError("value does not fit uint8");
        out[i] = static_cast<char>(static_cast<std::uint8_t>(v[i]));
        break;
      }
      case ElementType::Int16: {
        if (v[i] < -32768 || v[i] > 32767) throw InputError("value does not fit int16");
        const auto s = static_cast<std::int16_t>(v[i]);
        std::memcpy(out.data() + 2 * i, &s, 2);
        break;
      }
      case ElementType::Float32: {
        const auto f = static_cast<float>(v[i]);
        std::memcpy(out.data() + 4 * i, &f, 4);
        break;
      }
    }
  }
  return out;
}

template <typename T>
void write_impl(const Volume<T>& vol, const std::filesystem::path& header_path, ElementType type) {
  VolumeHeader h = vol.header();
  h.element_type = type;
  auto raw_path = header_path;
  raw_path.replace_extension(".raw");
  h.data_file = raw_path.filename().string();
  write_file_atomic(raw_path, encode(vol, type));
  write_file_atomic(header_path, format_volume_header(h));
}

}  // namespace

std::string format_volume_header(const VolumeHeader& h) {
  return fmt::format(
      "dims = {} {} {}\nspacing_mm = {} {} {}\norigin_mm = {} {} {}\nelement_type = {}\ndata_file = {}\n",
      h.dims.x(), h.dims.y(), h.dims.z(), h.spacing_mm.x(), h.spacing_mm.y(), h.spacing_mm.z(),
      h.origin_mm.x(), h.origin_mm.y(), h.origin_mm.z(), to_string(h.element_type), h.data_file);
}

VolumeHeader read_volume_header(const std::filesystem::path& header_path) {
  std::istringstream in(read_file(header_path));
  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw InputError(fmt::format("{}:{}: expected 'key = value'", header_path.string(), line_no));
    }
    const std::string key(text::trim(t.substr(0, eq)));
    const auto value = text::trim(t.substr(eq + 1));
    static const std::set<std::string> known = {"dims", "spacing_mm", "origin_mm", "element_type", "data_file"};
    if (!known.count(key)) {
      throw InputError(fmt::format("{}:{}: unknown key '{}'", header_path.string(), line_no, key));
    }
    if (entries.count(key)) {
      throw InputError(fmt::format("{}:{}: duplicate key '{}'", header_path.string(), line_no, key));
    }
    entries[key] = key == "data_file" ? std::vector<std::string>{std::string(value)} : text::split_ws(value);
  }
  for (const char* key : {"dims", "spacing_mm", "origin_mm", "element_type", "data_file"}) {
    if (!entries.count(key)) throw InputError(fmt::format("{}: missing key '{}'", header_path.string(), key));
  }
  VolumeHeader h;
  const auto dims = parse_reals<3>("dims", entries["dims"]);
  for (int a = 0; a < 3; ++a) {
    if (std::floor(dims[a]) != dims[a] || dims[a] < 1 || dims[a] > 1e5) {
      throw InputError(fmt::format("{}: dims must be positive integers", header_path.string()));
    }
    h.dims[a] = static_cast<int>(dims[a]);
  }
  h.spacing_mm = parse_reals<3>("spacing_mm", entries["spacing_mm"]);
  h.origin_mm = parse_reals<3>("origin_mm", entries["origin_mm"]);
  if (entries["element_type"].size() != 1) throw InputError("element_type expects one value");
  h.element_type = parse_element_type(entries["element_type"][0]);
  h.data_file = entries["data_file"][0];
  if (h.data_file.empty()) throw InputError("data_file must not be empty");
  h.validate();
  return h;
}

LabelVolume load_label_volume(const std::filesystem::path& header_path) {
  const auto h = read_volume_header(header_path);
  return LabelVolume(h, decode<std::int32_t>(h, read_raw(h, header_path)));
}

IntensityVolume load_intensity_volume(const std::filesystem::path& header_path) {
  const auto h = read_volume_header(header_path);
  return IntensityVolume(h, decode<float>(h, read_raw(h, header_path)));
}

void write_volume(const LabelVolume& vol, const std::filesystem::path& header_path, ElementType type) {
  write_impl(vol, header_path, type);
}

void write_volume(const IntensityVolume& vol, const std::filesystem::path& header_path, ElementType type) {
  write_impl(vol, header_path, type);
}

void write_patch(const Patch& patch, const std::filesystem::path& header_path) {
  IntensityVolume vol(patch.header(), patch.values().cast<float>());
  write_impl(vol, header_path, ElementType::Float32);
}

}  // namespace trifuse

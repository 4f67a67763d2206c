// Copyright 2026 The gradsel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gradsel/component.hpp"

namespace gradsel {

struct ManifestEntry {
  ComponentId id;
  std::vector<std::int64_t> shape;
  std::int64_t param_count = 0;
};

/// The ordered component universe of a model. The entry order fixes the
/// concatenation order of flattened gradients everywhere downstream.
class ComponentManifest {
 public:
  ComponentManifest() = default;

  /// Validates shapes, uniqueness and embedding multiplicity; param counts are
  /// derived from shapes.
  ComponentManifest(std::vector<ManifestEntry> entries, std::string model_tag);

  /// Convenience constructor computing param_count from each shape.
  static ComponentManifest from_shapes(
      const std::vector<std::pair<ComponentId, std::vector<std::int64_t>>>& shapes,
      std::string model_tag);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ManifestEntry& operator[](std::size_t k) const { return entries_[k]; }
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::int64_t total_params() const { return total_params_; }
  const std::string& model_tag() const { return model_tag_; }

  /// Offset of component k inside the concatenated gradient.
  std::int64_t offset(std::size_t k) const { return offsets_[k]; }
  std::int64_t max_block() const;

  /// Index of `id` in manifest order, or -1.
  std::ptrdiff_t index_of(const ComponentId& id) const;

  /// 64-bit structural digest over (layer, kind, shape) in order. Model tag
  /// is not part of it.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  std::string to_json() const;
  static ComponentManifest from_json(const std::string& text);

  void save_json(const std::filesystem::path& path) const;
  static ComponentManifest load_json(const std::filesystem::path& path);

  friend bool operator==(const ComponentManifest& a, const ComponentManifest& b);

 private:
  std::vector<ManifestEntry> entries_;
  std::vector<std::int64_t> offsets_;
  std::int64_t total_params_ = 0;
  std::string model_tag_;
};

std::string hash_to_hex(std::uint64_t hash);

/// Non-owning view of a dense tensor with arbitrary element strides.
template <typename T>
struct TensorView {
  std::span<const T> data;
  std::vector<std::int64_t> shape;
  std::vector<std::int64_t> strides;  // empty means contiguous row-major

  static TensorView contiguous(std::span<const T> data, std::vector<std::int64_t> shape) {
    return TensorView{data, std::move(shape), {}};
  }
};

/// Row-major vectorization: multi-index (i0, ..., in) lands at the
/// lexicographic position of that index. Throws kFormat if the shape does not
/// match `entry`.
std::vector<float> flatten_component(const TensorView<float>& tensor, const ManifestEntry& entry);
std::vector<float> flatten_component(const TensorView<double>& tensor, const ManifestEntry& entry);

/// Nested-row form for 2-D tensors.
std::vector<float> flatten_component(const std::vector<std::vector<float>>& rows,
                                     const ManifestEntry& entry);

}  // namespace gradsel

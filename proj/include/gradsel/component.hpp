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

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace gradsel {

enum class ComponentKind : std::uint8_t {
  kEmbedding = 0,
  kAttnQ,
  kAttnK,
  kAttnV,
  kAttnO,
  kMlpGate,
  kMlpUp,
  kMlpDown,
};

inline constexpr std::array<ComponentKind, 8> kAllKinds = {
    ComponentKind::kEmbedding, ComponentKind::kAttnQ,   ComponentKind::kAttnK,
    ComponentKind::kAttnV,     ComponentKind::kAttnO,   ComponentKind::kMlpGate,
    ComponentKind::kMlpUp,     ComponentKind::kMlpDown,
};

// Per-layer kinds in canonical order.
inline constexpr std::array<ComponentKind, 7> kLayerKinds = {
    ComponentKind::kAttnQ,   ComponentKind::kAttnK, ComponentKind::kAttnV,
    ComponentKind::kAttnO,   ComponentKind::kMlpGate, ComponentKind::kMlpUp,
    ComponentKind::kMlpDown,
};

std::string_view kind_name(ComponentKind kind);
std::optional<ComponentKind> parse_kind(std::string_view name);

inline constexpr int kEmbeddingLayer = -1;

/// Address of one weight tensor. The embedding uses layer -1 so that
/// (layer, kind) ordering puts it ahead of every transformer layer.
struct ComponentId {
  int layer = kEmbeddingLayer;
  ComponentKind kind = ComponentKind::kEmbedding;

  static ComponentId embedding() { return {kEmbeddingLayer, ComponentKind::kEmbedding}; }

  bool is_embedding() const { return kind == ComponentKind::kEmbedding; }

  friend auto operator<=>(const ComponentId&, const ComponentId&) = default;
};

/// "embedding" or e.g. "L3.attn_q".
std::string to_string(const ComponentId& id);
std::optional<ComponentId> parse_component_id(std::string_view text);

}  // namespace gradsel

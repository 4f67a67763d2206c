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

#include "gradsel/component.hpp"

#include <charconv>

#include "gradsel/error.hpp"

namespace gradsel {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported version";
    case ErrorCode::kTruncated: return "truncated payload";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kManifestMismatch: return "manifest mismatch";
    case ErrorCode::kMissingPair: return "missing pair";
    case ErrorCode::kMissingRecord: return "missing record";
    case ErrorCode::kNumerical: return "numerical error";
  }
  return "unknown";
}

std::string_view kind_name(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::kEmbedding: return "embedding";
    case ComponentKind::kAttnQ: return "attn_q";
    case ComponentKind::kAttnK: return "attn_k";
    case ComponentKind::kAttnV: return "attn_v";
    case ComponentKind::kAttnO: return "attn_o";
    case ComponentKind::kMlpGate: return "mlp_gate";
    case ComponentKind::kMlpUp: return "mlp_up";
    case ComponentKind::kMlpDown: return "mlp_down";
  }
  return "unknown";
}

std::optional<ComponentKind> parse_kind(std::string_view name) {
  for (ComponentKind kind : kAllKinds) {
    if (kind_name(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string to_string(const ComponentId& id) {
  if (id.is_embedding()) return "embedding";
  return "L" + std::to_string(id.layer) + "." + std::string(kind_name(id.kind));
}

std::optional<ComponentId> parse_component_id(std::string_view text) {
  if (text == "embedding") return ComponentId::embedding();
  if (text.size() < 4 || text[0] != 'L') return std::nullopt;
  const auto dot = text.find('.');
  if (dot == std::string_view::npos) return std::nullopt;
  int layer = 0;
  const auto* begin = text.data() + 1;
  const auto* end = text.data() + dot;
  auto [ptr, ec] = std::from_chars(begin, end, layer);
  if (ec != std::errc() || ptr != end || layer < 0) return std::nullopt;
  auto kind = parse_kind(text.substr(dot + 1));
  if (!kind || *kind == ComponentKind::kEmbedding) return std::nullopt;
  return ComponentId{layer, *kind};
}

}  // namespace gradsel

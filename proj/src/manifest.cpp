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

#include "gradsel/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gradsel/error.hpp"

namespace gradsel {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t value) {
  for (int b = 0; b < 8; ++b) {
    h ^= (value >> (8 * b)) & 0xffU;
    h *= kFnvPrime;
  }
}

std::int64_t product(const std::vector<std::int64_t>& shape) {
  std::int64_t p = 1;
  for (auto d : shape) p *= d;
  return p;
}

template <typename T>
std::vector<float> flatten_impl(const TensorView<T>& t, const ManifestEntry& entry) {
  if (t.shape != entry.shape) {
    fail(ErrorCode::kFormat, "tensor shape does not match manifest entry " + to_string(entry.id));
  }
  const std::size_t rank = t.shape.size();
  std::vector<std::int64_t> strides = t.strides;
  if (strides.empty()) {
    strides.assign(rank, 1);
    for (std::size_t d = rank; d-- > 1;) strides[d - 1] = strides[d] * t.shape[d];
  } else if (strides.size() != rank) {
    fail(ErrorCode::kFormat, "stride rank differs from shape rank");
  }
  const std::int64_t count = entry.param_count;
  std::vector<float> out(static_cast<std::size_t>(count));
  std::vector<std::int64_t> index(rank, 0);
  std::int64_t src = 0;
  for (std::int64_t pos = 0; pos < count; ++pos) {
    if (src < 0 || static_cast<std::size_t>(src) >= t.data.size()) {
      fail(ErrorCode::kFormat, "tensor data too small for its shape/strides");
    }
    out[static_cast<std::size_t>(pos)] = static_cast<float>(t.data[static_cast<std::size_t>(src)]);
    // odometer increment, last axis fastest
    for (std::size_t d = rank; d-- > 0;) {
      ++index[d];
      src += strides[d];
      if (index[d] < t.shape[d]) break;
      src -= strides[d] * index[d];
      index[d] = 0;
    }
  }
  return out;
}

}  // namespace

std::string hash_to_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

ComponentManifest::ComponentManifest(std::vector<ManifestEntry> entries, std::string model_tag)
    : entries_(std::move(entries)), model_tag_(std::move(model_tag)) {
  if (entries_.empty()) fail(ErrorCode::kInvalidArgument, "manifest has no components");
  std::set<ComponentId> seen;
  int embeddings = 0;
  offsets_.reserve(entries_.size());
  for (auto& e : entries_) {
    if (e.shape.empty()) fail(ErrorCode::kInvalidArgument, "component " + to_string(e.id) + " has empty shape");
    for (auto d : e.shape) {
      if (d <= 0) fail(ErrorCode::kInvalidArgument, "component " + to_string(e.id) + " has non-positive dim");
    }
    const auto count = product(e.shape);
    if (e.param_count != 0 && e.param_count != count) {
      fail(ErrorCode::kInvalidArgument, "param_count of " + to_string(e.id) + " differs from shape product");
    }
    e.param_count = count;
    if (e.id.is_embedding()) {
      if (e.id.layer != kEmbeddingLayer) fail(ErrorCode::kInvalidArgument, "embedding must use layer -1");
      ++embeddings;
    } else if (e.id.layer < 0) {
      fail(ErrorCode::kInvalidArgument, "negative layer on non-embedding component");
    }
    if (!seen.insert(e.id).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate component " + to_string(e.id));
    }
    offsets_.push_back(total_params_);
    total_params_ += count;
  }
  if (embeddings > 1) fail(ErrorCode::kInvalidArgument, "more than one embedding component");
}

ComponentManifest ComponentManifest::from_shapes(
    const std::vector<std::pair<ComponentId, std::vector<std::int64_t>>>& shapes,
    std::string model_tag) {
  std::vector<ManifestEntry> entries;
  entries.reserve(shapes.size());
  for (const auto& [id, shape] : shapes) entries.push_back({id, shape, 0});
  return ComponentManifest(std::move(entries), std::move(model_tag));
}

std::int64_t ComponentManifest::max_block() const {
  std::int64_t m = 0;
  for (const auto& e : entries_) m = std::max(m, e.param_count);
  return m;
}

std::ptrdiff_t ComponentManifest::index_of(const ComponentId& id) const {
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (entries_[k].id == id) return static_cast<std::ptrdiff_t>(k);
  }
  return -1;
}

std::uint64_t ComponentManifest::hash() const {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, entries_.size());
  for (const auto& e : entries_) {
    fnv_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(e.id.layer)));
    fnv_mix(h, static_cast<std::uint64_t>(e.id.kind));
    fnv_mix(h, e.shape.size());
    for (auto d : e.shape) fnv_mix(h, static_cast<std::uint64_t>(d));
  }
  return h;
}

std::string ComponentManifest::hash_hex() const { return hash_to_hex(hash()); }

std::string ComponentManifest::to_json() const {
  nlohmann::json j;
  j["format"] = "gradsel-manifest";
  j["version"] = 1;
  j["model_tag"] = model_tag_;
  j["total_params"] = total_params_;
  j["hash"] = hash_hex();
  auto& comps = j["components"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    comps.push_back({{"name", to_string(e.id)},
                     {"layer", e.id.layer},
                     {"kind", std::string(kind_name(e.id.kind))},
                     {"shape", e.shape},
                     {"param_count", e.param_count}});
  }
  return j.dump();
}

ComponentManifest ComponentManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    std::vector<ManifestEntry> entries;
    for (const auto& c : j.at("components")) {
      auto kind = parse_kind(c.at("kind").get<std::string>());
      if (!kind) fail(ErrorCode::kFormat, "unknown component kind " + c.at("kind").dump());
      ManifestEntry e;
      e.id = ComponentId{c.at("layer").get<int>(), *kind};
      e.shape = c.at("shape").get<std::vector<std::int64_t>>();
      e.param_count = c.value("param_count", std::int64_t{0});
      entries.push_back(std::move(e));
    }
    ComponentManifest m(std::move(entries), j.value("model_tag", std::string{}));
    if (j.contains("total_params") && j["total_params"].get<std::int64_t>() != m.total_params()) {
      fail(ErrorCode::kFormat, "manifest total_params disagrees with component sizes");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) fail(ErrorCode::kFormat, e.what());
    throw;
  }
}

void ComponentManifest::save_json(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << nlohmann::json::parse(to_json()).dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

ComponentManifest ComponentManifest::load_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

bool operator==(const ComponentManifest& a, const ComponentManifest& b) {
  if (a.entries_.size() != b.entries_.size() || a.model_tag_ != b.model_tag_) return false;
  for (std::size_t k = 0; k < a.entries_.size(); ++k) {
    if (a.entries_[k].id != b.entries_[k].id || a.entries_[k].shape != b.entries_[k].shape) return false;
  }
  return true;
}

std::vector<float> flatten_component(const TensorView<float>& tensor, const ManifestEntry& entry) {
  return flatten_impl(tensor, entry);
}

std::vector<float> flatten_component(const TensorView<double>& tensor, const ManifestEntry& entry) {
  return flatten_impl(tensor, entry);
}

std::vector<float> flatten_component(const std::vector<std::vector<float>>& rows,
                                     const ManifestEntry& entry) {
  const std::vector<std::int64_t> shape = {
      static_cast<std::int64_t>(rows.size()),
      rows.empty() ? 0 : static_cast<std::int64_t>(rows.front().size())};
  if (shape != entry.shape) {
    fail(ErrorCode::kFormat, "tensor shape does not match manifest entry " + to_string(entry.id));
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(entry.param_count));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != shape[1]) fail(ErrorCode::kFormat, "ragged rows");
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace gradsel

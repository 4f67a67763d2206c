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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "gradsel/candidate_set.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/manifest.hpp"

namespace gradsel {

struct PairKey {
  std::int64_t query_id = 0;
  std::int64_t cand_id = 0;

  friend auto operator<=>(const PairKey&, const PairKey&) = default;
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const noexcept {
    return std::hash<std::int64_t>{}(k.query_id) * 0x9e3779b97f4a7c15ULL ^
           std::hash<std::int64_t>{}(k.cand_id);
  }
};

/// Per-component dot products between query and candidate gradients, plus
/// per-component squared norms of every sample involved. Immutable once built.
class DotCache {
 public:
  using SelfMap = std::map<std::int64_t, std::vector<double>>;

  DotCache() = default;
  /// `pairs` must be strictly ascending; `deltas` holds one row of
  /// `num_components` values per pair.
  DotCache(std::uint64_t manifest_hash, std::size_t num_components, std::vector<PairKey> pairs,
           std::vector<double> deltas, SelfMap query_self, SelfMap cand_self);

  std::uint64_t manifest_hash() const { return manifest_hash_; }
  std::size_t num_components() const { return num_components_; }
  std::size_t num_pairs() const { return pairs_.size(); }
  const std::vector<PairKey>& pairs() const { return pairs_; }

  bool contains(const PairKey& key) const { return index_.contains(key); }
  /// Row index of a pair; throws kMissingPair.
  std::size_t row(const PairKey& key) const;
  std::span<const double> pair_dots(std::size_t row) const {
    return {deltas_.data() + row * num_components_, num_components_};
  }
  std::span<const double> pair_dots(const PairKey& key) const { return pair_dots(row(key)); }
  std::span<const double> query_self(std::int64_t query_id) const;
  std::span<const double> cand_self(std::int64_t cand_id) const;

  const SelfMap& query_self_map() const { return query_self_; }
  const SelfMap& cand_self_map() const { return cand_self_; }
  const std::vector<double>& raw_deltas() const { return deltas_; }

  friend bool operator==(const DotCache& a, const DotCache& b);

 private:
  std::uint64_t manifest_hash_ = 0;
  std::size_t num_components_ = 0;
  std::vector<PairKey> pairs_;
  std::vector<double> deltas_;
  SelfMap query_self_;
  SelfMap cand_self_;
  std::unordered_map<PairKey, std::size_t, PairKeyHash> index_;
};

/// Exact per-block dot products accumulated sequentially in 64-bit.
std::vector<double> compute_pair_dots(const GradientRecord& query, const GradientRecord& cand);

/// Sequential 64-bit dot of two float blocks.
double block_dot(std::span<const float> a, std::span<const float> b);

struct BuildCacheOptions {
  std::size_t threads = 0;
};

/// Builds the cache for exactly the pairs {(q, c) : c in cand_set(q)}.
/// Candidate records are streamed in file order once per component; each
/// worker holds at most one candidate block and one query block.
DotCache build_cache(const std::filesystem::path& queries, const std::filesystem::path& candidates,
                     const std::vector<CandidateSet>& cand_sets, const BuildCacheOptions& options = {});

inline constexpr std::array<char, 4> kDotCacheMagic = {'G', 'S', 'D', '1'};

void save_cache(const DotCache& cache, const std::filesystem::path& path);
/// Verifies the stored manifest hash against `manifest`.
DotCache load_cache(const std::filesystem::path& path, const ComponentManifest& manifest);
DotCache load_cache_unchecked(const std::filesystem::path& path);

}  // namespace gradsel

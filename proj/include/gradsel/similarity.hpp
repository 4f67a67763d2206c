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
#include <filesystem>
#include <span>
#include <vector>

#include "gradsel/candidate_set.hpp"
#include "gradsel/dot_cache.hpp"

namespace gradsel {

struct SimilarityParams {
  double epsilon = 1e-12;  // added to the norm product in every cosine

  void validate() const;
};

/// Set of component indices (manifest order), kept sorted and unique.
using ComponentSubset = std::vector<std::size_t>;

/// Sorts, dedupes and range-checks a subset; throws on empty or out of range.
ComponentSubset normalize_subset(std::span<const std::size_t> subset, std::size_t num_components);
ComponentSubset all_components(std::size_t num_components);

/// Cosine scores keyed by (query, candidate), ascending key order.
struct ScoreTable {
  std::vector<PairKey> keys;
  std::vector<double> scores;
  ComponentSubset subset;  // empty for tables not produced from the cache

  std::size_t size() const { return keys.size(); }
  /// Throws kMissingPair.
  double at(const PairKey& key) const;
};

/// sum_S delta(i,j) / (sqrt(sum_S delta(i,i)) * sqrt(sum_S delta(j,j)) + eps),
/// with the sums taken in ascending component order.
double reconstruct_cosine(const DotCache& cache, std::int64_t query_id, std::int64_t cand_id,
                          std::span<const std::size_t> subset, const SimilarityParams& params = {});

/// Unique pairs referenced by the candidate sets, ascending.
std::vector<PairKey> candidate_pairs(const std::vector<CandidateSet>& cand_sets);

ScoreTable score_table(const DotCache& cache, const std::vector<CandidateSet>& cand_sets,
                       std::span<const std::size_t> subset, const SimilarityParams& params = {});

/// Cosine between two score vectors over the same key set.
double alignment(const ScoreTable& table, const ScoreTable& reference);

/// CSV with header "query_id,cand_id,score"; scores printed round-trip exact.
void write_score_csv(const ScoreTable& table, const std::filesystem::path& path);
ScoreTable read_score_csv(const std::filesystem::path& path);

}  // namespace gradsel

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
#include <optional>
#include <vector>

namespace gradsel {

/// Candidate base-set ids for one query. The query's original counterpart
/// shares its id and is always a member.
struct CandidateSet {
  std::int64_t query_id = 0;
  std::size_t b = 0;
  std::vector<std::int64_t> members;  // BM25 rank order, best first
  bool forced = false;
  std::optional<std::int64_t> evicted;  // member displaced by forcing

  bool contains(std::int64_t id) const;

  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

void save_candidate_sets(const std::vector<CandidateSet>& sets, const std::filesystem::path& path);
std::vector<CandidateSet> load_candidate_sets(const std::filesystem::path& path);

}  // namespace gradsel

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

#include "gradsel/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "gradsel/error.hpp"

namespace gradsel {

void SimilarityParams::validate() const {
  if (!(epsilon > 0.0)) fail(ErrorCode::kInvalidArgument, "similarity epsilon must be > 0");
}

ComponentSubset normalize_subset(std::span<const std::size_t> subset, std::size_t num_components) {
  ComponentSubset s(subset.begin(), subset.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  if (s.empty()) fail(ErrorCode::kInvalidArgument, "component subset is empty");
  if (s.back() >= num_components) {
    fail(ErrorCode::kInvalidArgument, "component index " + std::to_string(s.back()) + " out of range");
  }
  return s;
}

ComponentSubset all_components(std::size_t num_components) {
  ComponentSubset s(num_components);
  std::iota(s.begin(), s.end(), std::size_t{0});
  return s;
}

double ScoreTable::at(const PairKey& key) const {
  auto it = std::lower_bound(keys.begin(), keys.end(), key);
  if (it == keys.end() || *it != key) {
    fail(ErrorCode::kMissingPair, "pair (" + std::to_string(key.query_id) + ", " + std::to_string(key.cand_id) +
                                      ") not in score table");
  }
  return scores[static_cast<std::size_t>(it - keys.begin())];
}

namespace {

double cosine_from_sums(double dot, double qq, double cc, double epsilon) {
  return dot / (std::sqrt(qq) * std::sqrt(cc) + epsilon);
}

double subset_sum(std::span<const double> row, std::span<const std::size_t> subset) {
  double s = 0.0;
  for (auto k : subset) s += row[k];
  return s;
}

}  // namespace

double reconstruct_cosine(const DotCache& cache, std::int64_t query_id, std::int64_t cand_id,
                          std::span<const std::size_t> subset, const SimilarityParams& params) {
  params.validate();
  const auto s = normalize_subset(subset, cache.num_components());
  const auto dots = cache.pair_dots(PairKey{query_id, cand_id});
  return cosine_from_sums(subset_sum(dots, s), subset_sum(cache.query_self(query_id), s),
                          subset_sum(cache.cand_self(cand_id), s), params.epsilon);
}

std::vector<PairKey> candidate_pairs(const std::vector<CandidateSet>& cand_sets) {
  std::set<PairKey> keys;
  for (const auto& cs : cand_sets) {
    for (auto c : cs.members) keys.insert({cs.query_id, c});
  }
  return {keys.begin(), keys.end()};
}

ScoreTable score_table(const DotCache& cache, const std::vector<CandidateSet>& cand_sets,
                       std::span<const std::size_t> subset, const SimilarityParams& params) {
  params.validate();
  ScoreTable table;
  table.subset = normalize_subset(subset, cache.num_components());
  table.keys = candidate_pairs(cand_sets);
  table.scores.reserve(table.keys.size());
  for (const auto& key : table.keys) {
    const auto dots = cache.pair_dots(key);
    table.scores.push_back(cosine_from_sums(subset_sum(dots, table.subset),
                                            subset_sum(cache.query_self(key.query_id), table.subset),
                                            subset_sum(cache.cand_self(key.cand_id), table.subset),
                                            params.epsilon));
  }
  return table;
}

double alignment(const ScoreTable& table, const ScoreTable& reference) {
  if (table.keys != reference.keys) fail(ErrorCode::kInvalidArgument, "score tables cover different pairs");
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < table.scores.size(); ++i) {
    dot += table.scores[i] * reference.scores[i];
    aa += table.scores[i] * table.scores[i];
    bb += reference.scores[i] * reference.scores[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return dot / (std::sqrt(aa) * std::sqrt(bb));
}

void write_score_csv(const ScoreTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << "query_id,cand_id,score\n";
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", table.scores[i]);
    out << table.keys[i].query_id << ',' << table.keys[i].cand_id << ',' << buf << '\n';
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

ScoreTable read_score_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  ScoreTable table;
  std::string line;
  std::getline(in, line);
  if (line != "query_id,cand_id,score") fail(ErrorCode::kFormat, path.string() + ": unexpected CSV header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string q, c, s;
    if (!std::getline(row, q, ',') || !std::getline(row, c, ',') || !std::getline(row, s)) {
      fail(ErrorCode::kFormat, path.string() + ": malformed row");
    }
    table.keys.push_back({std::stoll(q), std::stoll(c)});
    table.scores.push_back(std::stod(s));
  }
  if (!std::is_sorted(table.keys.begin(), table.keys.end())) {
    fail(ErrorCode::kFormat, path.string() + ": rows not in ascending key order");
  }
  return table;
}

}  // namespace gradsel

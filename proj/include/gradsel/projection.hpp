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
#include <string>
#include <unordered_map>
#include <vector>

#include "gradsel/candidate_set.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/manifest.hpp"
#include "gradsel/similarity.hpp"

namespace gradsel {

enum class ProjectionDistribution { kRademacher, kGaussian };

std::string_view distribution_name(ProjectionDistribution d);
ProjectionDistribution parse_distribution(std::string_view name);

/// Per-component output sizes proportional to parameter count: floor shares
/// (at least 1 each), then leftover units to the largest remainders, ties to
/// the larger component and then the smaller (layer, kind).
std::vector<std::int64_t> allocate_dims(const ComponentManifest& manifest, std::int64_t total_dim);

struct ProjectionConfig {
  std::int64_t total_dim = 0;
  std::vector<std::int64_t> per_component_dims;
  std::vector<std::int64_t> source_lengths;  // manifest param counts
  std::uint64_t seed = 0;
  ProjectionDistribution distribution = ProjectionDistribution::kRademacher;
  std::uint64_t manifest_hash = 0;

  static ProjectionConfig make(const ComponentManifest& manifest, std::int64_t total_dim, std::uint64_t seed,
                               ProjectionDistribution distribution = ProjectionDistribution::kRademacher);
  /// total_dim = max(|W|, round(fraction * M)).
  static ProjectionConfig from_fraction(const ComponentManifest& manifest, double fraction, std::uint64_t seed,
                                        ProjectionDistribution distribution = ProjectionDistribution::kRademacher);

  void validate() const;
  std::string to_json() const;
  static ProjectionConfig from_json(const std::string& text);

  friend bool operator==(const ProjectionConfig&, const ProjectionConfig&) = default;
};

/// Entry (row, col) of the random matrix for `component`, generated from a
/// counter-based hash of (seed, component, row, column chunk). Any entry can
/// be evaluated independently; the matrix is never stored.
double projection_entry(const ProjectionConfig& config, std::size_t component, std::int64_t row, std::int64_t col);

struct ProjectedRecord {
  std::int64_t sample_id = 0;
  std::vector<float> vector;  // blocks concatenated in manifest order

  friend bool operator==(const ProjectedRecord&, const ProjectedRecord&) = default;
};

/// Block k of the output is R_k v_k / sqrt(dims[k]), accumulated in 64-bit.
ProjectedRecord project_record(const GradientRecord& record, const ProjectionConfig& config);

struct ProjectedSet {
  ProjectionConfig config;
  std::vector<ProjectedRecord> records;

  const ProjectedRecord& get(std::int64_t sample_id) const;
  void build_index();

 private:
  std::unordered_map<std::int64_t, std::size_t> index_;
};

/// Streams a gradient file through the projection into a GSP1 file.
void project_gradient_file(const std::filesystem::path& input, const ProjectionConfig& config,
                           const std::filesystem::path& output, std::size_t threads = 0);

void write_projected_file(const ProjectedSet& set, const std::filesystem::path& path);
ProjectedSet read_projected_file(const std::filesystem::path& path);

/// Cosine of projected vectors for every candidate pair (same epsilon rule
/// as the cache-based scores). Throws if the two sides used different configs.
ScoreTable projected_score_table(const ProjectedSet& queries, const ProjectedSet& candidates,
                                 const std::vector<CandidateSet>& cand_sets, const SimilarityParams& params = {});

}  // namespace gradsel

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
#include <map>
#include <string>
#include <vector>

#include "gradsel/candidate_set.hpp"
#include "gradsel/dot_cache.hpp"
#include "gradsel/manifest.hpp"
#include "gradsel/similarity.hpp"

namespace gradsel {

enum class Objective { kAccuracy, kAlignment };

std::string_view objective_name(Objective objective);
Objective parse_objective(std::string_view name);

struct SelectionStep {
  ComponentId component;
  std::size_t index = 0;  // manifest position
  double objective_value = 0.0;
  double best_so_far = 0.0;
  std::int64_t cumulative_params = 0;
  double cumulative_param_fraction = 0.0;

  friend bool operator==(const SelectionStep&, const SelectionStep&) = default;
};

struct SelectionTrace {
  Objective objective = Objective::kAccuracy;
  std::vector<SelectionStep> steps;

  /// Length of the shortest prefix attaining the maximum objective (0 if empty).
  std::size_t best_prefix_length() const;
  double best_prefix_value() const;
  ComponentSubset best_prefix_subset() const;

  friend bool operator==(const SelectionTrace&, const SelectionTrace&) = default;
};

void write_trace_csv(const SelectionTrace& trace, const std::filesystem::path& path);
std::string trace_to_json(const SelectionTrace& trace);
SelectionTrace trace_from_json(const std::string& text);

/// Per query: does the true counterpart strictly beat every other candidate?
/// Ties count as failures. Candidate sets with no distractor succeed.
std::vector<bool> retrieval_decisions(const ScoreTable& table, const std::vector<CandidateSet>& cand_sets);
double retrieval_accuracy(const ScoreTable& table, const std::vector<CandidateSet>& cand_sets);

/// Retrieval accuracy of the cosine reconstructed from `subset`.
double evaluate_subset(const DotCache& cache, const std::vector<CandidateSet>& cand_sets,
                       std::span<const std::size_t> subset, const SimilarityParams& params = {});

struct SelectionOptions {
  SimilarityParams similarity;
  Objective objective = Objective::kAccuracy;
  std::size_t threads = 0;
};

struct SweepEntry {
  ComponentId component;
  std::size_t index = 0;
  std::int64_t param_count = 0;
  double value = 0.0;
};

struct SweepResult {
  Objective objective = Objective::kAccuracy;
  std::vector<SweepEntry> entries;            // manifest order
  std::map<ComponentKind, double> per_kind;   // mean over layers

  /// Best singleton; ties go to the smallest (layer, kind).
  const SweepEntry& argmax() const;
};

SweepResult single_component_sweep(const DotCache& cache, const ComponentManifest& manifest,
                                   const std::vector<CandidateSet>& cand_sets, const SelectionOptions& options = {});

struct SelectionBudget {
  std::size_t max_components = 0;   // 0 means no limit
  double max_param_fraction = 1.0;   // components that would exceed it are skipped
};

/// Forward greedy selection over cached dot products. Each step adds the
/// remaining component maximizing the objective on S + {k}, ties broken by
/// smallest (layer, kind); running accumulators are updated by addition.
SelectionTrace greedy_select(const DotCache& cache, const ComponentManifest& manifest,
                             const std::vector<CandidateSet>& cand_sets, const SelectionOptions& options = {},
                             const SelectionBudget& budget = {});

}  // namespace gradsel

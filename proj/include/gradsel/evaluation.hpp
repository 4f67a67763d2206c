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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gradsel/candidates.hpp"
#include "gradsel/component.hpp"
#include "gradsel/selection.hpp"

namespace gradsel {

/// Arithmetic mean of the sweep values per component kind; the embedding
/// keeps its own entry. Throws on an empty sweep.
std::map<ComponentKind, double> per_kind_means(const std::map<ComponentId, double>& sweep);

/// layer -> per-kind value table for the seven per-layer kinds. Missing
/// cells are NaN; the embedding is left out.
struct DepthProfile {
  std::vector<int> layers;
  std::vector<std::array<double, 7>> values;  // values[row][kind - AttnQ]

  double at(int layer, ComponentKind kind) const;
};

DepthProfile depth_profile(const std::map<ComponentId, double>& sweep);

void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path);
/// Reads the CSV written above back into a component -> value map.
std::map<ComponentId, double> read_sweep_csv(const std::filesystem::path& path);
void write_depth_csv(const DepthProfile& profile, const std::filesystem::path& path);
void write_per_kind_csv(const std::map<ComponentKind, double>& means, const std::filesystem::path& path);

struct CurveSeries {
  std::string name;
  std::vector<double> x;  // cumulative parameter fraction
  std::vector<double> y;

  friend bool operator==(const CurveSeries&, const CurveSeries&) = default;
};

struct CurveBundle {
  std::string y_label;
  std::vector<CurveSeries> series;
  double full_baseline = 0.0;

  std::string to_json() const;
  static CurveBundle from_json(const std::string& text);

  friend bool operator==(const CurveBundle&, const CurveBundle&) = default;
};

struct CurvePoint {
  double param_fraction = 0.0;
  double value = 0.0;
};

/// One series per trace (x = cumulative parameter fraction) plus one for the
/// random-projection points when present.
CurveBundle compare_curves(const std::vector<SelectionTrace>& traces, const std::vector<CurvePoint>& rp_points,
                           double full_baseline);

struct ProjectionResult {
  double param_fraction = 0.0;
  std::int64_t total_dim = 0;
  double accuracy = 0.0;
  double alignment = 0.0;
};

struct BenchmarkReport {
  CorpusRole setting = CorpusRole::kParaphrased;
  std::string surrogate;
  double accuracy = 0.0;
  double full_accuracy = 0.0;
  std::optional<SweepResult> per_component;
  std::optional<SelectionTrace> trace;
  std::optional<SelectionTrace> alignment_trace;
  std::vector<ProjectionResult> projections;
  std::vector<std::pair<std::string, double>> timings;  // stage -> seconds, run order
  bool cached = false;
  nlohmann::ordered_json metadata;

  double timing(const std::string& stage) const;
  /// Timings are omitted when `with_timings` is false so runs can be diffed.
  std::string to_json(bool with_timings = true) const;
};

}  // namespace gradsel

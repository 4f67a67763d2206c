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

#include "gradsel/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "gradsel/error.hpp"

namespace gradsel {

std::map<ComponentKind, double> per_kind_means(const std::map<ComponentId, double>& sweep) {
  if (sweep.empty()) fail(ErrorCode::kInvalidArgument, "empty sweep");
  std::map<ComponentKind, std::pair<double, int>> acc;
  for (const auto& [id, v] : sweep) {
    auto& [sum, n] = acc[id.kind];
    sum += v;
    ++n;
  }
  std::map<ComponentKind, double> out;
  for (const auto& [kind, sn] : acc) out[kind] = sn.first / sn.second;
  return out;
}

double DepthProfile::at(int layer, ComponentKind kind) const {
  for (std::size_t r = 0; r < layers.size(); ++r) {
    if (layers[r] == layer && kind != ComponentKind::kEmbedding) {
      return values[r][static_cast<std::size_t>(kind) - 1];
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

DepthProfile depth_profile(const std::map<ComponentId, double>& sweep) {
  DepthProfile profile;
  std::set<int> layers;
  for (const auto& [id, v] : sweep) {
    if (!id.is_embedding()) layers.insert(id.layer);
  }
  profile.layers.assign(layers.begin(), layers.end());
  std::array<double, 7> empty_row;
  empty_row.fill(std::numeric_limits<double>::quiet_NaN());
  profile.values.assign(profile.layers.size(), empty_row);
  for (const auto& [id, v] : sweep) {
    if (id.is_embedding()) continue;
    const auto row = static_cast<std::size_t>(
        std::lower_bound(profile.layers.begin(), profile.layers.end(), id.layer) - profile.layers.begin());
    profile.values[row][static_cast<std::size_t>(id.kind) - 1] = v;
  }
  return profile;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "component,layer,kind,param_count," << objective_name(sweep.objective) << '\n';
  for (const auto& e : sweep.entries) {
    out << to_string(e.component) << ',' << e.component.layer << ',' << kind_name(e.component.kind) << ','
        << e.param_count << ',' << fmt(e.value) << '\n';
  }
}

std::map<ComponentId, double> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::map<ComponentId, double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name, layer, kind, count, value;
    std::getline(row, name, ',');
    std::getline(row, layer, ',');
    std::getline(row, kind, ',');
    std::getline(row, count, ',');
    std::getline(row, value);
    auto id = parse_component_id(name);
    if (!id) fail(ErrorCode::kFormat, path.string() + ": bad component " + name);
    out[*id] = std::stod(value);
  }
  return out;
}

void write_depth_csv(const DepthProfile& profile, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "layer";
  for (auto kind : kLayerKinds) out << ',' << kind_name(kind);
  out << '\n';
  for (std::size_t r = 0; r < profile.layers.size(); ++r) {
    out << profile.layers[r];
    for (double v : profile.values[r]) out << ',' << (std::isnan(v) ? std::string() : fmt(v));
    out << '\n';
  }
}

void write_per_kind_csv(const std::map<ComponentKind, double>& means, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "kind,mean\n";
  for (const auto& [kind, v] : means) out << kind_name(kind) << ',' << fmt(v) << '\n';
}

// ---------------------------------------------------------------------------

std::string CurveBundle::to_json() const {
  nlohmann::ordered_json j;
  j["y_label"] = y_label;
  j["full_baseline"] = full_baseline;
  auto& arr = j["series"] = nlohmann::ordered_json::array();
  for (const auto& s : series) arr.push_back({{"name", s.name}, {"x", s.x}, {"y", s.y}});
  return j.dump();
}

CurveBundle CurveBundle::from_json(const std::string& text) {
  CurveBundle b;
  try {
    const auto j = nlohmann::json::parse(text);
    b.y_label = j.at("y_label").get<std::string>();
    b.full_baseline = j.at("full_baseline").get<double>();
    for (const auto& s : j.at("series")) {
      b.series.push_back({s.at("name").get<std::string>(), s.at("x").get<std::vector<double>>(),
                          s.at("y").get<std::vector<double>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed curve bundle: ") + e.what());
  }
  return b;
}

CurveBundle compare_curves(const std::vector<SelectionTrace>& traces, const std::vector<CurvePoint>& rp_points,
                           double full_baseline) {
  if (traces.empty() && rp_points.empty()) fail(ErrorCode::kInvalidArgument, "nothing to compare");
  CurveBundle bundle;
  bundle.full_baseline = full_baseline;
  bundle.y_label = traces.empty() ? "accuracy" : std::string(objective_name(traces.front().objective));
  for (std::size_t t = 0; t < traces.size(); ++t) {
    CurveSeries s;
    s.name = "greedy_" + std::string(objective_name(traces[t].objective));
    if (traces.size() > 1) s.name += "_" + std::to_string(t);
    for (const auto& step : traces[t].steps) {
      s.x.push_back(step.cumulative_param_fraction);
      s.y.push_back(step.objective_value);
    }
    bundle.series.push_back(std::move(s));
  }
  if (!rp_points.empty()) {
    CurveSeries s;
    s.name = "random_projection";
    auto pts = rp_points;
    std::sort(pts.begin(), pts.end(),
              [](const CurvePoint& a, const CurvePoint& b) { return a.param_fraction < b.param_fraction; });
    for (const auto& p : pts) {
      s.x.push_back(p.param_fraction);
      s.y.push_back(p.value);
    }
    bundle.series.push_back(std::move(s));
  }
  return bundle;
}

// ---------------------------------------------------------------------------

double BenchmarkReport::timing(const std::string& stage) const {
  for (const auto& [name, secs] : timings) {
    if (name == stage) return secs;
  }
  fail(ErrorCode::kInvalidArgument, "no timing recorded for stage '" + stage + "'");
}

std::string BenchmarkReport::to_json(bool with_timings) const {
  nlohmann::ordered_json j;
  j["setting"] = role_name(setting);
  j["surrogate"] = surrogate;
  j["accuracy"] = accuracy;
  j["full_accuracy"] = full_accuracy;
  if (per_component) {
    auto& pc = j["per_component"] = nlohmann::ordered_json::object();
    for (const auto& e : per_component->entries) pc[to_string(e.component)] = e.value;
    auto& pk = j["per_kind"] = nlohmann::ordered_json::object();
    for (const auto& [kind, v] : per_component->per_kind) pk[std::string(kind_name(kind))] = v;
  }
  if (trace) j["trace"] = nlohmann::ordered_json::parse(trace_to_json(*trace));
  if (alignment_trace) j["alignment_trace"] = nlohmann::ordered_json::parse(trace_to_json(*alignment_trace));
  auto& rp = j["projections"] = nlohmann::ordered_json::array();
  for (const auto& p : projections) {
    rp.push_back({{"param_fraction", p.param_fraction},
                  {"total_dim", p.total_dim},
                  {"accuracy", p.accuracy},
                  {"alignment", p.alignment}});
  }
  if (with_timings) {
    auto& t = j["timings"] = nlohmann::ordered_json::object();
    for (const auto& [stage, secs] : timings) t[stage] = secs;
    j["cached"] = cached;
  }
  j["metadata"] = metadata;
  return j.dump(2);
}

}  // namespace gradsel

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

#include "gradsel/projection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "gradsel/error.hpp"
#include "gradsel/parallel.hpp"

namespace gradsel {
namespace {

constexpr std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t component, std::uint64_t row, std::uint64_t chunk,
                           std::uint64_t lane) {
  std::uint64_t h = splitmix(seed ^ 0x6a09e667f3bcc909ULL);
  h = splitmix(h ^ component);
  h = splitmix(h ^ row);
  h = splitmix(h ^ chunk);
  return splitmix(h ^ lane);
}

double unit_open(std::uint64_t bits) {
  // (0, 1), never exactly zero
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double gaussian_entry(std::uint64_t seed, std::size_t component, std::int64_t row, std::int64_t col) {
  const auto chunk = static_cast<std::uint64_t>(col / 2);
  const double u1 = unit_open(counter_hash(seed, component, static_cast<std::uint64_t>(row), chunk, 0));
  const double u2 = unit_open(counter_hash(seed, component, static_cast<std::uint64_t>(row), chunk, 1));
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (col % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
}

constexpr std::size_t kLanes = 8;

// One row of R_k applied to up to kLanes vectors. Each lane accumulates its
// columns in ascending order, so results do not depend on how records are
// grouped.
void project_row(const ProjectionConfig& config, std::size_t component, std::int64_t row,
                 std::span<const std::span<const float>> vs, std::array<double, kLanes>& acc) {
  const std::size_t lanes = vs.size();
  const auto n = static_cast<std::int64_t>(vs[0].size());
  acc.fill(0.0);
  if (config.distribution == ProjectionDistribution::kRademacher) {
    for (std::int64_t base = 0; base < n; base += 64) {
      const std::uint64_t word = counter_hash(config.seed, component, static_cast<std::uint64_t>(row),
                                              static_cast<std::uint64_t>(base / 64), 0);
      const std::int64_t end = std::min<std::int64_t>(n, base + 64);
      for (std::int64_t c = base; c < end; ++c) {
        const double sign = ((word >> (c - base)) & 1U) ? 1.0 : -1.0;
        for (std::size_t j = 0; j < lanes; ++j) acc[j] += sign * static_cast<double>(vs[j][static_cast<std::size_t>(c)]);
      }
    }
  } else {
    for (std::int64_t c = 0; c < n; ++c) {
      const double e = gaussian_entry(config.seed, component, row, c);
      for (std::size_t j = 0; j < lanes; ++j) acc[j] += e * static_cast<double>(vs[j][static_cast<std::size_t>(c)]);
    }
  }
}

// Projects up to kLanes records that share a config.
void project_group(std::span<const GradientRecord> records, const ProjectionConfig& config,
                   std::span<ProjectedRecord> out) {
  const std::size_t lanes = records.size();
  for (std::size_t j = 0; j < lanes; ++j) {
    if (records[j].blocks.size() != config.per_component_dims.size()) {
      fail(ErrorCode::kManifestMismatch, "record block count differs from projection config");
    }
    for (std::size_t k = 0; k < records[j].blocks.size(); ++k) {
      if (static_cast<std::int64_t>(records[j].blocks[k].size()) != config.source_lengths[k]) {
        fail(ErrorCode::kManifestMismatch, "record block " + std::to_string(k) + " length differs from config");
      }
    }
    out[j].sample_id = records[j].sample_id;
    out[j].vector.clear();
    out[j].vector.reserve(static_cast<std::size_t>(config.total_dim));
  }
  std::array<std::span<const float>, kLanes> vs;
  std::array<double, kLanes> acc{};
  for (std::size_t k = 0; k < config.per_component_dims.size(); ++k) {
    for (std::size_t j = 0; j < lanes; ++j) vs[j] = records[j].blocks[k];
    const auto rows = config.per_component_dims[k];
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
      project_row(config, k, r, std::span<const std::span<const float>>(vs.data(), lanes), acc);
      for (std::size_t j = 0; j < lanes; ++j) out[j].vector.push_back(static_cast<float>(scale * acc[j]));
    }
  }
}

}  // namespace

std::string_view distribution_name(ProjectionDistribution d) {
  return d == ProjectionDistribution::kRademacher ? "rademacher" : "gaussian";
}

ProjectionDistribution parse_distribution(std::string_view name) {
  if (name == "rademacher") return ProjectionDistribution::kRademacher;
  if (name == "gaussian") return ProjectionDistribution::kGaussian;
  fail(ErrorCode::kInvalidArgument, "unknown projection distribution '" + std::string(name) + "'");
}

std::vector<std::int64_t> allocate_dims(const ComponentManifest& manifest, std::int64_t total_dim) {
  const std::size_t K = manifest.size();
  if (total_dim < static_cast<std::int64_t>(K)) {
    fail(ErrorCode::kInvalidArgument, "projection dim " + std::to_string(total_dim) + " is smaller than the " +
                                          std::to_string(K) + " components");
  }
  using wide = __int128;
  const wide M = manifest.total_params();
  std::vector<std::int64_t> dims(K);
  // remainder numerators over M: d * P_k - dims_k * M
  std::vector<wide> rem(K);
  std::int64_t sum = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const wide share = static_cast<wide>(total_dim) * manifest[k].param_count;
    dims[k] = std::max<std::int64_t>(1, static_cast<std::int64_t>(share / M));
    rem[k] = share - static_cast<wide>(dims[k]) * M;
    sum += dims[k];
  }
  auto ahead = [&](std::size_t a, std::size_t b) {
    // larger remainder, then larger component, then smaller id
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    if (manifest[a].param_count != manifest[b].param_count) return manifest[a].param_count > manifest[b].param_count;
    return manifest[a].id < manifest[b].id;
  };
  while (sum < total_dim) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (ahead(k, best)) best = k;
    }
    ++dims[best];
    rem[best] -= M;
    ++sum;
  }
  // Only reachable when the minimum of one unit overshoots the budget.
  while (sum > total_dim) {
    std::ptrdiff_t worst = -1;
    for (std::size_t k = 0; k < K; ++k) {
      if (dims[k] <= 1) continue;
      if (worst < 0 || ahead(static_cast<std::size_t>(worst), k)) worst = static_cast<std::ptrdiff_t>(k);
    }
    --dims[static_cast<std::size_t>(worst)];
    rem[static_cast<std::size_t>(worst)] += M;
    --sum;
  }
  return dims;
}

ProjectionConfig ProjectionConfig::make(const ComponentManifest& manifest, std::int64_t total_dim,
                                        std::uint64_t seed, ProjectionDistribution distribution) {
  ProjectionConfig c;
  c.total_dim = total_dim;
  c.per_component_dims = allocate_dims(manifest, total_dim);
  for (const auto& e : manifest.entries()) c.source_lengths.push_back(e.param_count);
  c.seed = seed;
  c.distribution = distribution;
  c.manifest_hash = manifest.hash();
  return c;
}

ProjectionConfig ProjectionConfig::from_fraction(const ComponentManifest& manifest, double fraction,
                                                 std::uint64_t seed, ProjectionDistribution distribution) {
  if (!(fraction > 0.0)) fail(ErrorCode::kInvalidArgument, "projection fraction must be positive");
  const auto d = static_cast<std::int64_t>(std::llround(fraction * static_cast<double>(manifest.total_params())));
  return make(manifest, std::max<std::int64_t>(d, static_cast<std::int64_t>(manifest.size())), seed, distribution);
}

void ProjectionConfig::validate() const {
  if (per_component_dims.size() != source_lengths.size() || per_component_dims.empty()) {
    fail(ErrorCode::kFormat, "projection config has inconsistent component counts");
  }
  std::int64_t sum = 0;
  for (auto d : per_component_dims) {
    if (d < 1) fail(ErrorCode::kFormat, "projection block dim must be >= 1");
    sum += d;
  }
  if (sum != total_dim) fail(ErrorCode::kFormat, "projection block dims do not sum to total_dim");
}

std::string ProjectionConfig::to_json() const {
  nlohmann::ordered_json j;
  j["total_dim"] = total_dim;
  j["per_component_dims"] = per_component_dims;
  j["source_lengths"] = source_lengths;
  j["seed"] = seed;
  j["distribution"] = distribution_name(distribution);
  j["manifest_hash"] = hash_to_hex(manifest_hash);
  j["scaling"] = "per_block_inv_sqrt_dim";
  return j.dump();
}

ProjectionConfig ProjectionConfig::from_json(const std::string& text) {
  ProjectionConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.total_dim = j.at("total_dim").get<std::int64_t>();
    c.per_component_dims = j.at("per_component_dims").get<std::vector<std::int64_t>>();
    c.source_lengths = j.at("source_lengths").get<std::vector<std::int64_t>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.distribution = parse_distribution(j.at("distribution").get<std::string>());
    c.manifest_hash = std::stoull(j.at("manifest_hash").get<std::string>(), nullptr, 16);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed projection config: ") + e.what());
  }
  c.validate();
  return c;
}

double projection_entry(const ProjectionConfig& config, std::size_t component, std::int64_t row, std::int64_t col) {
  if (config.distribution == ProjectionDistribution::kRademacher) {
    const std::uint64_t word = counter_hash(config.seed, component, static_cast<std::uint64_t>(row),
                                            static_cast<std::uint64_t>(col / 64), 0);
    return ((word >> (col % 64)) & 1U) ? 1.0 : -1.0;
  }
  return gaussian_entry(config.seed, component, row, col);
}

ProjectedRecord project_record(const GradientRecord& record, const ProjectionConfig& config) {
  ProjectedRecord out;
  project_group(std::span<const GradientRecord>(&record, 1), config, std::span<ProjectedRecord>(&out, 1));
  return out;
}

const ProjectedRecord& ProjectedSet::get(std::int64_t sample_id) const {
  auto it = index_.find(sample_id);
  if (it == index_.end()) fail(ErrorCode::kMissingRecord, "no projected record for sample " + std::to_string(sample_id));
  return records[it->second];
}

void ProjectedSet::build_index() {
  index_.clear();
  for (std::size_t i = 0; i < records.size(); ++i) index_.emplace(records[i].sample_id, i);
}

namespace {

nlohmann::json projected_header(const ProjectionConfig& config) {
  nlohmann::json h;
  h["content"] = "projected_gradients";
  h["dtype"] = "f32";
  h["projection"] = nlohmann::json::parse(config.to_json());
  return h;
}

}  // namespace

void write_projected_file(const ProjectedSet& set, const std::filesystem::path& path) {
  set.config.validate();
  BlockFileWriter writer(path, kProjectedMagic, projected_header(set.config), set.config.per_component_dims);
  for (const auto& r : set.records) {
    if (static_cast<std::int64_t>(r.vector.size()) != set.config.total_dim) {
      fail(ErrorCode::kManifestMismatch, "projected record length differs from total_dim");
    }
    std::vector<std::span<const float>> spans;
    std::size_t offset = 0;
    for (auto d : set.config.per_component_dims) {
      spans.emplace_back(r.vector.data() + offset, static_cast<std::size_t>(d));
      offset += static_cast<std::size_t>(d);
    }
    writer.append(r.sample_id, spans);
  }
  writer.finish();
}

ProjectedSet read_projected_file(const std::filesystem::path& path) {
  BlockFileReader reader(path, kProjectedMagic);
  ProjectedSet set;
  try {
    set.config = ProjectionConfig::from_json(reader.header().at("projection").dump());
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kFormat, path.string() + ": header lacks projection config");
  }
  if (set.config.per_component_dims != reader.block_lengths()) {
    fail(ErrorCode::kFormat, path.string() + ": block lengths disagree with projection config");
  }
  set.records.resize(reader.record_count());
  for (std::uint64_t r = 0; r < reader.record_count(); ++r) {
    auto& rec = set.records[r];
    rec.sample_id = reader.sample_id_at(r);
    rec.vector.resize(static_cast<std::size_t>(set.config.total_dim));
    std::size_t offset = 0;
    for (std::size_t k = 0; k < set.config.per_component_dims.size(); ++k) {
      const auto d = static_cast<std::size_t>(set.config.per_component_dims[k]);
      reader.read_block(r, k, std::span<float>(rec.vector.data() + offset, d));
      offset += d;
    }
  }
  set.build_index();
  return set;
}

void project_gradient_file(const std::filesystem::path& input, const ProjectionConfig& config,
                           const std::filesystem::path& output, std::size_t threads) {
  config.validate();
  GradientFileReader reader(input);
  if (reader.manifest().hash() != config.manifest_hash) {
    fail(ErrorCode::kManifestMismatch, "projection config built for a different manifest");
  }
  BlockFileWriter writer(output, kProjectedMagic, projected_header(config), config.per_component_dims);
  const std::size_t batch = std::max<std::size_t>(1, resolve_threads(threads)) * kLanes * 4;
  std::vector<GradientRecord> in;
  std::vector<ProjectedRecord> out;
  for (std::uint64_t start = 0; start < reader.record_count(); start += batch) {
    const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(batch, reader.record_count() - start));
    in.resize(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = reader.read_record(start + i);
    out.assign(n, {});
    const std::size_t groups = (n + kLanes - 1) / kLanes;
    parallel_for(groups, threads, [&](std::size_t g) {
      const std::size_t lo = g * kLanes, len = std::min(kLanes, n - lo);
      project_group(std::span<const GradientRecord>(in.data() + lo, len), config,
                    std::span<ProjectedRecord>(out.data() + lo, len));
    });
    for (const auto& r : out) {
      std::vector<std::span<const float>> spans;
      std::size_t offset = 0;
      for (auto d : config.per_component_dims) {
        spans.emplace_back(r.vector.data() + offset, static_cast<std::size_t>(d));
        offset += static_cast<std::size_t>(d);
      }
      writer.append(r.sample_id, spans);
    }
  }
  writer.finish();
}

ScoreTable projected_score_table(const ProjectedSet& queries, const ProjectedSet& candidates,
                                 const std::vector<CandidateSet>& cand_sets, const SimilarityParams& params) {
  params.validate();
  if (!(queries.config == candidates.config)) {
    fail(ErrorCode::kInvalidArgument, "query and candidate projections use different configs");
  }
  ScoreTable table;
  table.keys = candidate_pairs(cand_sets);
  table.scores.reserve(table.keys.size());
  for (const auto& key : table.keys) {
    const auto& a = queries.get(key.query_id).vector;
    const auto& b = candidates.get(key.cand_id).vector;
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a[i], y = b[i];
      dot += x * y;
      aa += x * x;
      bb += y * y;
    }
    table.scores.push_back(dot / (std::sqrt(aa) * std::sqrt(bb) + params.epsilon));
  }
  return table;
}

}  // namespace gradsel

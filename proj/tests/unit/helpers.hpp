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

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "gradsel/candidate_set.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/manifest.hpp"
#include "gradsel/toy/rng.hpp"

namespace gradsel::testing {

// Scratch directory removed when the fixture object goes away.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gradsel_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Flat 1-D components with the given lengths; the first is the embedding.
inline ComponentManifest flat_manifest(const std::vector<std::int64_t>& lengths) {
  std::vector<std::pair<ComponentId, std::vector<std::int64_t>>> shapes;
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    if (k == 0) {
      shapes.push_back({ComponentId::embedding(), {lengths[k]}});
    } else {
      const auto kind = kLayerKinds[(k - 1) % 7];
      shapes.push_back({{static_cast<int>((k - 1) / 7), kind}, {lengths[k]}});
    }
  }
  return ComponentManifest::from_shapes(shapes, "test");
}

inline GradientRecord random_record(const ComponentManifest& m, std::int64_t id, std::uint64_t seed) {
  toy::Rng rng(toy::derive_seed(seed, static_cast<std::uint64_t>(id)));
  GradientRecord r;
  r.sample_id = id;
  for (const auto& e : m.entries()) {
    std::vector<float> block(static_cast<std::size_t>(e.param_count));
    for (auto& v : block) v = static_cast<float>(rng.normal());
    r.blocks.push_back(std::move(block));
  }
  return r;
}

inline std::vector<GradientRecord> random_records(const ComponentManifest& m, std::size_t n, std::uint64_t seed) {
  std::vector<GradientRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_record(m, static_cast<std::int64_t>(i), seed));
  return out;
}

// Naive cosine over the concatenation of the selected blocks, 64-bit.
inline double direct_cosine(const GradientRecord& a, const GradientRecord& b, const std::vector<std::size_t>& subset,
                            double eps = 1e-12) {
  double num = 0, na = 0, nb = 0;
  std::vector<double> va, vb;
  for (std::size_t k : subset) {
    for (float x : a.blocks[k]) va.push_back(x);
    for (float x : b.blocks[k]) vb.push_back(x);
  }
  for (std::size_t i = 0; i < va.size(); ++i) {
    num += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  return num / (std::sqrt(na) * std::sqrt(nb) + eps);
}

// Query i's candidates: itself plus the next b-1 ids cyclically.
inline std::vector<CandidateSet> cyclic_sets(std::size_t n, std::size_t b) {
  std::vector<CandidateSet> sets;
  for (std::size_t i = 0; i < n; ++i) {
    CandidateSet s;
    s.query_id = static_cast<std::int64_t>(i);
    s.b = b;
    for (std::size_t j = 0; j < b; ++j) s.members.push_back(static_cast<std::int64_t>((i + j) % n));
    sets.push_back(std::move(s));
  }
  return sets;
}

}  // namespace gradsel::testing

#include "gradsel/dot_cache.hpp"
#include "gradsel/similarity.hpp"

namespace gradsel::testing {

// In-memory cache built straight from compute_pair_dots, independent of the
// file-streaming builder.
inline DotCache cache_from_records(const ComponentManifest& m, const std::vector<GradientRecord>& queries,
                                   const std::vector<GradientRecord>& cands, const std::vector<CandidateSet>& sets) {
  auto by_id = [](const std::vector<GradientRecord>& v, std::int64_t id) -> const GradientRecord& {
    for (const auto& r : v)
      if (r.sample_id == id) return r;
    throw std::runtime_error("missing record");
  };
  auto pairs = candidate_pairs(sets);
  std::vector<double> deltas;
  DotCache::SelfMap qs, cs;
  for (const auto& p : pairs) {
    const auto& q = by_id(queries, p.query_id);
    const auto& c = by_id(cands, p.cand_id);
    auto d = compute_pair_dots(q, c);
    deltas.insert(deltas.end(), d.begin(), d.end());
    qs[p.query_id] = compute_pair_dots(q, q);
    cs[p.cand_id] = compute_pair_dots(c, c);
  }
  return DotCache(m.hash(), m.size(), std::move(pairs), std::move(deltas), std::move(qs), std::move(cs));
}

}  // namespace gradsel::testing

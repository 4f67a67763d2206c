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

#include "gradsel/dot_cache.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "binary_io.hpp"
#include "gradsel/error.hpp"
#include "gradsel/parallel.hpp"

namespace gradsel {

DotCache::DotCache(std::uint64_t manifest_hash, std::size_t num_components, std::vector<PairKey> pairs,
                   std::vector<double> deltas, SelfMap query_self, SelfMap cand_self)
    : manifest_hash_(manifest_hash),
      num_components_(num_components),
      pairs_(std::move(pairs)),
      deltas_(std::move(deltas)),
      query_self_(std::move(query_self)),
      cand_self_(std::move(cand_self)) {
  if (deltas_.size() != pairs_.size() * num_components_) {
    fail(ErrorCode::kFormat, "dot cache rows do not match pair count");
  }
  auto check_self = [&](const SelfMap& m, const char* what) {
    for (const auto& [id, v] : m) {
      if (v.size() != num_components_) fail(ErrorCode::kFormat, std::string(what) + " row has wrong length");
      for (double x : v) {
        if (!(x >= 0.0)) fail(ErrorCode::kFormat, std::string(what) + " self-product is negative or NaN");
      }
    }
  };
  check_self(query_self_, "query");
  check_self(cand_self_, "candidate");
  index_.reserve(pairs_.size());
  for (std::size_t r = 0; r < pairs_.size(); ++r) {
    if (r > 0 && !(pairs_[r - 1] < pairs_[r])) fail(ErrorCode::kFormat, "dot cache pairs not strictly ascending");
    if (!query_self_.contains(pairs_[r].query_id) || !cand_self_.contains(pairs_[r].cand_id)) {
      fail(ErrorCode::kFormat, "dot cache lacks self-products for a stored pair");
    }
    index_.emplace(pairs_[r], r);
  }
}

std::size_t DotCache::row(const PairKey& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) {
    fail(ErrorCode::kMissingPair, "pair (" + std::to_string(key.query_id) + ", " +
                                      std::to_string(key.cand_id) + ") not in dot cache");
  }
  return it->second;
}

std::span<const double> DotCache::query_self(std::int64_t query_id) const {
  auto it = query_self_.find(query_id);
  if (it == query_self_.end()) fail(ErrorCode::kMissingPair, "no self-products for query " + std::to_string(query_id));
  return it->second;
}

std::span<const double> DotCache::cand_self(std::int64_t cand_id) const {
  auto it = cand_self_.find(cand_id);
  if (it == cand_self_.end()) fail(ErrorCode::kMissingPair, "no self-products for candidate " + std::to_string(cand_id));
  return it->second;
}

bool operator==(const DotCache& a, const DotCache& b) {
  return a.manifest_hash_ == b.manifest_hash_ && a.num_components_ == b.num_components_ &&
         a.pairs_ == b.pairs_ && a.deltas_ == b.deltas_ && a.query_self_ == b.query_self_ &&
         a.cand_self_ == b.cand_self_;
}

double block_dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return sum;
}

std::vector<double> compute_pair_dots(const GradientRecord& query, const GradientRecord& cand) {
  if (query.blocks.size() != cand.blocks.size()) {
    fail(ErrorCode::kManifestMismatch, "records have different component counts");
  }
  std::vector<double> out(query.blocks.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (query.blocks[k].size() != cand.blocks[k].size()) {
      fail(ErrorCode::kManifestMismatch, "block " + std::to_string(k) + " lengths differ");
    }
    out[k] = block_dot(query.blocks[k], cand.blocks[k]);
  }
  return out;
}

DotCache build_cache(const std::filesystem::path& queries, const std::filesystem::path& candidates,
                     const std::vector<CandidateSet>& cand_sets, const BuildCacheOptions& options) {
  GradientFileReader query_reader(queries);
  GradientFileReader cand_reader(candidates);
  const ComponentManifest& manifest = query_reader.manifest();
  if (manifest.hash() != cand_reader.manifest().hash()) {
    fail(ErrorCode::kManifestMismatch, "query and candidate gradient files use different manifests");
  }
  const std::size_t K = manifest.size();

  std::set<PairKey> pair_set;
  for (const auto& cs : cand_sets) {
    for (auto c : cs.members) pair_set.insert({cs.query_id, c});
  }
  std::vector<PairKey> pairs(pair_set.begin(), pair_set.end());

  // Resolve record positions up front so missing ids fail before any work.
  std::map<std::int64_t, std::uint64_t> query_pos, cand_pos;
  for (const auto& p : pairs) {
    if (!query_pos.contains(p.query_id)) {
      auto pos = query_reader.find(p.query_id);
      if (!pos) fail(ErrorCode::kMissingRecord, "no gradient for query " + std::to_string(p.query_id));
      query_pos[p.query_id] = *pos;
    }
    if (!cand_pos.contains(p.cand_id)) {
      auto pos = cand_reader.find(p.cand_id);
      if (!pos) fail(ErrorCode::kMissingRecord, "no gradient for candidate " + std::to_string(p.cand_id));
      cand_pos[p.cand_id] = *pos;
    }
  }

  // Candidate-major visiting order: candidates ascending by file position,
  // each followed by the rows of the pairs that reference it.
  struct Visit {
    std::int64_t cand_id;
    std::uint64_t cand_record;
    std::vector<std::size_t> rows;
  };
  std::map<std::uint64_t, Visit> by_record;
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const auto rec = cand_pos.at(pairs[r].cand_id);
    auto& v = by_record[rec];
    v.cand_id = pairs[r].cand_id;
    v.cand_record = rec;
    v.rows.push_back(r);
  }
  std::vector<std::int64_t> query_ids;
  for (const auto& [q, _] : query_pos) query_ids.push_back(q);
  std::vector<std::int64_t> cand_ids;
  for (const auto& [c, _] : cand_pos) cand_ids.push_back(c);

  std::vector<double> deltas(pairs.size() * K, 0.0);
  // [component][id index]
  std::vector<std::vector<double>> qself(K, std::vector<double>(query_ids.size()));
  std::vector<std::vector<double>> cself(K, std::vector<double>(cand_ids.size()));
  auto query_slot = [&](std::int64_t q) {
    return static_cast<std::size_t>(std::lower_bound(query_ids.begin(), query_ids.end(), q) - query_ids.begin());
  };
  auto cand_slot = [&](std::int64_t c) {
    return static_cast<std::size_t>(std::lower_bound(cand_ids.begin(), cand_ids.end(), c) - cand_ids.begin());
  };

  parallel_for(K, options.threads, [&](std::size_t k) {
    GradientFileReader qr(queries);
    GradientFileReader cr(candidates);
    const auto len = static_cast<std::size_t>(manifest[k].param_count);
    std::vector<float> cand_block(len), query_block(len);
    std::vector<char> query_done(query_ids.size(), 0);
    for (const auto& [rec, visit] : by_record) {
      cr.read_block(rec, k, cand_block);
      cself[k][cand_slot(visit.cand_id)] = block_dot(cand_block, cand_block);
      for (std::size_t r : visit.rows) {
        const auto q = pairs[r].query_id;
        qr.read_block(query_pos.at(q), k, query_block);
        deltas[r * K + k] = block_dot(query_block, cand_block);
        const auto slot = query_slot(q);
        if (!query_done[slot]) {
          qself[k][slot] = block_dot(query_block, query_block);
          query_done[slot] = 1;
        }
      }
    }
  });

  DotCache::SelfMap query_self, cand_self;
  for (std::size_t i = 0; i < query_ids.size(); ++i) {
    auto& row = query_self[query_ids[i]];
    row.resize(K);
    for (std::size_t k = 0; k < K; ++k) row[k] = qself[k][i];
  }
  for (std::size_t i = 0; i < cand_ids.size(); ++i) {
    auto& row = cand_self[cand_ids[i]];
    row.resize(K);
    for (std::size_t k = 0; k < K; ++k) row[k] = cself[k][i];
  }
  return DotCache(manifest.hash(), K, std::move(pairs), std::move(deltas), std::move(query_self),
                  std::move(cand_self));
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr std::uint32_t kDotCacheVersion = 1;

void put_self(std::ostream& out, const DotCache::SelfMap& m) {
  for (const auto& [id, row] : m) {
    detail::put<std::int64_t>(out, id);
    detail::put_array<double>(out, row);
  }
}

DotCache::SelfMap get_self(std::istream& in, std::uint64_t n, std::size_t K, const char* what) {
  DotCache::SelfMap m;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto id = detail::get<std::int64_t>(in, what);
    std::vector<double> row(K);
    detail::get_array<double>(in, std::span<double>(row), what);
    m.emplace(id, std::move(row));
  }
  return m;
}

}  // namespace

void save_cache(const DotCache& cache, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(kDotCacheMagic.data(), 4);
    detail::put<std::uint32_t>(out, kDotCacheVersion);
    detail::put<std::uint64_t>(out, cache.manifest_hash());
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(cache.num_components()));
    detail::put<std::uint64_t>(out, cache.num_pairs());
    detail::put<std::uint64_t>(out, cache.query_self_map().size());
    detail::put<std::uint64_t>(out, cache.cand_self_map().size());
    for (const auto& p : cache.pairs()) {
      detail::put<std::int64_t>(out, p.query_id);
      detail::put<std::int64_t>(out, p.cand_id);
    }
    detail::put_array<double>(out, cache.raw_deltas());
    put_self(out, cache.query_self_map());
    put_self(out, cache.cand_self_map());
    if (!out) fail(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

DotCache load_cache_unchecked(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4) fail(ErrorCode::kTruncated, path.string() + ": file shorter than magic");
  if (magic != kDotCacheMagic) fail(ErrorCode::kBadMagic, path.string() + ": bad magic (expected GSD1)");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kDotCacheVersion) {
    fail(ErrorCode::kUnsupportedVersion, path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto hash = detail::get<std::uint64_t>(in, "manifest hash");
  const auto K = detail::get<std::uint32_t>(in, "component count");
  const auto npairs = detail::get<std::uint64_t>(in, "pair count");
  const auto nq = detail::get<std::uint64_t>(in, "query count");
  const auto nc = detail::get<std::uint64_t>(in, "candidate count");
  const auto expected = 4 + 4 + 8 + 4 + 3 * 8 + npairs * (16 + 8ULL * K) + (nq + nc) * (8 + 8ULL * K);
  if (std::filesystem::file_size(path) < expected) fail(ErrorCode::kTruncated, path.string() + ": truncated cache");
  std::vector<PairKey> pairs(npairs);
  for (auto& p : pairs) {
    p.query_id = detail::get<std::int64_t>(in, "pair table");
    p.cand_id = detail::get<std::int64_t>(in, "pair table");
  }
  std::vector<double> deltas(npairs * K);
  detail::get_array<double>(in, std::span<double>(deltas), "dot rows");
  auto qs = get_self(in, nq, K, "query self-products");
  auto cs = get_self(in, nc, K, "candidate self-products");
  return DotCache(hash, K, std::move(pairs), std::move(deltas), std::move(qs), std::move(cs));
}

DotCache load_cache(const std::filesystem::path& path, const ComponentManifest& manifest) {
  DotCache cache = load_cache_unchecked(path);
  if (cache.manifest_hash() != manifest.hash() || cache.num_components() != manifest.size()) {
    fail(ErrorCode::kManifestMismatch, "cache built for different manifest (cache " +
                                           hash_to_hex(cache.manifest_hash()) + ", manifest " +
                                           manifest.hash_hex() + ")");
  }
  return cache;
}

}  // namespace gradsel

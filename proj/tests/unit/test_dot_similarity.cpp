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

#include <gtest/gtest.h>

#include <cmath>

#include "gradsel/dot_cache.hpp"
#include "gradsel/error.hpp"
#include "gradsel/similarity.hpp"
#include "gradsel/toy/corpus.hpp"
#include "gradsel/toy/model.hpp"
#include "helpers.hpp"

namespace gradsel {
namespace {

using testing::TempDir;

GradientRecord make(std::int64_t id, std::vector<std::vector<float>> blocks) {
  return GradientRecord{id, std::move(blocks)};
}

struct Fixture {
  TempDir dir;
  ComponentManifest manifest;
  std::vector<GradientRecord> queries, cands;
  std::vector<CandidateSet> sets;
  DotCache cache;

  Fixture(std::vector<std::int64_t> lengths, std::size_t n, std::size_t b, std::uint64_t seed = 5)
      : manifest(testing::flat_manifest(lengths)) {
    queries = testing::random_records(manifest, n, seed);
    cands = testing::random_records(manifest, n, seed + 1000);
    sets = testing::cyclic_sets(n, b);
    rebuild();
  }
  void rebuild() {
    write_gradient_file(manifest, queries, dir / "q.gsg");
    write_gradient_file(manifest, cands, dir / "c.gsg");
    cache = build_cache(dir / "q.gsg", dir / "c.gsg", sets);
  }
};

TEST(PairDots, HandComputed) {
  auto d = compute_pair_dots(make(0, {{1, 2}, {3}}), make(1, {{4, 5}, {6}}));
  EXPECT_EQ(d, (std::vector<double>{14.0, 18.0}));
}

TEST(PairDots, SelfIsSquaredNorm) {
  auto a = make(0, {{1, -2}, {3}, {0, 0, 0}});
  EXPECT_EQ(compute_pair_dots(a, a), (std::vector<double>{5.0, 9.0, 0.0}));
}

TEST(PairDots, OrthogonalAndSymmetric) {
  EXPECT_EQ(compute_pair_dots(make(0, {{1, 0}}), make(1, {{0, 1}})), (std::vector<double>{0.0}));
  auto m = testing::flat_manifest({17, 5});
  auto a = testing::random_record(m, 0, 1), b = testing::random_record(m, 1, 1);
  EXPECT_EQ(compute_pair_dots(a, b), compute_pair_dots(b, a));
}

TEST(PairDots, MismatchedBlocksRejected) {
  EXPECT_THROW(compute_pair_dots(make(0, {{1, 2}}), make(1, {{1}})), Error);
}

TEST(BuildCache, CountsPairs) {
  Fixture f({4, 3}, 3, 2);
  EXPECT_EQ(f.cache.num_pairs(), 6u);
  EXPECT_EQ(f.cache.num_components(), 2u);
  EXPECT_EQ(f.cache.manifest_hash(), f.manifest.hash());
  for (const auto& p : f.cache.pairs()) {
    auto q = f.cache.query_self(p.query_id);
    auto c = f.cache.cand_self(p.cand_id);
    for (double v : q) EXPECT_GE(v, 0.0);
    for (double v : c) EXPECT_GE(v, 0.0);
  }
}

TEST(BuildCache, MatchesPairDotsAndIsDeterministic) {
  Fixture f({9, 4, 11}, 8, 3);
  for (const auto& s : f.sets) {
    for (auto c : s.members) {
      auto expect = compute_pair_dots(f.queries[static_cast<std::size_t>(s.query_id)], f.cands[static_cast<std::size_t>(c)]);
      auto got = f.cache.pair_dots({s.query_id, c});
      EXPECT_TRUE(std::equal(got.begin(), got.end(), expect.begin()));
    }
  }
  auto again = build_cache(f.dir / "q.gsg", f.dir / "c.gsg", f.sets, {.threads = 3});
  EXPECT_TRUE(again == f.cache);
}

TEST(BuildCache, MissingRecordReported) {
  Fixture f({2}, 3, 2);
  auto sets = f.sets;
  sets[0].members.push_back(42);
  try {
    build_cache(f.dir / "q.gsg", f.dir / "c.gsg", sets);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingRecord);
  }
}

TEST(BuildCache, ToyGradientDecompositionSumsToFullDot) {
  toy::MicroModelConfig cfg{.layers = 1, .d_model = 8, .n_heads = 2, .d_ff = 12, .vocab = 256, .seed = 3};
  auto model = toy::MicroModel::initialize(cfg);
  auto samples = toy::generate_toy_corpus({.n_samples = 6, .seed = 1});
  std::vector<GradientRecord> recs;
  for (const auto& s : samples) recs.push_back(model.sample_gradient(s));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = 0; j < recs.size(); ++j) {
      auto d = compute_pair_dots(recs[i], recs[j]);
      double sum = 0;
      for (double v : d) sum += v;
      auto a = recs[i].concatenated(), b = recs[j].concatenated();
      long double direct = 0;
      for (std::size_t t = 0; t < a.size(); ++t) direct += static_cast<long double>(a[t]) * b[t];
      EXPECT_NEAR(sum, static_cast<double>(direct), 1e-9 * std::max(1.0, std::fabs(static_cast<double>(direct))));
    }
  }
}

TEST(CacheFile, RoundTrip) {
  Fixture f({3, 5}, 5, 3);
  save_cache(f.cache, f.dir / "c.gsd");
  auto back = load_cache(f.dir / "c.gsd", f.manifest);
  EXPECT_TRUE(back == f.cache);
}

TEST(CacheFile, WrongManifestRejected) {
  Fixture f({3, 5}, 5, 3);
  save_cache(f.cache, f.dir / "c.gsd");
  try {
    load_cache(f.dir / "c.gsd", testing::flat_manifest({5, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kManifestMismatch);
    EXPECT_NE(std::string(e.what()).find("different manifest"), std::string::npos);
  }
}

TEST(CacheFile, EmptyCacheRoundTrip) {
  TempDir dir;
  DotCache empty(7, 2, {}, {}, {}, {});
  save_cache(empty, dir / "e.gsd");
  auto back = load_cache_unchecked(dir / "e.gsd");
  EXPECT_EQ(back.num_pairs(), 0u);
  EXPECT_TRUE(back == empty);
}

TEST(CacheFile, BadMagic) {
  TempDir dir;
  {
    std::ofstream out(dir / "x.gsd", std::ios::binary);
    out << "NOPE and more bytes";
  }
  try {
    load_cache_unchecked(dir / "x.gsd");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadMagic);
  }
}

TEST(Reconstruct, EqualsDirectCosineOnEverySubset) {
  Fixture f({6, 2, 9, 4}, 6, 3);
  for (unsigned mask = 1; mask < 16; ++mask) {
    ComponentSubset s;
    for (std::size_t k = 0; k < 4; ++k)
      if (mask & (1u << k)) s.push_back(k);
    for (const auto& p : f.cache.pairs()) {
      double got = reconstruct_cosine(f.cache, p.query_id, p.cand_id, s);
      double want = testing::direct_cosine(f.queries[static_cast<std::size_t>(p.query_id)],
                                           f.cands[static_cast<std::size_t>(p.cand_id)], s);
      EXPECT_NEAR(got, want, 1e-9);
      EXPECT_LE(std::fabs(got), 1.0 + 1e-12);
    }
  }
}

TEST(Reconstruct, SelfSimilarityIsOne) {
  Fixture f({6, 3}, 4, 2);
  f.cands = f.queries;
  f.rebuild();
  for (std::int64_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(reconstruct_cosine(f.cache, i, i, all_components(2)), 1.0, 1e-9);
    EXPECT_NEAR(reconstruct_cosine(f.cache, i, i, ComponentSubset{1}), 1.0, 1e-9);
  }
}

TEST(Reconstruct, ZeroBlocksScoreZero) {
  Fixture f({3, 3}, 2, 2);
  for (auto* side : {&f.queries, &f.cands})
    for (auto& r : *side) std::fill(r.blocks[1].begin(), r.blocks[1].end(), 0.0f);
  f.rebuild();
  EXPECT_EQ(reconstruct_cosine(f.cache, 0, 1, ComponentSubset{1}), 0.0);
  EXPECT_TRUE(std::isfinite(reconstruct_cosine(f.cache, 0, 1, ComponentSubset{0, 1})));
}

TEST(Reconstruct, MissingPairThrows) {
  Fixture f({3}, 4, 2);
  try {
    reconstruct_cosine(f.cache, 0, 3, ComponentSubset{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingPair);
  }
}

TEST(Subset, NormalizationAndValidation) {
  const std::vector<std::size_t> raw = {3, 1, 3, 0};
  EXPECT_EQ(normalize_subset(raw, 4), (ComponentSubset{0, 1, 3}));
  EXPECT_THROW(normalize_subset(std::vector<std::size_t>{}, 4), Error);
  EXPECT_THROW(normalize_subset(std::vector<std::size_t>{4}, 4), Error);
  SimilarityParams bad{.epsilon = 0.0};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(ScoreTable, SinglePairAndFullTableConsistency) {
  Fixture f({4, 4}, 3, 1);
  auto t = score_table(f.cache, {f.sets[1]}, all_components(2));
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.scores[0], reconstruct_cosine(f.cache, 1, 1, all_components(2)));
  auto full = score_table(f.cache, f.sets, all_components(2));
  for (std::size_t r = 0; r < full.size(); ++r) {
    const auto& k = full.keys[r];
    EXPECT_NEAR(full.scores[r],
                testing::direct_cosine(f.queries[static_cast<std::size_t>(k.query_id)],
                                       f.cands[static_cast<std::size_t>(k.cand_id)], {0, 1}),
                1e-9);
  }
}

TEST(ScoreTable, NumeratorsAndNormsAdditiveOverDisjointSubsets) {
  Fixture f({5, 7, 3, 2}, 5, 3);
  const ComponentSubset s1 = {0, 2}, s2 = {1, 3};
  for (const auto& p : f.cache.pairs()) {
    auto d = f.cache.pair_dots(p);
    auto qs = f.cache.query_self(p.query_id);
    const double num1 = d[0] + d[2], num2 = d[1] + d[3];
    double num_all = 0, q_all = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      num_all += d[k];
      q_all += qs[k];
    }
    // Independent oracle: direct dot over concatenated blocks.
    const auto& a = f.queries[static_cast<std::size_t>(p.query_id)];
    const auto& b = f.cands[static_cast<std::size_t>(p.cand_id)];
    auto dot_of = [&](const ComponentSubset& s) {
      double acc = 0;
      for (auto k : s)
        for (std::size_t t = 0; t < a.blocks[k].size(); ++t) acc += static_cast<double>(a.blocks[k][t]) * b.blocks[k][t];
      return acc;
    };
    EXPECT_NEAR(num1 + num2, dot_of({0, 1, 2, 3}), 1e-9 * (1 + std::fabs(num_all)));
    EXPECT_NEAR(num1, dot_of(s1), 1e-12 * (1 + std::fabs(num1)));
    EXPECT_NEAR(q_all, (qs[0] + qs[2]) + (qs[1] + qs[3]), 1e-12 * q_all);
  }
  (void)s2;
}

TEST(ScoreTable, ScaleInvariance) {
  Fixture f({6, 5}, 5, 3);
  auto before = score_table(f.cache, f.sets, all_components(2));
  auto part = score_table(f.cache, f.sets, ComponentSubset{1});
  for (auto& blk : f.cands[2].blocks)
    for (auto& v : blk) v *= 4.0f;
  // Powers of two, so float storage adds no rounding of its own.
  for (auto& blk : f.queries[1].blocks)
    for (auto& v : blk) v *= 0.125f;
  f.rebuild();
  auto after = score_table(f.cache, f.sets, all_components(2));
  auto part_after = score_table(f.cache, f.sets, ComponentSubset{1});
  for (std::size_t r = 0; r < before.size(); ++r) {
    EXPECT_NEAR(after.scores[r], before.scores[r], 1e-9);
    EXPECT_NEAR(part_after.scores[r], part.scores[r], 1e-9);
  }
}

TEST(Alignment, SelfNegationAndHandCase) {
  ScoreTable a;
  a.keys = {{0, 0}, {0, 1}, {1, 1}};
  a.scores = {0.5, -0.2, 0.9};
  ScoreTable neg = a;
  for (auto& s : neg.scores) s = -s;
  ScoreTable b = a;
  b.scores = {0.4, 0.1, 0.8};
  EXPECT_NEAR(alignment(a, a), 1.0, 1e-15);
  EXPECT_NEAR(alignment(a, neg), -1.0, 1e-15);
  // Value from tests/oracles/alignment_oracle.py.
  EXPECT_NEAR(alignment(a, b), 0.9534625892455922, 1e-12);
  ScoreTable other = b;
  other.keys[2] = {2, 2};
  EXPECT_THROW(alignment(a, other), Error);
}

TEST(ScoreCsv, RoundTripExact) {
  Fixture f({4, 4}, 4, 2);
  auto t = score_table(f.cache, f.sets, ComponentSubset{0});
  write_score_csv(t, f.dir / "s.csv");
  auto back = read_score_csv(f.dir / "s.csv");
  EXPECT_EQ(back.keys, t.keys);
  EXPECT_EQ(back.scores, t.scores);
}

}  // namespace
}  // namespace gradsel

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
#include <numeric>

#include "gradsel/error.hpp"
#include "gradsel/projection.hpp"
#include "helpers.hpp"

namespace gradsel {
namespace {

double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

TEST(AllocateDims, HandCases) {
  EXPECT_EQ(allocate_dims(testing::flat_manifest({8, 8}), 10), (std::vector<std::int64_t>{5, 5}));
  EXPECT_EQ(allocate_dims(testing::flat_manifest({90, 10}), 10), (std::vector<std::int64_t>{9, 1}));
  // floor(5*7/10)=3, floor(5*2/10)=1, max(1, floor(0.5))=1 -> already sums to 5.
  EXPECT_EQ(allocate_dims(testing::flat_manifest({7, 2, 1}), 5), (std::vector<std::int64_t>{3, 1, 1}));
  // floors [3,3,3] leave 1 unit; equal remainders and sizes -> first in (layer, kind) order.
  EXPECT_EQ(allocate_dims(testing::flat_manifest({5, 5, 5}), 10), (std::vector<std::int64_t>{4, 3, 3}));
  // remainders 0.6 vs 0.4 -> the larger remainder gets the leftover.
  EXPECT_EQ(allocate_dims(testing::flat_manifest({3, 2}), 3), (std::vector<std::int64_t>{2, 1}));
  EXPECT_THROW(allocate_dims(testing::flat_manifest({3, 2}), 1), Error);
}

TEST(AllocateDims, InvariantsOnToyShapes) {
  auto m = testing::flat_manifest({8192, 1024, 1024, 1024, 1024, 2048, 2048, 2048});
  for (std::int64_t d : {8, 9, 100, 1000, 4097}) {
    auto dims = allocate_dims(m, d);
    EXPECT_EQ(std::accumulate(dims.begin(), dims.end(), std::int64_t{0}), d);
    for (auto v : dims) EXPECT_GE(v, 1);
  }
}

TEST(ProjectionConfig, FromFractionAndJson) {
  auto m = testing::flat_manifest({600, 400});
  auto cfg = ProjectionConfig::from_fraction(m, 0.01, 9);
  EXPECT_EQ(cfg.total_dim, 10);
  EXPECT_EQ(cfg.per_component_dims, (std::vector<std::int64_t>{6, 4}));
  EXPECT_EQ(ProjectionConfig::from_fraction(m, 1e-9, 9).total_dim, 2);  // at least one per component
  EXPECT_EQ(ProjectionConfig::from_json(cfg.to_json()), cfg);
}

TEST(Projection, EntriesAreRademacherAndReproducible) {
  auto m = testing::flat_manifest({100});
  auto cfg = ProjectionConfig::make(m, 10, 3);
  int plus = 0;
  for (std::int64_t r = 0; r < 10; ++r)
    for (std::int64_t c = 0; c < 100; ++c) {
      const double v = projection_entry(cfg, 0, r, c);
      ASSERT_TRUE(v == 1.0 || v == -1.0);
      plus += v > 0;
      EXPECT_EQ(v, projection_entry(cfg, 0, r, c));
    }
  EXPECT_NEAR(plus / 1000.0, 0.5, 0.06);
  auto other = ProjectionConfig::make(m, 10, 4);
  int same = 0;
  for (std::int64_t c = 0; c < 100; ++c) same += projection_entry(cfg, 0, 0, c) == projection_entry(other, 0, 0, c);
  EXPECT_LT(same, 80);
}

TEST(Projection, MatchesExplicitMatrix) {
  auto m = testing::flat_manifest({13, 7});
  for (auto dist : {ProjectionDistribution::kRademacher, ProjectionDistribution::kGaussian}) {
    auto cfg = ProjectionConfig::make(m, 6, 17, dist);
    auto rec = testing::random_record(m, 0, 5);
    auto p = project_record(rec, cfg);
    ASSERT_EQ(static_cast<std::int64_t>(p.vector.size()), cfg.total_dim);
    std::size_t out = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const auto dk = cfg.per_component_dims[k];
      for (std::int64_t r = 0; r < dk; ++r, ++out) {
        double acc = 0;
        for (std::size_t c = 0; c < rec.blocks[k].size(); ++c)
          acc += projection_entry(cfg, k, r, static_cast<std::int64_t>(c)) * rec.blocks[k][c];
        EXPECT_NEAR(p.vector[out], acc / std::sqrt(static_cast<double>(dk)), 1e-5 * (1 + std::fabs(acc)));
      }
    }
  }
}

TEST(Projection, ZeroAndLinearity) {
  auto m = testing::flat_manifest({40, 30});
  auto cfg = ProjectionConfig::make(m, 12, 1);
  auto a = testing::random_record(m, 0, 1), b = testing::random_record(m, 1, 1);
  GradientRecord zero = a, sum = a, scaled = a;
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t t = 0; t < a.blocks[k].size(); ++t) {
      zero.blocks[k][t] = 0;
      sum.blocks[k][t] = a.blocks[k][t] + b.blocks[k][t];
      scaled.blocks[k][t] = 2.0f * a.blocks[k][t];
    }
  for (float v : project_record(zero, cfg).vector) EXPECT_EQ(v, 0.0f);
  auto pa = project_record(a, cfg).vector, pb = project_record(b, cfg).vector, ps = project_record(sum, cfg).vector;
  auto p2 = project_record(scaled, cfg).vector;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_NEAR(ps[i], pa[i] + pb[i], 1e-5 * (1 + std::fabs(ps[i])));
    EXPECT_FLOAT_EQ(p2[i], 2 * pa[i]);
  }
}

TEST(Projection, BlockUnbiasedOverSeeds) {
  auto m = testing::flat_manifest({256});
  auto a = testing::random_record(m, 0, 71), b = testing::random_record(m, 1, 71);
  for (std::size_t t = 0; t < 256; ++t) b.blocks[0][t] += 0.5f * a.blocks[0][t];
  const double truth = dot(a.blocks[0], b.blocks[0]);
  for (auto dist : {ProjectionDistribution::kRademacher, ProjectionDistribution::kGaussian}) {
    std::vector<double> est;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto cfg = ProjectionConfig::make(m, 64, seed, dist);
      est.push_back(dot(project_record(a, cfg).vector, project_record(b, cfg).vector));
    }
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / 100.0;
    double var = 0;
    for (double e : est) var += (e - mean) * (e - mean);
    const double se = std::sqrt(var / 99.0 / 100.0);
    EXPECT_LT(std::fabs(mean - truth), 3 * se) << distribution_name(dist);
  }
}

TEST(Projection, ConcentrationForOrthogonalVectors) {
  // Two orthogonal 4096-dim vectors; projected cosine stays small.
  testing::TempDir dir;
  auto m = testing::flat_manifest({4096});
  GradientRecord a{0, {std::vector<float>(4096, 0.0f)}}, b{1, {std::vector<float>(4096, 0.0f)}};
  toy::Rng rng(5);
  for (std::size_t i = 0; i < 4096; i += 2) {
    a.blocks[0][i] = static_cast<float>(rng.normal());
    b.blocks[0][i + 1] = static_cast<float>(rng.normal());
  }
  write_gradient_file(m, std::vector<GradientRecord>{a, b}, dir / "g.gsg");
  int within = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    project_gradient_file(dir / "g.gsg", ProjectionConfig::make(m, 4096, seed), dir / "p.gsp");
    const auto set = read_projected_file(dir / "p.gsp");
    const auto& pa = set.records[0].vector;
    const auto& pb = set.records[1].vector;
    const double cos = dot(pa, pb) / std::sqrt(dot(pa, pa) * dot(pb, pb));
    within += std::fabs(cos) < 0.1;
  }
  EXPECT_GE(within, 198);
}

TEST(Projection, FileMatchesInMemoryAcrossThreads) {
  testing::TempDir dir;
  auto m = testing::flat_manifest({30, 20, 10});
  auto recs = testing::random_records(m, 21, 8);
  write_gradient_file(m, recs, dir / "g.gsg");
  auto cfg = ProjectionConfig::make(m, 9, 77);
  project_gradient_file(dir / "g.gsg", cfg, dir / "p1.gsp", 1);
  project_gradient_file(dir / "g.gsg", cfg, dir / "p4.gsp", 4);
  auto s1 = read_projected_file(dir / "p1.gsp");
  auto s4 = read_projected_file(dir / "p4.gsp");
  EXPECT_EQ(s1.config, cfg);
  ASSERT_EQ(s1.records.size(), recs.size());
  EXPECT_EQ(s1.records, s4.records);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(s1.records[i], project_record(recs[i], cfg));
  write_projected_file(s1, dir / "again.gsp");
  EXPECT_EQ(read_projected_file(dir / "again.gsp").records, s1.records);
}

TEST(Projection, ScoresSelfIsOneAndNearFullDimIsClose) {
  auto m = testing::flat_manifest({64, 32});
  auto q = testing::random_records(m, 10, 1);
  auto c = testing::random_records(m, 10, 2);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t t = 0; t < c[i].blocks[k].size(); ++t) c[i].blocks[k][t] += q[i].blocks[k][t];
  auto sets = testing::cyclic_sets(10, 3);
  auto cache = testing::cache_from_records(m, q, c, sets);
  auto truth = score_table(cache, sets, all_components(2));

  auto run = [&](std::int64_t d, const std::vector<GradientRecord>& cands) {
    auto cfg = ProjectionConfig::make(m, d, 123);
    ProjectedSet pq, pc;
    pq.config = pc.config = cfg;
    for (const auto& r : q) pq.records.push_back(project_record(r, cfg));
    for (const auto& r : cands) pc.records.push_back(project_record(r, cfg));
    pq.build_index();
    pc.build_index();
    return projected_score_table(pq, pc, sets);
  };
  auto self = run(8, q);
  for (std::size_t r = 0; r < self.size(); ++r)
    if (self.keys[r].query_id == self.keys[r].cand_id) EXPECT_NEAR(self.scores[r], 1.0, 1e-6);

  for (std::size_t r = 0; r < self.size(); ++r) EXPECT_LE(std::fabs(self.scores[r]), 1.0 + 1e-6);
  (void)truth;
}

TEST(Projection, NearFullDimensionTracksTrueCosine) {
  // Micro-model component sizes (M = 28672), projected to d = M.
  auto m = testing::flat_manifest({8192, 1024, 1024, 1024, 1024, 2048, 2048, 2048,
                                   1024, 1024, 1024, 1024, 2048, 2048, 2048});
  ASSERT_EQ(m.total_params(), 28672);
  const std::size_t n = 6;
  auto q = testing::random_records(m, n, 91);
  auto c = testing::random_records(m, n, 92);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m.size(); ++k)
      for (std::size_t t = 0; t < c[i].blocks[k].size(); ++t) c[i].blocks[k][t] += q[i].blocks[k][t];
  auto sets = testing::cyclic_sets(n, 3);
  auto truth = score_table(testing::cache_from_records(m, q, c, sets), sets, all_components(m.size()));
  auto cfg = ProjectionConfig::make(m, m.total_params(), 2024);
  ProjectedSet pq, pc;
    pq.config = pc.config = cfg;
  for (const auto& r : q) pq.records.push_back(project_record(r, cfg));
  for (const auto& r : c) pc.records.push_back(project_record(r, cfg));
  pq.build_index();
  pc.build_index();
  auto proj = projected_score_table(pq, pc, sets);
  ASSERT_EQ(proj.keys, truth.keys);
  for (std::size_t r = 0; r < proj.size(); ++r) EXPECT_NEAR(proj.scores[r], truth.scores[r], 0.01);
}

TEST(Projection, MismatchedConfigsRejected) {
  auto m = testing::flat_manifest({8});
  ProjectedSet a, b;
  a.config = ProjectionConfig::make(m, 4, 1);
  b.config = ProjectionConfig::make(m, 4, 2);
  a.build_index();
  b.build_index();
  EXPECT_THROW(projected_score_table(a, b, {}), Error);
}

}  // namespace
}  // namespace gradsel

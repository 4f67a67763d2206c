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

#include "gradsel/error.hpp"
#include "gradsel/selection.hpp"
#include "helpers.hpp"

namespace gradsel {
namespace {

// Every query i has candidates {i (true), n + i (distractor)}.
std::vector<CandidateSet> pair_sets(std::size_t n) {
  std::vector<CandidateSet> sets;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<std::int64_t>(i);
    sets.push_back({id, 2, {id, id + static_cast<std::int64_t>(n)}, false, std::nullopt});
  }
  return sets;
}

// Three 2-D components. A alone separates 7 of 10 queries; B and C alone
// separate none, together they separate all.
struct GreedyTrap {
  ComponentManifest m = testing::flat_manifest({2, 2, 2});
  std::vector<GradientRecord> q, c;
  std::vector<CandidateSet> sets = pair_sets(10);
  DotCache cache;

  GreedyTrap() {
    c.resize(20);
    for (int i = 0; i < 10; ++i) {
      const bool a_good = i < 7;
      q.push_back({i, {{1, 0}, {1, 0}, {1, 0}}});
      c[static_cast<std::size_t>(i)] = {i, {{a_good ? 1.f : 0.f, a_good ? 0.f : 1.f}, {1, 0.1f}, {1, 0.1f}}};
      c[static_cast<std::size_t>(10 + i)] = {10 + i, {{a_good ? 0.f : 1.f, a_good ? 1.f : 0.f}, {1, 0}, {10, 0}}};
    }
    cache = testing::cache_from_records(m, q, c, sets);
  }

  // Brute-force accuracy from the raw vectors.
  double brute(const ComponentSubset& s) const {
    int ok = 0;
    for (int i = 0; i < 10; ++i) {
      const double t = testing::direct_cosine(q[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(i)], s);
      const double d = testing::direct_cosine(q[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(10 + i)], s);
      ok += t > d;
    }
    return ok / 10.0;
  }
};

TEST(Accuracy, SeparableIsOne) {
  ScoreTable t;
  auto sets = pair_sets(3);
  for (std::int64_t i = 0; i < 3; ++i) {
    t.keys.push_back({i, i});
    t.keys.push_back({i, i + 3});
    t.scores.push_back(1.0);
    t.scores.push_back(-0.5);
  }
  EXPECT_EQ(retrieval_accuracy(t, sets), 1.0);
}

TEST(Accuracy, StrictTiesAreFailures) {
  ScoreTable t;
  auto sets = pair_sets(3);
  for (std::int64_t i = 0; i < 3; ++i) {
    t.keys.push_back({i, i});
    t.keys.push_back({i, i + 3});
    t.scores.push_back(0.3);
    t.scores.push_back(0.3);
  }
  EXPECT_EQ(retrieval_accuracy(t, sets), 0.0);
}

TEST(Accuracy, NoDistractorSucceeds) {
  ScoreTable t;
  t.keys = {{0, 0}};
  t.scores = {-1.0};
  std::vector<CandidateSet> sets = {{0, 1, {0}, false, std::nullopt}};
  EXPECT_EQ(retrieval_accuracy(t, sets), 1.0);
}

TEST(Sweep, SignalComponentReachesOne) {
  auto m = testing::flat_manifest({8, 8, 8});
  const std::size_t n = 30, b = 4;
  auto q = testing::random_records(m, n, 1);
  auto c = testing::random_records(m, n, 2);
  for (std::size_t i = 0; i < n; ++i) c[i].blocks[1] = q[i].blocks[1];  // true pair identical on component 1
  auto sets = testing::cyclic_sets(n, b);
  auto cache = testing::cache_from_records(m, q, c, sets);
  auto sweep = single_component_sweep(cache, m, sets);
  EXPECT_EQ(sweep.entries[1].value, 1.0);
  EXPECT_EQ(sweep.argmax().index, 1u);
  EXPECT_EQ(sweep.entries.size(), 3u);
}

TEST(Sweep, IidNoiseNearChance) {
  auto m = testing::flat_manifest({16, 16});
  const std::size_t n = 1000, b = 5;
  auto q = testing::random_records(m, n, 11);
  auto c = testing::random_records(m, n, 12);
  auto sets = testing::cyclic_sets(n, b);
  auto cache = testing::cache_from_records(m, q, c, sets);
  auto sweep = single_component_sweep(cache, m, sets);
  for (const auto& e : sweep.entries) EXPECT_NEAR(e.value, 0.2, 0.05);
}

TEST(Sweep, DominantComponentAlignsWithFull) {
  auto m = testing::flat_manifest({6, 6});
  auto q = testing::random_records(m, 20, 3);
  auto c = testing::random_records(m, 20, 4);
  for (auto* side : {&q, &c})
    for (auto& r : *side)
      for (auto& v : r.blocks[0]) v *= 100.0f;  // >99.9% of squared norm
  auto sets = testing::cyclic_sets(20, 5);
  auto cache = testing::cache_from_records(m, q, c, sets);
  SelectionOptions opt;
  opt.objective = Objective::kAlignment;
  auto sweep = single_component_sweep(cache, m, sets, opt);
  EXPECT_GT(sweep.entries[0].value, 0.99);
  EXPECT_LT(sweep.entries[1].value, sweep.entries[0].value);
}

TEST(Greedy, TrapOracleAgrees) {
  GreedyTrap t;
  // The cache path agrees with brute force on every subset.
  for (unsigned mask = 1; mask < 8; ++mask) {
    ComponentSubset s;
    for (std::size_t k = 0; k < 3; ++k)
      if (mask & (1u << k)) s.push_back(k);
    EXPECT_EQ(evaluate_subset(t.cache, t.sets, s), t.brute(s)) << mask;
  }
  EXPECT_EQ(t.brute({0}), 0.7);
  EXPECT_EQ(t.brute({1}), 0.0);
  EXPECT_EQ(t.brute({2}), 0.0);
  EXPECT_EQ(t.brute({1, 2}), 1.0);
}

TEST(Greedy, IsNotOptimalOnTrap) {
  GreedyTrap t;
  auto trace = greedy_select(t.cache, t.m, t.sets);
  ASSERT_EQ(trace.steps.size(), 3u);
  EXPECT_EQ(trace.steps[0].index, 0u);
  // Exhaustive best over two-component subsets.
  double best2 = 0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) best2 = std::max(best2, t.brute({a, b}));
  EXPECT_EQ(best2, 1.0);
  EXPECT_LT(trace.steps[1].objective_value, best2);
}

TEST(Greedy, FirstStepIsSweepArgmaxAndLastIsFull) {
  auto m = testing::flat_manifest({5, 9, 3, 7, 4, 6, 2, 8});
  auto q = testing::random_records(m, 40, 21);
  auto c = testing::random_records(m, 40, 22);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t k = 0; k < 8; ++k)
      for (std::size_t t = 0; t < c[i].blocks[k].size(); ++t)
        c[i].blocks[k][t] += static_cast<float>(0.3 * static_cast<double>(k)) * q[i].blocks[k][t];
  auto sets = testing::cyclic_sets(40, 5);
  auto cache = testing::cache_from_records(m, q, c, sets);
  for (auto objective : {Objective::kAccuracy, Objective::kAlignment}) {
    SelectionOptions opt;
    opt.objective = objective;
    auto sweep = single_component_sweep(cache, m, sets, opt);
    auto trace = greedy_select(cache, m, sets, opt);
    ASSERT_EQ(trace.steps.size(), 8u);
    EXPECT_EQ(trace.steps[0].component, sweep.argmax().component);
    EXPECT_EQ(trace.steps[0].objective_value, sweep.argmax().value);
    if (objective == Objective::kAccuracy) {
      EXPECT_EQ(trace.steps.back().objective_value, evaluate_subset(cache, sets, all_components(8)));
    } else {
      EXPECT_NEAR(trace.steps.back().objective_value, 1.0, 1e-12);
    }
    std::int64_t prev = 0;
    std::vector<bool> seen(8, false);
    for (const auto& s : trace.steps) {
      EXPECT_GT(s.cumulative_params, prev);
      prev = s.cumulative_params;
      EXPECT_FALSE(seen[s.index]);
      seen[s.index] = true;
    }
    EXPECT_DOUBLE_EQ(trace.steps.back().cumulative_param_fraction, 1.0);
  }
}

TEST(Greedy, DeterministicAcrossThreadsAndNoFileReads) {
  auto m = testing::flat_manifest({5, 9, 3, 7, 4});
  auto q = testing::random_records(m, 50, 31);
  auto c = testing::random_records(m, 50, 32);
  auto sets = testing::cyclic_sets(50, 5);
  auto cache = testing::cache_from_records(m, q, c, sets);
  const auto reads = block_file_reads();
  SelectionOptions one, many;
  one.threads = 1;
  many.threads = 4;
  auto a = greedy_select(cache, m, sets, one);
  auto b = greedy_select(cache, m, sets, many);
  EXPECT_EQ(block_file_reads(), reads);
  EXPECT_EQ(a, b);
}

TEST(Greedy, TiesGoToSmallestComponent) {
  // Identical components: every step is a tie and must follow manifest order.
  auto m = testing::flat_manifest({3, 3, 3});
  auto q = testing::random_records(m, 10, 41);
  auto c = testing::random_records(m, 10, 42);
  for (auto* side : {&q, &c})
    for (auto& r : *side) r.blocks[1] = r.blocks[2] = r.blocks[0];
  auto sets = testing::cyclic_sets(10, 3);
  auto trace = greedy_select(testing::cache_from_records(m, q, c, sets), m, sets);
  ASSERT_EQ(trace.steps.size(), 3u);
  EXPECT_EQ(trace.steps[0].index, 0u);
  EXPECT_EQ(trace.steps[1].index, 1u);
  EXPECT_EQ(trace.steps[2].index, 2u);
}

TEST(Greedy, Budgets) {
  auto m = testing::flat_manifest({50, 10, 20, 5});
  auto q = testing::random_records(m, 20, 51);
  auto c = testing::random_records(m, 20, 52);
  auto sets = testing::cyclic_sets(20, 4);
  auto cache = testing::cache_from_records(m, q, c, sets);
  auto two = greedy_select(cache, m, sets, {}, {.max_components = 2});
  EXPECT_EQ(two.steps.size(), 2u);
  auto small = greedy_select(cache, m, sets, {}, {.max_components = 0, .max_param_fraction = 0.4});
  for (const auto& s : small.steps) EXPECT_LE(s.cumulative_param_fraction, 0.4 + 1e-12);
  for (const auto& s : small.steps) EXPECT_NE(s.index, 0u);  // 50/85 never fits
  EXPECT_THROW(greedy_select(cache, m, sets, {}, {.max_components = 0, .max_param_fraction = 0.0}), Error);
}

TEST(Trace, BestPrefixAndJsonRoundTrip) {
  SelectionTrace t;
  t.objective = Objective::kAccuracy;
  const double vals[] = {0.5, 0.8, 0.8, 0.7};
  for (int i = 0; i < 4; ++i) {
    SelectionStep s;
    s.component = {0, kLayerKinds[static_cast<std::size_t>(i)]};
    s.index = static_cast<std::size_t>(i) + 1;
    s.objective_value = vals[i];
    s.cumulative_params = 10 * (i + 1);
    s.cumulative_param_fraction = 0.1 * (i + 1);
    t.steps.push_back(s);
  }
  EXPECT_EQ(t.best_prefix_length(), 2u);
  EXPECT_EQ(t.best_prefix_value(), 0.8);
  EXPECT_EQ(t.best_prefix_subset(), (ComponentSubset{1, 2}));
  EXPECT_EQ(trace_from_json(trace_to_json(t)), t);
  EXPECT_EQ(SelectionTrace{}.best_prefix_length(), 0u);
}

TEST(Objective, Names) {
  EXPECT_EQ(parse_objective(objective_name(Objective::kAlignment)), Objective::kAlignment);
  EXPECT_THROW(parse_objective("bogus"), Error);
}

}  // namespace
}  // namespace gradsel

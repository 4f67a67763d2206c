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

#include "gradsel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "gradsel/error.hpp"
#include "gradsel/evaluation.hpp"
#include "gradsel/parallel.hpp"

namespace gradsel {

std::string_view objective_name(Objective objective) {
  return objective == Objective::kAccuracy ? "accuracy" : "alignment";
}

Objective parse_objective(std::string_view name) {
  if (name == "accuracy") return Objective::kAccuracy;
  if (name == "alignment") return Objective::kAlignment;
  fail(ErrorCode::kInvalidArgument, "unknown objective '" + std::string(name) + "'");
}

std::size_t SelectionTrace::best_prefix_length() const {
  std::size_t best = 0;
  double value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].objective_value > value) {
      value = steps[i].objective_value;
      best = i + 1;
    }
  }
  return best;
}

double SelectionTrace::best_prefix_value() const {
  const auto n = best_prefix_length();
  return n == 0 ? 0.0 : steps[n - 1].objective_value;
}

ComponentSubset SelectionTrace::best_prefix_subset() const {
  ComponentSubset s;
  const auto n = best_prefix_length();
  for (std::size_t i = 0; i < n; ++i) s.push_back(steps[i].index);
  std::sort(s.begin(), s.end());
  return s;
}

void write_trace_csv(const SelectionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << "step,component,layer,kind,index,objective,objective_value,best_so_far,cumulative_params,"
         "cumulative_param_fraction\n";
  char buf[256];
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    std::snprintf(buf, sizeof(buf), "%zu,%s,%d,%s,%zu,%s,%.17g,%.17g,%lld,%.17g\n", i + 1,
                  to_string(s.component).c_str(), s.component.layer, std::string(kind_name(s.component.kind)).c_str(),
                  s.index, std::string(objective_name(trace.objective)).c_str(), s.objective_value, s.best_so_far,
                  static_cast<long long>(s.cumulative_params), s.cumulative_param_fraction);
    out << buf;
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::string trace_to_json(const SelectionTrace& trace) {
  nlohmann::ordered_json j;
  j["objective"] = objective_name(trace.objective);
  j["best_prefix_length"] = trace.best_prefix_length();
  j["best_prefix_value"] = trace.best_prefix_value();
  auto& steps = j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"component", to_string(s.component)},
                     {"index", s.index},
                     {"objective_value", s.objective_value},
                     {"best_so_far", s.best_so_far},
                     {"cumulative_params", s.cumulative_params},
                     {"cumulative_param_fraction", s.cumulative_param_fraction}});
  }
  return j.dump();
}

SelectionTrace trace_from_json(const std::string& text) {
  SelectionTrace trace;
  try {
    const auto j = nlohmann::json::parse(text);
    trace.objective = parse_objective(j.at("objective").get<std::string>());
    for (const auto& s : j.at("steps")) {
      SelectionStep step;
      auto id = parse_component_id(s.at("component").get<std::string>());
      if (!id) fail(ErrorCode::kFormat, "bad component name in trace");
      step.component = *id;
      step.index = s.at("index").get<std::size_t>();
      step.objective_value = s.at("objective_value").get<double>();
      step.best_so_far = s.at("best_so_far").get<double>();
      step.cumulative_params = s.at("cumulative_params").get<std::int64_t>();
      step.cumulative_param_fraction = s.at("cumulative_param_fraction").get<double>();
      trace.steps.push_back(step);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed trace JSON: ") + e.what());
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Retrieval accuracy

std::vector<bool> retrieval_decisions(const ScoreTable& table, const std::vector<CandidateSet>& cand_sets) {
  std::vector<bool> out;
  out.reserve(cand_sets.size());
  for (const auto& cs : cand_sets) {
    if (!cs.contains(cs.query_id)) {
      fail(ErrorCode::kInvalidArgument, "candidate set for query " + std::to_string(cs.query_id) +
                                            " lacks its counterpart");
    }
    const double truth = table.at({cs.query_id, cs.query_id});
    double best_other = -std::numeric_limits<double>::infinity();
    for (auto c : cs.members) {
      if (c != cs.query_id) best_other = std::max(best_other, table.at({cs.query_id, c}));
    }
    out.push_back(truth > best_other);
  }
  return out;
}

double retrieval_accuracy(const ScoreTable& table, const std::vector<CandidateSet>& cand_sets) {
  if (cand_sets.empty()) return 0.0;
  const auto d = retrieval_decisions(table, cand_sets);
  return static_cast<double>(std::count(d.begin(), d.end(), true)) / static_cast<double>(d.size());
}

double evaluate_subset(const DotCache& cache, const std::vector<CandidateSet>& cand_sets,
                       std::span<const std::size_t> subset, const SimilarityParams& params) {
  return retrieval_accuracy(score_table(cache, cand_sets, subset, params), cand_sets);
}

// ---------------------------------------------------------------------------
// Search over cached scalars

namespace {

// Dense, component-major copy of the cache restricted to the candidate pairs.
class SearchProblem {
 public:
  SearchProblem(const DotCache& cache, const ComponentManifest& manifest,
                const std::vector<CandidateSet>& cand_sets, const SelectionOptions& options)
      : cand_sets_(cand_sets), options_(options) {
    options_.similarity.validate();
    if (cache.num_components() != manifest.size() || cache.manifest_hash() != manifest.hash()) {
      fail(ErrorCode::kManifestMismatch, "cache built for different manifest");
    }
    if (cand_sets.empty() || cache.num_pairs() == 0) fail(ErrorCode::kInvalidArgument, "empty cache or candidate sets");
    K_ = manifest.size();
    keys_ = candidate_pairs(cand_sets);
    P_ = keys_.size();
    // keys_ is sorted by query first, so distinct query ids come out ascending.
    for (const auto& key : keys_) {
      if (query_ids_.empty() || query_ids_.back() != key.query_id) query_ids_.push_back(key.query_id);
    }
    Q_ = query_ids_.size();
    query_index_.resize(P_);
    delta_.resize(K_ * P_);
    cself_.resize(K_ * P_);
    qself_.resize(K_ * Q_);
    for (std::size_t p = 0; p < P_; ++p) {
      const auto dots = cache.pair_dots(keys_[p]);
      const auto cs = cache.cand_self(keys_[p].cand_id);
      query_index_[p] = query_slot(keys_[p].query_id);
      for (std::size_t k = 0; k < K_; ++k) {
        delta_[k * P_ + p] = dots[k];
        cself_[k * P_ + p] = cs[k];
      }
    }
    for (std::size_t q = 0; q < Q_; ++q) {
      const auto qs = cache.query_self(query_ids_[q]);
      for (std::size_t k = 0; k < K_; ++k) qself_[k * Q_ + q] = qs[k];
    }
    for (const auto& cs : cand_sets) {
      if (!cs.contains(cs.query_id)) {
        fail(ErrorCode::kInvalidArgument, "candidate set for query " + std::to_string(cs.query_id) +
                                              " lacks its counterpart");
      }
      Rows rows;
      rows.truth = pair_slot({cs.query_id, cs.query_id});
      for (auto c : cs.members) {
        if (c != cs.query_id) rows.others.push_back(pair_slot({cs.query_id, c}));
      }
      rows_.push_back(std::move(rows));
    }
    num_.assign(P_, 0.0);
    cn_.assign(P_, 0.0);
    qn_.assign(Q_, 0.0);
    if (options_.objective == Objective::kAlignment) {
      reference_ = score_table(cache, cand_sets, all_components(K_), options_.similarity).scores;
    }
  }

  std::size_t num_components() const { return K_; }

  // Scores for S + {k} given current accumulators; k == npos scores S itself.
  void scores_with(std::size_t k, std::vector<double>& out) const {
    out.resize(P_);
    const double eps = options_.similarity.epsilon;
    for (std::size_t p = 0; p < P_; ++p) {
      const std::size_t q = query_index_[p];
      double num = num_[p], cn = cn_[p], qn = qn_[q];
      if (k != kNone) {
        num += delta_[k * P_ + p];
        cn += cself_[k * P_ + p];
        qn += qself_[k * Q_ + q];
      }
      out[p] = num / (std::sqrt(qn) * std::sqrt(cn) + eps);
    }
  }

  double objective(const std::vector<double>& scores) const {
    if (options_.objective == Objective::kAccuracy) {
      std::size_t hits = 0;
      for (const auto& r : rows_) {
        double best_other = -std::numeric_limits<double>::infinity();
        for (auto p : r.others) best_other = std::max(best_other, scores[p]);
        if (scores[r.truth] > best_other) ++hits;
      }
      return static_cast<double>(hits) / static_cast<double>(rows_.size());
    }
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t p = 0; p < P_; ++p) {
      dot += scores[p] * reference_[p];
      aa += scores[p] * scores[p];
      bb += reference_[p] * reference_[p];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return dot / (std::sqrt(aa) * std::sqrt(bb));
  }

  double evaluate_with(std::size_t k) const {
    std::vector<double> scores;
    scores_with(k, scores);
    return objective(scores);
  }

  void commit(std::size_t k) {
    for (std::size_t p = 0; p < P_; ++p) {
      num_[p] += delta_[k * P_ + p];
      cn_[p] += cself_[k * P_ + p];
    }
    for (std::size_t q = 0; q < Q_; ++q) qn_[q] += qself_[k * Q_ + q];
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

 private:
  struct Rows {
    std::size_t truth = 0;
    std::vector<std::size_t> others;
  };

  std::size_t query_slot(std::int64_t q) const {
    return static_cast<std::size_t>(std::lower_bound(query_ids_.begin(), query_ids_.end(), q) - query_ids_.begin());
  }
  std::size_t pair_slot(const PairKey& key) const {
    auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
    return static_cast<std::size_t>(it - keys_.begin());
  }

  const std::vector<CandidateSet>& cand_sets_;
  SelectionOptions options_;
  std::size_t K_ = 0, P_ = 0, Q_ = 0;
  std::vector<PairKey> keys_;
  std::vector<std::int64_t> query_ids_;
  std::vector<std::size_t> query_index_;
  std::vector<double> delta_, cself_, qself_;
  std::vector<Rows> rows_;
  std::vector<double> num_, cn_, qn_;
  std::vector<double> reference_;
};

}  // namespace

const SweepEntry& SweepResult::argmax() const {
  if (entries.empty()) fail(ErrorCode::kInvalidArgument, "empty sweep");
  const SweepEntry* best = &entries.front();
  for (const auto& e : entries) {
    if (e.value > best->value || (e.value == best->value && e.component < best->component)) best = &e;
  }
  return *best;
}

SweepResult single_component_sweep(const DotCache& cache, const ComponentManifest& manifest,
                                   const std::vector<CandidateSet>& cand_sets, const SelectionOptions& options) {
  const SearchProblem problem(cache, manifest, cand_sets, options);
  SweepResult result;
  result.objective = options.objective;
  result.entries.resize(manifest.size());
  parallel_for(manifest.size(), options.threads, [&](std::size_t k) {
    result.entries[k] = {manifest[k].id, k, manifest[k].param_count, problem.evaluate_with(k)};
  });
  std::map<ComponentId, double> by_id;
  for (const auto& e : result.entries) by_id[e.component] = e.value;
  result.per_kind = per_kind_means(by_id);
  return result;
}

SelectionTrace greedy_select(const DotCache& cache, const ComponentManifest& manifest,
                             const std::vector<CandidateSet>& cand_sets, const SelectionOptions& options,
                             const SelectionBudget& budget) {
  SearchProblem problem(cache, manifest, cand_sets, options);
  const std::size_t K = manifest.size();
  const std::size_t max_steps = budget.max_components == 0 ? K : std::min(K, budget.max_components);
  if (max_steps == 0) fail(ErrorCode::kInvalidArgument, "greedy budget must allow at least one component");
  const double M = static_cast<double>(manifest.total_params());
  const auto param_limit = static_cast<std::int64_t>(std::floor(budget.max_param_fraction * M + 1e-9));

  // Remaining components in (layer, kind) order so a strict '>' scan breaks
  // ties toward the smallest id.
  std::vector<std::size_t> remaining(K);
  for (std::size_t k = 0; k < K; ++k) remaining[k] = k;
  std::sort(remaining.begin(), remaining.end(),
            [&](std::size_t a, std::size_t b) { return manifest[a].id < manifest[b].id; });

  SelectionTrace trace;
  trace.objective = options.objective;
  std::int64_t cumulative = 0;
  double best_so_far = -std::numeric_limits<double>::infinity();
  std::vector<double> values;
  while (trace.steps.size() < max_steps) {
    std::vector<std::size_t> feasible;
    for (auto k : remaining) {
      if (cumulative + manifest[k].param_count <= param_limit) feasible.push_back(k);
    }
    if (feasible.empty()) break;
    values.assign(feasible.size(), 0.0);
    parallel_for(feasible.size(), options.threads,
                 [&](std::size_t i) { values[i] = problem.evaluate_with(feasible[i]); });
    std::size_t best = 0;
    for (std::size_t i = 1; i < feasible.size(); ++i) {
      if (values[i] > values[best]) best = i;
    }
    const std::size_t chosen = feasible[best];
    problem.commit(chosen);
    remaining.erase(std::find(remaining.begin(), remaining.end(), chosen));
    cumulative += manifest[chosen].param_count;
    best_so_far = std::max(best_so_far, values[best]);
    trace.steps.push_back({manifest[chosen].id, chosen, values[best], best_so_far, cumulative,
                           static_cast<double>(cumulative) / M});
  }
  if (trace.steps.empty()) fail(ErrorCode::kInvalidArgument, "no component fits the parameter budget");
  return trace;
}

}  // namespace gradsel

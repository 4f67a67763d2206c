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

#include "gradsel/toy/benchmark.hpp"

#include <chrono>
#include <fstream>
#include <set>

#include "gradsel/dot_cache.hpp"
#include "gradsel/error.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/parallel.hpp"
#include "gradsel/projection.hpp"
#include "gradsel/selection.hpp"
#include "gradsel/similarity.hpp"
#include "gradsel/toy/corpus.hpp"
#include "gradsel/toy/rng.hpp"

namespace gradsel::toy {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using Timings = std::vector<std::pair<std::string, double>>;

constexpr std::size_t kGradientBatch = 64;

template <typename F>
double timed_stage(const std::string& name, F&& body) {
  const auto t0 = Clock::now();
  try {
    body();
  } catch (const Error& e) {
    throw Error(e.code(), "stage " + name + ": " + e.what());
  }
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

PerturbMode perturb_mode(CorpusRole role) {
  if (role == CorpusRole::kParaphrased) return PerturbMode::kParaphrased;
  if (role == CorpusRole::kModelGenerated) return PerturbMode::kModelGenerated;
  fail(ErrorCode::kInvalidArgument, "the base corpus is not a query setting");
}

}  // namespace

void BenchmarkConfig::validate() const {
  if (n_samples == 0) fail(ErrorCode::kInvalidArgument, "n_samples must be positive");
  if (b == 0 || b > n_samples) fail(ErrorCode::kInvalidArgument, "b must be in [1, n_samples]");
  if (train_steps < 0) fail(ErrorCode::kInvalidArgument, "train_steps must be nonnegative");
  if (!(learning_rate > 0.0)) fail(ErrorCode::kInvalidArgument, "learning_rate must be positive");
  if (batch_size == 0) fail(ErrorCode::kInvalidArgument, "batch_size must be positive");
  if (!(perturb_fraction >= 0.0 && perturb_fraction <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "perturb_fraction must be in [0, 1]");
  }
  if (settings.empty()) fail(ErrorCode::kInvalidArgument, "no settings requested");
  for (auto s : settings) perturb_mode(s);
  for (double f : projection_fractions) {
    if (!(f > 0.0 && f <= 1.0)) fail(ErrorCode::kInvalidArgument, "projection fractions must be in (0, 1]");
  }
  if (model.vocab < kVocabSize) fail(ErrorCode::kInvalidArgument, "the toy corpus needs a vocabulary of 256");
  model.validate();
  if (work_dir.empty()) fail(ErrorCode::kInvalidArgument, "work_dir is required");
}

nlohmann::ordered_json BenchmarkConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_samples"] = n_samples;
  j["b"] = b;
  j["seed"] = seed;
  j["model"] = nlohmann::ordered_json::parse(resolved_model_config(*this).to_json());
  j["train_steps"] = train_steps;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["perturb_fraction"] = perturb_fraction;
  auto& s = j["settings"] = nlohmann::ordered_json::array();
  for (auto r : settings) s.push_back(std::string(role_name(r)));
  j["projection_fractions"] = projection_fractions;
  j["noise_gradients"] = noise_gradients;
  j["run_sweep"] = run_sweep;
  j["run_alignment"] = run_alignment;
  return j;
}

std::uint64_t stream_seed(std::uint64_t master, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(master, h);
}

MicroModelConfig resolved_model_config(const BenchmarkConfig& config) {
  MicroModelConfig m = config.model;
  m.seed = stream_seed(config.seed, "model");
  return m;
}

void write_base_corpus(const BenchmarkConfig& config, const fs::path& out) {
  ToyCorpusOptions opts;
  opts.n_samples = config.n_samples;
  opts.seed = stream_seed(config.seed, "corpus");
  write_corpus(to_corpus(generate_toy_corpus(opts), CorpusRole::kBase), out);
}

TrainSummary train_checkpoint(const BenchmarkConfig& config, const fs::path& base_corpus, const fs::path& model_out) {
  const auto samples = from_corpus(read_corpus(base_corpus, CorpusRole::kBase));
  const MicroModelConfig mcfg = resolved_model_config(config);
  TrainOptions opts;
  opts.steps = config.train_steps;
  opts.learning_rate = config.learning_rate;
  opts.batch_size = config.batch_size;
  opts.threads = config.threads;
  TrainSummary summary;
  summary.loss_initial = mean_loss(MicroModel::initialize(mcfg), samples);
  const MicroModel model = train_micro_model(mcfg, samples, opts);
  summary.loss_final = mean_loss(model, samples);
  model.save(model_out);
  return summary;
}

void write_query_corpus(const BenchmarkConfig& config, CorpusRole role, const MicroModel* model,
                        const fs::path& base_corpus, const fs::path& out) {
  const auto base = from_corpus(read_corpus(base_corpus, CorpusRole::kBase));
  const auto perturbed = perturb_corpus(base, perturb_mode(role), model,
                                        stream_seed(config.seed, "perturb." + std::string(role_name(role))),
                                        config.perturb_fraction, config.threads);
  write_corpus(to_corpus(perturbed, role), out);
}

void extract_gradients(const fs::path& corpus, const ComponentManifest& manifest, const MicroModel* model,
                       std::uint64_t noise_seed, const fs::path& out, std::size_t threads) {
  if (model && !(model->manifest() == manifest)) {
    fail(ErrorCode::kManifestMismatch, "model does not match the requested manifest");
  }
  const auto samples = from_corpus(read_corpus(corpus, CorpusRole::kBase));
  GradientFileWriter writer(out, manifest);
  std::vector<GradientRecord> batch;
  for (std::size_t start = 0; start < samples.size(); start += kGradientBatch) {
    const std::size_t n = std::min(kGradientBatch, samples.size() - start);
    batch.assign(n, GradientRecord{});
    parallel_for(n, threads, [&](std::size_t i) {
      const auto& s = samples[start + i];
      batch[i] = model ? model->sample_gradient(s) : noise_gradient(manifest, s.sample_id, noise_seed);
    });
    for (const auto& r : batch) writer.append(r);
  }
  writer.finish();
}

std::vector<BenchmarkReport> run_benchmark(const BenchmarkConfig& config, const BenchmarkLog& log) {
  config.validate();
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  const fs::path dir = config.work_dir;
  fs::create_directories(dir);
  const MicroModelConfig mcfg = resolved_model_config(config);
  const ComponentManifest manifest = micro_manifest(mcfg);
  manifest.save_json(dir / "manifest.json");

  Timings shared;
  const fs::path base_corpus = dir / "corpus_base.jsonl";
  shared.emplace_back("corpus", timed_stage("corpus", [&] { write_base_corpus(config, base_corpus); }));
  say("corpus: " + std::to_string(config.n_samples) + " samples");

  bool needs_model = !config.noise_gradients;
  for (auto s : config.settings) needs_model = needs_model || s == CorpusRole::kModelGenerated;
  const fs::path model_path = dir / "model.gsm";
  TrainSummary trained;
  if (needs_model) {
    shared.emplace_back("train",
                        timed_stage("train", [&] { trained = train_checkpoint(config, base_corpus, model_path); }));
    say("train: loss " + std::to_string(trained.loss_initial) + " -> " + std::to_string(trained.loss_final));
  }

  std::optional<MicroModel> model;
  if (needs_model) model = MicroModel::load(model_path);
  const MicroModel* grad_model = config.noise_gradients ? nullptr : &*model;

  const fs::path base_grads = dir / "grads_base.gsg";
  const double base_grad_seconds = timed_stage("gradients", [&] {
    extract_gradients(base_corpus, manifest, grad_model, stream_seed(config.seed, "noise.base"), base_grads,
                      config.threads);
  });
  say("gradients: base set written");

  std::vector<BenchmarkReport> reports;
  std::set<std::size_t> projected_base;
  for (const CorpusRole role : config.settings) {
    const std::string name(role_name(role));
    BenchmarkReport report;
    report.setting = role;
    report.surrogate = "full";
    report.timings = shared;
    const fs::path query_corpus = dir / ("corpus_" + name + ".jsonl");
    const fs::path cands_path = dir / ("cands_" + name + ".json");
    const fs::path query_grads = dir / ("grads_" + name + ".gsg");
    const fs::path cache_path = dir / ("cache_" + name + ".gsd");

    report.timings.emplace_back("perturb", timed_stage("perturb", [&] {
      write_query_corpus(config, role, model ? &*model : nullptr, base_corpus, query_corpus);
    }));

    report.timings.emplace_back("candidates", timed_stage("candidates", [&] {
      const auto sets = build_candidate_sets(read_corpus(query_corpus, role), read_corpus(base_corpus, CorpusRole::kBase),
                                             config.b, {}, config.threads);
      save_candidate_sets(sets, cands_path);
    }));

    const double query_grad_seconds = timed_stage("gradients", [&] {
      extract_gradients(query_corpus, manifest, grad_model, stream_seed(config.seed, "noise." + name), query_grads,
                        config.threads);
    });
    report.timings.emplace_back("gradients", base_grad_seconds + query_grad_seconds);

    const auto cand_sets = load_candidate_sets(cands_path);
    report.cached = config.reuse_cache && fs::exists(cache_path);
    report.timings.emplace_back("dot_cache", timed_stage("dot_cache", [&] {
      if (report.cached) {
        (void)load_cache(cache_path, manifest);
        return;
      }
      save_cache(build_cache(query_grads, base_grads, cand_sets, {config.threads}), cache_path);
    }));
    report.timings.emplace_back("precompute", report.timing("gradients") + report.timing("dot_cache"));
    say(name + ": dot cache ready");

    const DotCache cache = load_cache(cache_path, manifest);
    const auto all = all_components(manifest.size());
    ScoreTable full_table;
    report.timings.emplace_back("full_eval", timed_stage("full_eval", [&] {
      full_table = score_table(cache, cand_sets, all);
      report.full_accuracy = retrieval_accuracy(full_table, cand_sets);
      report.accuracy = report.full_accuracy;
      write_score_csv(full_table, dir / ("scores_full_" + name + ".csv"));
    }));

    SelectionOptions sel;
    sel.threads = config.threads;
    report.timings.emplace_back("greedy", timed_stage("greedy", [&] {
      report.trace = greedy_select(cache, manifest, cand_sets, sel);
    }));
    write_trace_csv(*report.trace, dir / ("trace_accuracy_" + name + ".csv"));
    if (config.run_alignment) {
      sel.objective = Objective::kAlignment;
      report.timings.emplace_back("greedy_alignment", timed_stage("greedy_alignment", [&] {
        report.alignment_trace = greedy_select(cache, manifest, cand_sets, sel);
      }));
      write_trace_csv(*report.alignment_trace, dir / ("trace_alignment_" + name + ".csv"));
      sel.objective = Objective::kAccuracy;
    }
    if (config.run_sweep) {
      report.timings.emplace_back("sweep", timed_stage("sweep", [&] {
        report.per_component = single_component_sweep(cache, manifest, cand_sets, sel);
      }));
      write_sweep_csv(*report.per_component, dir / ("sweep_" + name + ".csv"));
    }
    say(name + ": full " + std::to_string(report.full_accuracy) + ", best greedy prefix " +
        std::to_string(report.trace->best_prefix_value()));

    if (!config.projection_fractions.empty()) {
      report.timings.emplace_back("projection", timed_stage("projection", [&] {
        for (std::size_t i = 0; i < config.projection_fractions.size(); ++i) {
          const double f = config.projection_fractions[i];
          const auto pc = ProjectionConfig::from_fraction(manifest, f, stream_seed(config.seed, "projection"));
          const fs::path pq = dir / "proj_query.gsp";
          const fs::path pb = dir / ("proj_base_" + std::to_string(i) + ".gsp");
          project_gradient_file(query_grads, pc, pq, config.threads);
          // The base-set projection is shared by all settings of this run.
          if (projected_base.insert(i).second) project_gradient_file(base_grads, pc, pb, config.threads);
          const auto table = projected_score_table(read_projected_file(pq), read_projected_file(pb), cand_sets);
          ProjectionResult r;
          r.param_fraction = f;
          r.total_dim = pc.total_dim;
          r.accuracy = retrieval_accuracy(table, cand_sets);
          r.alignment = alignment(table, full_table);
          report.projections.push_back(r);
          fs::remove(pq);
        }
      }));
    }

    auto& meta = report.metadata;
    meta["config"] = config.to_json();
    meta["manifest_hash"] = manifest.hash_hex();
    meta["total_params"] = manifest.total_params();
    meta["loss_normalization"] = "mean over completion tokens";
    meta["similarity_epsilon"] = SimilarityParams{}.epsilon;
    meta["bm25"] = {{"k1", Bm25Params{}.k1}, {"b", Bm25Params{}.b}};
    if (needs_model) {
      meta["train_loss_initial"] = trained.loss_initial;
      meta["train_loss_final"] = trained.loss_final;
    }
    meta["projection_seed"] = stream_seed(config.seed, "projection");

    std::ofstream(dir / ("report_" + name + ".json")) << report.to_json() << "\n";
    reports.push_back(std::move(report));
  }
  for (auto i : projected_base) fs::remove(dir / ("proj_base_" + std::to_string(i) + ".gsp"));
  return reports;
}

}  // namespace gradsel::toy

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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "gradsel/candidates.hpp"
#include "gradsel/evaluation.hpp"
#include "gradsel/toy/model.hpp"

namespace gradsel::toy {

struct BenchmarkConfig {
  std::size_t n_samples = 200;
  std::size_t b = 5;
  std::uint64_t seed = 0;
  MicroModelConfig model;  // model.seed is derived from `seed`
  int train_steps = 100;
  double learning_rate = 3e-3;
  std::size_t batch_size = 16;
  double perturb_fraction = 0.2;
  std::vector<CorpusRole> settings = {CorpusRole::kParaphrased, CorpusRole::kModelGenerated};
  std::vector<double> projection_fractions = {0.001, 0.005, 0.01, 0.05, 0.1};
  /// Replace every gradient with seeded iid noise (training is skipped).
  bool noise_gradients = false;
  bool run_sweep = true;
  bool run_alignment = true;
  /// Reuse a dot cache already present in the work directory.
  bool reuse_cache = false;
  std::size_t threads = 0;
  std::filesystem::path work_dir;

  void validate() const;
  /// Everything that determines the results (threads and paths excluded).
  nlohmann::ordered_json to_json() const;
};

using BenchmarkLog = std::function<void(const std::string&)>;

/// Seed for a named pipeline stream ("model", "perturb.paraphrased",
/// "noise.base", "projection", ...), derived from the master seed.
std::uint64_t stream_seed(std::uint64_t master, std::string_view stream);

/// The model config with its seed derived from the master seed.
MicroModelConfig resolved_model_config(const BenchmarkConfig& config);

// Stages shared by run_benchmark and the command-line tool.

void write_base_corpus(const BenchmarkConfig& config, const std::filesystem::path& out);

struct TrainSummary {
  double loss_initial = 0.0;
  double loss_final = 0.0;
};
TrainSummary train_checkpoint(const BenchmarkConfig& config, const std::filesystem::path& base_corpus,
                              const std::filesystem::path& model_out);

void write_query_corpus(const BenchmarkConfig& config, CorpusRole role, const MicroModel* model,
                        const std::filesystem::path& base_corpus, const std::filesystem::path& out);

/// One gradient record per corpus document, in corpus order. With a null
/// model the records are seeded noise.
void extract_gradients(const std::filesystem::path& corpus, const ComponentManifest& manifest,
                       const MicroModel* model, std::uint64_t noise_seed, const std::filesystem::path& out,
                       std::size_t threads = 0);

/// Runs corpus generation, training, perturbation, candidate retrieval,
/// gradient extraction, dot caching, and every surrogate evaluation for each
/// configured setting. Stages exchange data only through files in
/// `work_dir`. Stage failures are rethrown with the stage name prefixed.
std::vector<BenchmarkReport> run_benchmark(const BenchmarkConfig& config, const BenchmarkLog& log = {});

}  // namespace gradsel::toy

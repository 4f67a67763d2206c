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
#include <span>
#include <string>
#include <vector>

#include "gradsel/gradient_file.hpp"
#include "gradsel/manifest.hpp"

namespace gradsel::toy {

struct MicroModelConfig {
  int layers = 2;
  int d_model = 32;
  int n_heads = 2;
  int d_ff = 64;
  int vocab = 256;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static MicroModelConfig from_json(const std::string& text);

  friend bool operator==(const MicroModelConfig&, const MicroModelConfig&) = default;
};

/// One prompt/completion pair as token ids. The loss covers completion
/// tokens only.
struct ToySample {
  std::int64_t sample_id = 0;
  std::vector<int> prompt_tokens;
  std::vector<int> completion_tokens;

  friend bool operator==(const ToySample&, const ToySample&) = default;
};

/// Manifest for the micro model: the embedding, then per layer
/// Q, K, V, O, gate, up, down. Weights are [out, in] row-major.
ComponentManifest micro_manifest(const MicroModelConfig& config);

/// Decoder-only transformer: fixed sinusoidal positions, weightless RMS
/// pre-norm, causal multi-head attention, SiLU-gated MLP, output projection
/// tied to the embedding. No biases. All arithmetic in 64-bit.
class MicroModel {
 public:
  explicit MicroModel(MicroModelConfig config);

  /// Seeded initialization.
  static MicroModel initialize(const MicroModelConfig& config);

  const MicroModelConfig& config() const { return config_; }
  const ComponentManifest& manifest() const { return manifest_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<const double> component(std::size_t k) const;

  /// Mean next-token cross-entropy over completion positions.
  double loss(const ToySample& sample) const;
  /// Same, with an explicit per-position target/mask over the full
  /// sequence (targets[t] predicts position t + 1; mask selects terms).
  double loss(std::span<const int> tokens, std::span<const int> targets, std::span<const char> mask) const;

  /// Loss and its gradient; `grad` (size = total params) is overwritten.
  double loss_and_grad(const ToySample& sample, std::span<double> grad) const;

  GradientRecord sample_gradient(const ToySample& sample) const;

  std::vector<double> next_token_logits(std::span<const int> tokens) const;
  /// Argmax decoding (ties to the smallest id) until `eos` or `max_tokens`.
  std::vector<int> greedy_decode(std::span<const int> prompt, std::size_t max_tokens, int eos) const;

  void save(const std::filesystem::path& path) const;
  static MicroModel load(const std::filesystem::path& path);

  friend bool operator==(const MicroModel& a, const MicroModel& b) {
    return a.config_ == b.config_ && a.params_ == b.params_;
  }

 private:
  struct Workspace;
  void forward(std::span<const int> tokens, Workspace& ws) const;
  double run(std::span<const int> tokens, std::span<const int> targets, std::span<const char> mask,
             std::span<double> grad) const;

  MicroModelConfig config_;
  ComponentManifest manifest_;
  std::vector<double> params_;
};

struct TrainOptions {
  int steps = 300;
  double learning_rate = 3e-3;
  std::size_t batch_size = 16;
  std::size_t threads = 0;
  /// Called after each step with (step, mean batch loss).
  std::function<void(int, double)> on_step;
};

/// Adam on the mean per-sample loss of seeded mini-batches. Throws
/// kNumerical with the step index if the loss becomes non-finite.
MicroModel train_micro_model(const MicroModelConfig& config, const std::vector<ToySample>& corpus,
                             const TrainOptions& options);

/// Mean per-sample loss over a corpus.
double mean_loss(const MicroModel& model, const std::vector<ToySample>& corpus);

struct GradCheckResult {
  std::vector<double> max_rel_error;  // per component
  double overall_max = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares analytic gradients with central differences of loss(), step
/// h = 1e-5 * (1 + |w|), on `coords_per_component` seeded coordinates of
/// every component. Relative error is |g - fd| / max(|g|, |fd|, floor).
GradCheckResult check_gradients(const MicroModel& model, const ToySample& sample, std::size_t coords_per_component,
                                std::uint64_t seed, double floor = 1e-6);

}  // namespace gradsel::toy

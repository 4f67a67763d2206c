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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gradsel/candidates.hpp"
#include "gradsel/gradient_file.hpp"
#include "gradsel/manifest.hpp"
#include "gradsel/toy/model.hpp"

namespace gradsel::toy {

// Fixed 256-entry vocabulary. Ids 0-3 are special; every other id has a
// synonym partner (id ^ 1) with a different surface word.
inline constexpr int kVocabSize = 256;
inline constexpr int kUnk = 0;
inline constexpr int kUser = 1;
inline constexpr int kAssistant = 2;
inline constexpr int kEos = 3;

std::string_view token_word(int token);
/// Unknown words map to kUnk.
int word_token(std::string_view word);
/// Bijective synonym table; specials map to themselves.
int synonym(int token);
bool is_special(int token);

std::string join_words(std::span<const int> tokens);
std::vector<int> split_words(std::string_view text);

struct ToyCorpusOptions {
  std::size_t n_samples = 200;
  std::uint64_t seed = 0;
};

/// Template sentences over function words, entity concepts and rare
/// sample-specific tokens. Every concept is realized by a random choice of
/// its two surface forms. Ids are 0..N-1.
std::vector<ToySample> generate_toy_corpus(const ToyCorpusOptions& options);

/// Prompt tokens are [user] words [assistant]; the document prompt holds
/// only the words. Completion words include the end marker when present.
Document to_document(const ToySample& sample);
ToySample from_document(const Document& doc);
Corpus to_corpus(const std::vector<ToySample>& samples, CorpusRole role);
std::vector<ToySample> from_corpus(const Corpus& corpus);

enum class PerturbMode { kParaphrased, kModelGenerated };

/// Paraphrased: swaps round(fraction * eligible) seeded positions of prompt
/// and completion to their synonyms. ModelGenerated: the same swap on the
/// prompt only, then a greedy completion from `model` no longer than the
/// original one. `model` may be null for Paraphrased.
ToySample perturb_sample(const ToySample& sample, PerturbMode mode, const MicroModel* model, std::uint64_t seed,
                         double fraction = 0.2);

std::vector<ToySample> perturb_corpus(const std::vector<ToySample>& samples, PerturbMode mode,
                                      const MicroModel* model, std::uint64_t seed, double fraction = 0.2,
                                      std::size_t threads = 0);

/// iid standard normal blocks, seeded per (seed, sample_id).
GradientRecord noise_gradient(const ComponentManifest& manifest, std::int64_t sample_id, std::uint64_t seed);

}  // namespace gradsel::toy

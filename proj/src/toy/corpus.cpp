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

#include "gradsel/toy/corpus.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "gradsel/error.hpp"
#include "gradsel/parallel.hpp"
#include "gradsel/toy/rng.hpp"

namespace gradsel::toy {
namespace {

// Token id ranges. Each concept owns two adjacent ids (its surface forms).
constexpr int kFunctionBase = 4;
constexpr int kFunctionConcepts = 30;
constexpr int kEntityBase = 64;
constexpr int kEntityConcepts = 64;
constexpr int kRareBase = 192;
constexpr int kRareConcepts = 32;
static_assert(kFunctionBase + 2 * kFunctionConcepts == kEntityBase);
static_assert(kEntityBase + 2 * kEntityConcepts == kRareBase);
static_assert(kRareBase + 2 * kRareConcepts == kVocabSize);

struct Lexicon {
  std::array<std::string, kVocabSize> words;
  std::unordered_map<std::string, int> ids;

  Lexicon() {
    words[kUnk] = "<unk>";
    words[kUser] = "<|user|>";
    words[kAssistant] = "<|assistant|>";
    words[kEos] = "<eos>";
    // Pseudo-words from consonant-vowel syllables. a = 29 i mod 70 is a
    // permutation of residues and b is determined by (a, i / 70), so words
    // are distinct for every i < 280.
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    auto syllable = [](int s) {
      return std::string{kConsonants[static_cast<std::size_t>(s / 5)], kVowels[static_cast<std::size_t>(s % 5)]};
    };
    for (int i = 4; i < kVocabSize; ++i) {
      const int a = (i * 29) % 70;
      const int b = ((i / 70) * 19 + a) % 70;
      std::string w = syllable(a) + syllable(b);
      if (i >= kRareBase) w += "x";  // rare words get an unusual ending
      words[static_cast<std::size_t>(i)] = w;
    }
    for (int i = 0; i < kVocabSize; ++i) ids.emplace(words[static_cast<std::size_t>(i)], i);
  }
};

const Lexicon& lexicon() {
  static const Lexicon lex;
  return lex;
}

enum class Slot { kFixed, kFreeFunction, kE1, kE2, kX, kR1, kR2 };

struct SlotSpec {
  Slot slot;
  int concept_id = 0;  // for kFixed
};

struct Template {
  std::vector<SlotSpec> prompt;
  std::vector<SlotSpec> completion;
};

std::vector<SlotSpec> parse_slots(std::string_view text) {
  std::vector<SlotSpec> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    if (tok == "f?") out.push_back({Slot::kFreeFunction});
    else if (tok == "E1") out.push_back({Slot::kE1});
    else if (tok == "E2") out.push_back({Slot::kE2});
    else if (tok == "X") out.push_back({Slot::kX});
    else if (tok == "R1") out.push_back({Slot::kR1});
    else if (tok == "R2") out.push_back({Slot::kR2});
    else out.push_back({Slot::kFixed, std::stoi(tok.substr(1))});
  }
  return out;
}

const std::vector<Template>& templates() {
  static const std::vector<Template> t = [] {
    const std::array<std::pair<std::string_view, std::string_view>, 6> raw = {{
        {"f0 f1 E1 f2 E2 f3 f? R1", "f4 E2 f5 X f6 E1 R2"},
        {"f7 E2 f8 f? E1 f9 R1 f10", "X f11 E1 f12 R2 f13 E2"},
        {"f14 f15 R1 E1 f16 f? E2", "f17 X f18 R2 E2 f19 E1"},
        {"E1 f20 E2 f21 f22 R1 f?", "f23 E1 f24 X R2 f25"},
        {"f26 E1 E2 f27 R1 f? f28", "R2 f29 X f0 E2 f1 E1"},
        {"f2 f? E2 R1 f3 E1 f4 f?", "f5 E1 X f6 R2 f7 E2"},
    }};
    std::vector<Template> out;
    for (const auto& [p, c] : raw) out.push_back({parse_slots(p), parse_slots(c)});
    return out;
  }();
  return t;
}

}  // namespace

std::string_view token_word(int token) {
  if (token < 0 || token >= kVocabSize) fail(ErrorCode::kInvalidArgument, "token out of range");
  return lexicon().words[static_cast<std::size_t>(token)];
}

int word_token(std::string_view word) {
  const auto& ids = lexicon().ids;
  auto it = ids.find(std::string(word));
  return it == ids.end() ? kUnk : it->second;
}

bool is_special(int token) { return token >= 0 && token < kFunctionBase; }

int synonym(int token) {
  if (token < 0 || token >= kVocabSize) fail(ErrorCode::kInvalidArgument, "token out of range");
  return is_special(token) ? token : (token ^ 1);
}

std::string join_words(std::span<const int> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += token_word(tokens[i]);
  }
  return out;
}

std::vector<int> split_words(std::string_view text) {
  std::vector<int> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(word_token(w));
  return out;
}

std::vector<ToySample> generate_toy_corpus(const ToyCorpusOptions& options) {
  if (options.n_samples == 0) fail(ErrorCode::kInvalidArgument, "corpus size must be positive");
  Rng rng(derive_seed(options.seed, 0x636f72707573ULL));
  const auto& tpl = templates();
  std::vector<ToySample> out;
  out.reserve(options.n_samples);
  for (std::size_t i = 0; i < options.n_samples; ++i) {
    const auto& t = tpl[rng.below(tpl.size())];
    const int e1 = static_cast<int>(rng.below(kEntityConcepts));
    int e2 = static_cast<int>(rng.below(kEntityConcepts - 1));
    if (e2 >= e1) ++e2;
    const int x = (7 * e1 + 3 * e2 + 1) % kEntityConcepts;
    const int r1 = static_cast<int>(rng.below(kRareConcepts));
    const int r2 = (r1 + 7) % kRareConcepts;
    auto realize = [&](const std::vector<SlotSpec>& slots, std::vector<int>& dst) {
      for (const auto& s : slots) {
        int base = 0;
        switch (s.slot) {
          case Slot::kFixed: base = kFunctionBase + 2 * s.concept_id; break;
          case Slot::kFreeFunction:
            base = kFunctionBase + 2 * static_cast<int>(rng.below(kFunctionConcepts));
            break;
          case Slot::kE1: base = kEntityBase + 2 * e1; break;
          case Slot::kE2: base = kEntityBase + 2 * e2; break;
          case Slot::kX: base = kEntityBase + 2 * x; break;
          case Slot::kR1: base = kRareBase + 2 * r1; break;
          case Slot::kR2: base = kRareBase + 2 * r2; break;
        }
        dst.push_back(base + static_cast<int>(rng.below(2)));
      }
    };
    ToySample s;
    s.sample_id = static_cast<std::int64_t>(i);
    s.prompt_tokens.push_back(kUser);
    realize(t.prompt, s.prompt_tokens);
    s.prompt_tokens.push_back(kAssistant);
    realize(t.completion, s.completion_tokens);
    s.completion_tokens.push_back(kEos);
    out.push_back(std::move(s));
  }
  return out;
}

Document to_document(const ToySample& sample) {
  const auto& p = sample.prompt_tokens;
  if (p.size() < 2 || p.front() != kUser || p.back() != kAssistant) {
    fail(ErrorCode::kInvalidArgument, "prompt of sample " + std::to_string(sample.sample_id) +
                                          " is not wrapped in user/assistant markers");
  }
  Document d;
  d.sample_id = sample.sample_id;
  d.prompt = join_words(std::span<const int>(p).subspan(1, p.size() - 2));
  d.completion = join_words(sample.completion_tokens);
  return d;
}

ToySample from_document(const Document& doc) {
  ToySample s;
  s.sample_id = doc.sample_id;
  s.prompt_tokens.push_back(kUser);
  for (int t : split_words(doc.prompt)) s.prompt_tokens.push_back(t);
  s.prompt_tokens.push_back(kAssistant);
  s.completion_tokens = split_words(doc.completion);
  if (s.completion_tokens.empty()) {
    fail(ErrorCode::kFormat, "document " + std::to_string(doc.sample_id) + " has an empty completion");
  }
  return s;
}

Corpus to_corpus(const std::vector<ToySample>& samples, CorpusRole role) {
  Corpus c;
  c.role = role;
  c.docs.reserve(samples.size());
  for (const auto& s : samples) c.docs.push_back(to_document(s));
  return c;
}

std::vector<ToySample> from_corpus(const Corpus& corpus) {
  std::vector<ToySample> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus.docs) out.push_back(from_document(d));
  return out;
}

ToySample perturb_sample(const ToySample& sample, PerturbMode mode, const MicroModel* model, std::uint64_t seed,
                         double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorCode::kInvalidArgument, "perturbation fraction must be in [0, 1]");
  const bool generated = mode == PerturbMode::kModelGenerated;
  if (generated && model == nullptr) fail(ErrorCode::kInvalidArgument, "model-generated perturbation needs a model");
  ToySample out = sample;
  // Positions index the prompt then (paraphrase only) the completion.
  std::vector<std::size_t> eligible;
  const std::size_t np = out.prompt_tokens.size();
  for (std::size_t i = 0; i < np; ++i) {
    if (!is_special(out.prompt_tokens[i])) eligible.push_back(i);
  }
  if (!generated) {
    for (std::size_t i = 0; i < out.completion_tokens.size(); ++i) {
      if (!is_special(out.completion_tokens[i])) eligible.push_back(np + i);
    }
  }
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(eligible.size())));
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(sample.sample_id)));
  rng.shuffle(eligible);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t pos = eligible[j];
    int& tok = pos < np ? out.prompt_tokens[pos] : out.completion_tokens[pos - np];
    tok = synonym(tok);
  }
  if (generated) {
    out.completion_tokens = model->greedy_decode(out.prompt_tokens, sample.completion_tokens.size(), kEos);
  }
  return out;
}

std::vector<ToySample> perturb_corpus(const std::vector<ToySample>& samples, PerturbMode mode,
                                      const MicroModel* model, std::uint64_t seed, double fraction,
                                      std::size_t threads) {
  std::vector<ToySample> out(samples.size());
  parallel_for(samples.size(), threads,
               [&](std::size_t i) { out[i] = perturb_sample(samples[i], mode, model, seed, fraction); });
  return out;
}

GradientRecord noise_gradient(const ComponentManifest& manifest, std::int64_t sample_id, std::uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(sample_id)));
  GradientRecord r;
  r.sample_id = sample_id;
  r.blocks.resize(manifest.size());
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    r.blocks[k].resize(static_cast<std::size_t>(manifest[k].param_count));
    for (auto& v : r.blocks[k]) v = static_cast<float>(rng.normal());
  }
  return r;
}

}  // namespace gradsel::toy

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
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gradsel/candidate_set.hpp"

namespace gradsel {

enum class CorpusRole { kBase, kParaphrased, kModelGenerated };

std::string_view role_name(CorpusRole role);

struct Document {
  std::int64_t sample_id = 0;
  std::string prompt;
  std::string completion;

  std::string text() const { return prompt + "\n" + completion; }

  friend bool operator==(const Document&, const Document&) = default;
};

/// Ordered documents with dense ids 0..N-1.
struct Corpus {
  std::vector<Document> docs;
  CorpusRole role = CorpusRole::kBase;

  std::size_t size() const { return docs.size(); }
  /// Throws kFormat unless ids are exactly 0..N-1 in order.
  void validate() const;
};

/// Line-delimited JSON, one {"id", "prompt", "completion"} object per line.
Corpus read_corpus(const std::filesystem::path& path, CorpusRole role);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Unicode lowercase, split on runs of non-alphanumeric code points.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Okapi BM25 over an immutable in-memory inverted index.
class Bm25Index {
 public:
  explicit Bm25Index(const Corpus& corpus, Bm25Params params = {});

  std::size_t num_docs() const { return doc_len_.size(); }
  double avg_doc_len() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }

  /// Score of every document against `query`; query tokens count with
  /// multiplicity. An empty query gives all zeros.
  std::vector<double> scores(std::string_view query) const;

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };
  Bm25Params params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_len_;
  double avgdl_ = 0.0;
};

std::vector<double> bm25_scores(std::string_view query, const Corpus& corpus, Bm25Params params = {});

/// Top-b documents by score (ties by ascending id); if `query_id` is missing,
/// the lowest-ranked member is replaced by it.
CandidateSet build_candidate_set(std::int64_t query_id, std::string_view query_text, const Bm25Index& index,
                                 std::size_t b);
CandidateSet build_candidate_set(std::int64_t query_id, std::string_view query_text, const Corpus& base,
                                 std::size_t b, Bm25Params params = {});

/// One candidate set per query document; query i's counterpart is base doc i.
std::vector<CandidateSet> build_candidate_sets(const Corpus& queries, const Corpus& base, std::size_t b,
                                               Bm25Params params = {}, std::size_t threads = 0);

}  // namespace gradsel

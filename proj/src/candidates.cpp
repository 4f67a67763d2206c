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

#include "gradsel/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <locale>
#include <numeric>

#include <json.hpp>

#include "gradsel/error.hpp"
#include "gradsel/parallel.hpp"

namespace gradsel {
namespace {

const std::ctype<wchar_t>& unicode_ctype() {
  static const std::locale loc = [] {
    for (const char* name : {"C.UTF-8", "C.utf8", "en_US.UTF-8"}) {
      try {
        return std::locale(name);
      } catch (const std::runtime_error&) {
      }
    }
    return std::locale::classic();
  }();
  return std::use_facet<std::ctype<wchar_t>>(loc);
}

// Decodes one UTF-8 sequence; malformed input yields 0 (a separator).
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto c = static_cast<unsigned char>(s[i]);
  int extra = 0;
  char32_t cp = 0;
  if (c < 0x80) {
    ++i;
    return c;
  } else if ((c >> 5) == 0x6) {
    extra = 1;
    cp = c & 0x1f;
  } else if ((c >> 4) == 0xe) {
    extra = 2;
    cp = c & 0x0f;
  } else if ((c >> 3) == 0x1e) {
    extra = 3;
    cp = c & 0x07;
  } else {
    ++i;
    return 0;
  }
  if (i + extra >= s.size()) {
    i = s.size();
    return 0;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto cc = static_cast<unsigned char>(s[i + k]);
    if ((cc >> 6) != 0x2) {
      i += k;
      return 0;
    }
    cp = (cp << 6) | (cc & 0x3f);
  }
  i += extra + 1;
  return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

}  // namespace

std::string_view role_name(CorpusRole role) {
  switch (role) {
    case CorpusRole::kBase: return "base";
    case CorpusRole::kParaphrased: return "paraphrased";
    case CorpusRole::kModelGenerated: return "model_generated";
  }
  return "unknown";
}

void Corpus::validate() const {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].sample_id != static_cast<std::int64_t>(i)) {
      fail(ErrorCode::kFormat, "corpus ids must be dense 0..N-1 in order; position " + std::to_string(i) +
                                   " holds id " + std::to_string(docs[i].sample_id));
    }
  }
}

Corpus read_corpus(const std::filesystem::path& path, CorpusRole role) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open corpus " + path.string());
  Corpus corpus;
  corpus.role = role;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      corpus.docs.push_back({j.at("id").get<std::int64_t>(), j.at("prompt").get<std::string>(),
                             j.at("completion").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  corpus.validate();
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  for (const auto& d : corpus.docs) {
    nlohmann::ordered_json j;
    j["id"] = d.sample_id;
    j["prompt"] = d.prompt;
    j["completion"] = d.completion;
    out << j.dump() << '\n';
  }
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<std::string> tokenize(std::string_view text) {
  const auto& ct = unicode_ctype();
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = decode_utf8(text, i);
    const auto wc = static_cast<wchar_t>(cp);
    const bool alnum = cp != 0 && (cp < 0x80 ? std::isalnum(static_cast<char>(cp), std::locale::classic())
                                             : ct.is(std::ctype_base::alnum, wc));
    if (alnum) {
      encode_utf8(static_cast<char32_t>(ct.tolower(wc)), current);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Bm25Index::Bm25Index(const Corpus& corpus, Bm25Params params) : params_(params) {
  if (corpus.docs.empty()) fail(ErrorCode::kInvalidArgument, "BM25 corpus is empty");
  if (!(params.k1 >= 0.0)) fail(ErrorCode::kInvalidArgument, "BM25 k1 must be >= 0");
  if (!(params.b >= 0.0 && params.b <= 1.0)) fail(ErrorCode::kInvalidArgument, "BM25 b must lie in [0, 1]");
  doc_len_.reserve(corpus.docs.size());
  std::uint64_t total = 0;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    const auto toks = tokenize(corpus.docs[d].text());
    doc_len_.push_back(static_cast<std::uint32_t>(toks.size()));
    total += toks.size();
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : toks) ++tf[t];
    for (auto& [term, count] : tf) postings_[term].push_back({static_cast<std::uint32_t>(d), count});
  }
  avgdl_ = static_cast<double>(total) / static_cast<double>(doc_len_.size());
}

std::vector<double> Bm25Index::scores(std::string_view query) const {
  const double N = static_cast<double>(doc_len_.size());
  std::vector<double> out(doc_len_.size(), 0.0);
  for (const auto& term : tokenize(query)) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double idf = std::log((N - df + 0.5) / (df + 0.5) + 1.0);
    for (const auto& p : it->second) {
      const double tf = p.tf;
      const double norm = avgdl_ > 0.0 ? doc_len_[p.doc] / avgdl_ : 0.0;
      const double denom = tf + params_.k1 * (1.0 - params_.b + params_.b * norm);
      out[p.doc] += idf * tf * (params_.k1 + 1.0) / denom;
    }
  }
  return out;
}

std::vector<double> bm25_scores(std::string_view query, const Corpus& corpus, Bm25Params params) {
  return Bm25Index(corpus, params).scores(query);
}

CandidateSet build_candidate_set(std::int64_t query_id, std::string_view query_text, const Bm25Index& index,
                                 std::size_t b) {
  const std::size_t N = index.num_docs();
  if (b == 0) fail(ErrorCode::kInvalidArgument, "candidate set size b must be positive");
  if (b > N) fail(ErrorCode::kInvalidArgument, "b = " + std::to_string(b) + " exceeds corpus size " + std::to_string(N));
  if (query_id < 0 || static_cast<std::size_t>(query_id) >= N) {
    fail(ErrorCode::kInvalidArgument, "query id " + std::to_string(query_id) + " has no base counterpart");
  }
  const auto scores = index.scores(query_text);
  std::vector<std::int64_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(b), order.end(),
                    [&](std::int64_t x, std::int64_t y) {
                      if (scores[x] != scores[y]) return scores[x] > scores[y];
                      return x < y;
                    });
  CandidateSet cs;
  cs.query_id = query_id;
  cs.b = b;
  cs.members.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(b));
  if (!cs.contains(query_id)) {
    // The last ranked member has the minimum score, highest id among ties.
    cs.evicted = cs.members.back();
    cs.members.back() = query_id;
    cs.forced = true;
  }
  return cs;
}

CandidateSet build_candidate_set(std::int64_t query_id, std::string_view query_text, const Corpus& base,
                                 std::size_t b, Bm25Params params) {
  return build_candidate_set(query_id, query_text, Bm25Index(base, params), b);
}

std::vector<CandidateSet> build_candidate_sets(const Corpus& queries, const Corpus& base, std::size_t b,
                                               Bm25Params params, std::size_t threads) {
  if (queries.size() > base.size()) fail(ErrorCode::kInvalidArgument, "more queries than base documents");
  const Bm25Index index(base, params);
  std::vector<CandidateSet> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    out[i] = build_candidate_set(queries.docs[i].sample_id, queries.docs[i].text(), index, b);
  });
  return out;
}

// ---------------------------------------------------------------------------

bool CandidateSet::contains(std::int64_t id) const {
  return std::find(members.begin(), members.end(), id) != members.end();
}

void save_candidate_sets(const std::vector<CandidateSet>& sets, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "gradsel-candidates";
  j["version"] = 1;
  auto& arr = j["sets"] = nlohmann::ordered_json::array();
  for (const auto& cs : sets) {
    nlohmann::ordered_json e;
    e["query_id"] = cs.query_id;
    e["b"] = cs.b;
    e["members"] = cs.members;
    e["forced"] = cs.forced;
    if (cs.evicted) e["evicted"] = *cs.evicted;
    arr.push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
}

std::vector<CandidateSet> load_candidate_sets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<CandidateSet> sets;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& e : j.at("sets")) {
      CandidateSet cs;
      cs.query_id = e.at("query_id").get<std::int64_t>();
      cs.b = e.at("b").get<std::size_t>();
      cs.members = e.at("members").get<std::vector<std::int64_t>>();
      cs.forced = e.at("forced").get<bool>();
      if (e.contains("evicted")) cs.evicted = e["evicted"].get<std::int64_t>();
      if (cs.members.size() != cs.b || !cs.contains(cs.query_id)) {
        fail(ErrorCode::kFormat, "candidate set for query " + std::to_string(cs.query_id) + " violates |C|=b or self-inclusion");
      }
      sets.push_back(std::move(cs));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return sets;
}

}  // namespace gradsel

/*
 * Copyright 2026 The embedmatch Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "embedmatch/datasim.hpp"
#include "embedmatch/models.hpp"

namespace embedmatch {

struct IndexMetadata {
  std::string encoder_hash;
  std::string pooling;
  bool empty_query = false;
  bool operator==(const IndexMetadata&) const = default;
};

/// Dense document embeddings; row i belongs to doc_ids[i].
struct DocumentIndex {
  std::vector<std::string> doc_ids;
  Mat embeddings;  // N x k
  IndexMetadata meta;

  std::size_t size() const { return embeddings.rows(); }
  std::size_t dim() const { return embeddings.cols(); }
  bool operator==(const DocumentIndex&) const = default;
};

using DocEmbedder = std::function<Vec(std::size_t doc_index)>;

inline DocumentIndex build_index(const std::vector<std::string>& doc_ids, const DocEmbedder& embed,
                                 IndexMetadata meta = {}) {
  if (doc_ids.empty()) throw Error("build_index: empty corpus");
  DocumentIndex idx;
  idx.doc_ids = doc_ids;
  idx.meta = std::move(meta);
  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    Vec e;
    try {
      e = embed(i);
    } catch (const Error& err) {
      throw Error("build_index: failed to encode document " + doc_ids[i] + ": " + err.what());
    }
    if (i == 0) idx.embeddings = Mat(doc_ids.size(), e.size());
    if (e.size() != idx.dim()) throw Error("build_index: inconsistent embedding size");
    std::copy(e.begin(), e.end(), idx.embeddings.row(i).begin());
  }
  return idx;
}

/// Index from a dual-encoder document tower.
inline DocumentIndex build_index(const EncoderParams& doc_encoder,
                                 const std::vector<std::string>& doc_ids,
                                 const std::vector<TokenSequence>& docs,
                                 std::string encoder_hash = {}) {
  if (doc_ids.size() != docs.size()) throw Error("build_index: ids/docs length mismatch");
  return build_index(
      doc_ids, [&](std::size_t i) { return encode(doc_encoder, docs[i]); },
      {std::move(encoder_hash), std::string(to_string(doc_encoder.pooling)), false});
}

/// Index from a dual-pooled cross encoder fed an empty query with each document.
inline DocumentIndex build_index(const CEModel& ce, const std::vector<std::string>& doc_ids,
                                 const std::vector<TokenSequence>& docs, std::size_t max_len,
                                 std::string encoder_hash = {}) {
  if (!ce.is_dual()) throw Error("build_index: cross encoder must be dual-pooled");
  if (doc_ids.size() != docs.size()) throw Error("build_index: ids/docs length mismatch");
  const TokenSequence none;
  return build_index(
      doc_ids,
      [&](std::size_t i) { return ce_dual_pool(ce, none, docs[i], true, max_len).proxy_d; },
      {std::move(encoder_hash), std::string(to_string(std::get<DualPoolHead>(ce.head).kind)),
       true});
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

struct ScoredDoc {
  std::size_t doc = 0;  // row / corpus index
  double score = 0.0;
  bool operator==(const ScoredDoc&) const = default;
};

/// Scores non-increasing; ties broken by ascending doc index.
struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> items;
  bool operator==(const RankedList&) const = default;
};

inline bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc < b.doc;
}

/// Exact maximum-inner-product search.
inline RankedList top_k(const DocumentIndex& index, std::span<const double> q_emb, std::size_t k,
                        std::string query_id = {}) {
  if (k < 1) throw Error("top_k: k must be >= 1");
  if (q_emb.size() != index.dim()) {
    throw Error("dimension mismatch: query " + std::to_string(q_emb.size()) + " vs index " +
                std::to_string(index.dim()));
  }
  std::vector<ScoredDoc> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    all[i] = {i, dot(index.embeddings.row(i), q_emb)};
  }
  const std::size_t m = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(),
                    ranks_before);
  all.resize(m);
  return {std::move(query_id), std::move(all)};
}

/// Reorders candidate documents by `score(doc)`.
inline RankedList rerank(const std::vector<std::size_t>& candidates, std::size_t corpus_size,
                         const std::function<double(std::size_t)>& score,
                         std::string query_id = {}) {
  RankedList r{std::move(query_id), {}};
  std::set<std::size_t> seen;
  for (std::size_t d : candidates) {
    if (d >= corpus_size) throw Error("rerank: unknown candidate id " + std::to_string(d));
    if (!seen.insert(d).second) continue;
    r.items.push_back({d, score(d)});
  }
  std::sort(r.items.begin(), r.items.end(), ranks_before);
  return r;
}

/// Bag-of-words cosine ranking; the lexical first stage used for re-ranking
/// candidate lists and as a sanity baseline.
class BowRetriever {
 public:
  BowRetriever(const std::vector<std::string>& doc_texts) {
    for (const auto& t : doc_texts) docs_.push_back(bag(t));
  }

  RankedList search(const std::string& query_text, std::size_t k, std::string query_id = {}) const {
    const auto q = bag(query_text);
    std::vector<ScoredDoc> all(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) all[i] = {i, cosine(q, docs_[i])};
    const std::size_t m = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(),
                      ranks_before);
    all.resize(m);
    return {std::move(query_id), std::move(all)};
  }

 private:
  using Bag = std::map<std::string, double>;
  static Bag bag(const std::string& text) {
    Bag b;
    for (const auto& w : split_whitespace(text)) b[w] += 1.0;
    return b;
  }
  static double cosine(const Bag& a, const Bag& b) {
    double num = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [w, c] : a) {
      na += c * c;
      auto it = b.find(w);
      if (it != b.end()) num += c * it->second;
    }
    for (const auto& [w, c] : b) nb += c * c;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return num / std::sqrt(na * nb);
  }
  std::vector<Bag> docs_;
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Golden documents (and optional answer strings) per query id.
struct Judgments {
  std::map<std::string, std::set<std::size_t>> golden;
  std::map<std::string, std::vector<std::string>> answers;

  static Judgments from_corpus(const Corpus& c) {
    Judgments j;
    for (std::size_t i = 0; i < c.queries.size(); ++i) {
      j.golden[c.queries[i].id] = {c.golden[i].begin(), c.golden[i].end()};
      j.answers[c.queries[i].id] = c.queries[i].answers;
    }
    return j;
  }
};

namespace detail {
inline const std::set<std::size_t>& golden_for(const Judgments& j, const RankedList& r) {
  auto it = j.golden.find(r.query_id);
  if (it == j.golden.end()) throw Error("missing judgment for query " + r.query_id);
  return it->second;
}
}  // namespace detail

/// Fraction of queries with a golden document in the top k.
inline double recall_at_k(const std::vector<RankedList>& rankings, const Judgments& j,
                          std::size_t k) {
  if (rankings.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& r : rankings) {
    const auto& g = detail::golden_for(j, r);
    const std::size_t m = std::min(k, r.items.size());
    for (std::size_t i = 0; i < m; ++i) {
      if (g.count(r.items[i].doc)) {
        hits += 1.0;
        break;
      }
    }
  }
  return hits / static_cast<double>(rankings.size());
}

/// True if `answer` occurs in `text` as a whole-token substring.
inline bool contains_answer(const std::string& text, const std::string& answer) {
  if (answer.empty()) return false;
  const std::string hay = " " + text + " ";
  const std::string needle = " " + answer + " ";
  return hay.find(needle) != std::string::npos;
}

/// Fraction of queries whose answer string appears in any top-k document.
inline double relaxed_recall_at_k(const std::vector<RankedList>& rankings, const Judgments& j,
                                  const std::vector<std::string>& doc_texts, std::size_t k) {
  if (rankings.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& r : rankings) {
    auto it = j.answers.find(r.query_id);
    if (it == j.answers.end() || it->second.empty()) {
      throw Error("missing answers for query " + r.query_id);
    }
    const std::size_t m = std::min(k, r.items.size());
    bool hit = false;
    for (std::size_t i = 0; i < m && !hit; ++i) {
      const std::size_t d = r.items[i].doc;
      if (d >= doc_texts.size()) throw Error("ranked doc outside corpus");
      for (const auto& a : it->second) {
        if (contains_answer(doc_texts[d], a)) {
          hit = true;
          break;
        }
      }
    }
    if (hit) hits += 1.0;
  }
  return hits / static_cast<double>(rankings.size());
}

/// 100 x mean reciprocal rank of the first golden document within the top 10.
inline double mrr_at_10(const std::vector<RankedList>& rankings, const Judgments& j) {
  if (rankings.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : rankings) {
    const auto& g = detail::golden_for(j, r);
    const std::size_t m = std::min<std::size_t>(10, r.items.size());
    for (std::size_t i = 0; i < m; ++i) {
      if (g.count(r.items[i].doc)) {
        total += 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
  }
  return 100.0 * total / static_cast<double>(rankings.size());
}

/// 100 x nDCG@10 with binary gains.
inline double ndcg_at_10(const std::vector<RankedList>& rankings, const Judgments& j) {
  if (rankings.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : rankings) {
    const auto& g = detail::golden_for(j, r);
    if (g.empty()) throw Error("query " + r.query_id + " has no golden document");
    double dcg = 0.0;
    const std::size_t m = std::min<std::size_t>(10, r.items.size());
    for (std::size_t i = 0; i < m; ++i) {
      if (g.count(r.items[i].doc)) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    double ideal = 0.0;
    const std::size_t ng = std::min<std::size_t>(10, g.size());
    for (std::size_t i = 0; i < ng; ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    total += dcg / ideal;
  }
  return 100.0 * total / static_cast<double>(rankings.size());
}

}  // namespace embedmatch

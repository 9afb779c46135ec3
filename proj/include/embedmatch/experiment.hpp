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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embedmatch/bounds.hpp"
#include "embedmatch/distill.hpp"
#include "embedmatch/queryaug.hpp"
#include "embedmatch/retrieval.hpp"

namespace embedmatch {

using Metrics = std::map<std::string, double>;

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  std::vector<RankedList> rankings;
  Metrics metrics;
};

inline Metrics ranking_metrics(const std::vector<RankedList>& r, const Corpus& c) {
  const auto j = Judgments::from_corpus(c);
  std::vector<std::string> texts;
  for (const auto& d : c.docs) texts.push_back(d.text);
  Metrics m;
  for (std::size_t k : {1, 5, 20, 100}) {
    m["recall@" + std::to_string(k)] = 100.0 * recall_at_k(r, j, k);
  }
  for (std::size_t k : {5, 20}) {
    m["relaxed_recall@" + std::to_string(k)] = 100.0 * relaxed_recall_at_k(r, j, texts, k);
  }
  m["mrr@10"] = mrr_at_10(r, j);
  m["ndcg@10"] = ndcg_at_10(r, j);
  return m;
}

/// Full-corpus dense retrieval of the split's queries.
inline EvalResult eval_dense(const std::function<Vec(std::size_t)>& query_embedding,
                             const DocumentIndex& index, const Corpus& c,
                             const std::string& split = "eval", std::size_t depth = 100) {
  EvalResult out;
  for (std::size_t q : c.split_indices(split)) {
    out.rankings.push_back(top_k(index, query_embedding(q), depth, c.queries[q].id));
  }
  out.metrics = ranking_metrics(out.rankings, c);
  return out;
}

/// Lexical first-stage candidates per query of a split.
inline std::vector<std::vector<std::size_t>> first_stage_candidates(const Corpus& c,
                                                                    const std::string& split,
                                                                    std::size_t depth = 50) {
  std::vector<std::string> texts;
  for (const auto& d : c.docs) texts.push_back(d.text);
  BowRetriever bow(texts);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t q : c.split_indices(split)) {
    std::vector<std::size_t> cand;
    for (const auto& item : bow.search(c.queries[q].text, depth).items) cand.push_back(item.doc);
    out.push_back(std::move(cand));
  }
  return out;
}

/// Re-ranking of the first-stage candidates with `score(q, d)`.
inline EvalResult eval_rerank(const std::function<double(std::size_t, std::size_t)>& score,
                              const Corpus& c,
                              const std::vector<std::vector<std::size_t>>& candidates,
                              const std::string& split = "eval") {
  EvalResult out;
  const auto qs = c.split_indices(split);
  if (candidates.size() != qs.size()) throw Error("candidate lists do not match the split");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const std::size_t q = qs[i];
    out.rankings.push_back(rerank(candidates[i], c.docs.size(),
                                  [&](std::size_t d) { return score(q, d); }, c.queries[q].id));
  }
  out.metrics = ranking_metrics(out.rankings, c);
  return out;
}

inline std::vector<std::string> doc_ids(const Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& d : c.docs) ids.push_back(d.id);
  return ids;
}

/// Document index a student retrieves from: inherited, or built from its
/// own document tower.
inline DocumentIndex student_index(const Student& s, const TokenizedData& data, const Corpus& c,
                                   const DocumentIndex* inherited) {
  if (s.asymmetric()) {
    if (inherited == nullptr) throw Error("asymmetric student requires an inherited index");
    return *inherited;
  }
  return build_index(s.model.doc_encoder(), doc_ids(c), data.docs);
}

inline double student_score(const Student& s, const TokenizedData& data, const DocumentIndex& idx,
                            std::size_t q, std::size_t d) {
  const Vec e = s.scoring_query_embedding(data.queries[q]);
  return dot(e, idx.embeddings.row(d));
}

// ---------------------------------------------------------------------------
// Recipes (ablation rows)
// ---------------------------------------------------------------------------

struct Recipe {
  std::string name;
  StudentMode mode = StudentMode::Symmetric;
  LossWeights weights;
  bool use_teacher = true;
  bool querygen = false;
};

/// Student recipes for the ablation rows. `table1-*` and `table3-*` share
/// recipes (the tables differ in teacher and metric); `table5-*` targets a
/// dual-pooled cross-encoder teacher.
inline Recipe preset(const std::string& name) {
  Recipe r;
  r.name = name;
  auto& w = r.weights;
  std::string row = name;
  for (const char* prefix : {"table1-", "table3-", "table4-"}) {
    if (name.rfind(prefix, 0) == 0) row = name.substr(std::string(prefix).size());
  }
  if (row == "row1" || row == "direct") {
    w.score_distill = 0.0;
    r.use_teacher = false;
  } else if (row == "row2" || row == "distill") {
  } else if (row == "row3" || row == "inherit") {
    r.mode = StudentMode::AsymmetricInheritDocs;
  } else if (row == "row4" || row == "embed" || name == "table5-embed") {
    r.mode = StudentMode::AsymmetricInheritDocs;
    w.embed_q = 1.0;
  } else if (row == "row5" || row == "querygen") {
    r.mode = StudentMode::AsymmetricInheritDocs;
    w.embed_q = 1.0;
    r.querygen = true;
  } else if (row == "embed-only") {
    r.mode = StudentMode::AsymmetricInheritDocs;
    w.onehot = 0.0;
    w.score_distill = 0.0;
    w.embed_q = 1.0;
  } else if (row == "embed-only-querygen") {
    r.mode = StudentMode::AsymmetricInheritDocs;
    w.onehot = 0.0;
    w.score_distill = 0.0;
    w.embed_q = 1.0;
    r.querygen = true;
  } else if (name == "mini+querygen") {
    r.mode = StudentMode::AsymmetricInheritDocs;
    w.embed_q = 5.0;
    r.querygen = true;
  } else if (name == "table5-score-only") {
    r.mode = StudentMode::AsymmetricInheritDocs;
  } else {
    throw Error("unknown preset '" + name + "'");
  }
  return r;
}

inline std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const char* t : {"table1-", "table3-", "table4-"}) {
    for (const char* row : {"row1", "row2", "row3", "row4", "row5", "embed-only",
                            "embed-only-querygen"}) {
      out.push_back(std::string(t) + row);
    }
  }
  out.push_back("mini+querygen");
  out.push_back("table5-score-only");
  out.push_back("table5-embed");
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentConfig {
  std::size_t per_query = 2;
  double sigma = 0.1;
  double mask_prob = 0.1;
  AutoencoderConfig ae;
};

struct Augmentation {
  std::unordered_map<std::size_t, std::vector<TokenSequence>> queries;
  std::unordered_map<std::size_t, std::vector<Vec>> teacher_embs;
};

inline std::uint64_t generation_seed(std::uint64_t seed, std::size_t query) {
  return derive_seed(seed, "augmentation/" + std::to_string(query));
}

/// Generated neighbors for every query of `split`, with teacher embeddings
/// (a cross-encoder teacher pools them against the source's golden doc).
inline Augmentation build_augmentation(const AutoencoderParams& ae, const Teacher& teacher,
                                       const TokenizedData& data, const Corpus& c,
                                       const AugmentConfig& cfg, std::uint64_t seed,
                                       const std::string& split = "train") {
  Augmentation a;
  for (std::size_t q : c.split_indices(split)) {
    auto gen = generate_queries(ae, data.queries[q], cfg.per_query, cfg.sigma, cfg.mask_prob,
                                generation_seed(seed, q));
    std::vector<Vec> embs;
    for (const auto& g : gen) embs.push_back(teacher.query_embedding(g, c.golden[q].front()));
    a.queries.emplace(q, std::move(gen));
    a.teacher_embs.emplace(q, std::move(embs));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Alignment diagnostics
// ---------------------------------------------------------------------------

struct Alignment {
  double r_emb_q = 0.0;           // mean ||F(q) - proj(f(q))|| over the split
  double mean_abs_discrepancy = 0.0;
  std::vector<double> discrepancy;
};

inline Alignment query_alignment(const Teacher& teacher, const Student& s,
                                 const TokenizedData& data, const Corpus& c,
                                 const std::string& split = "eval") {
  std::vector<Vec> t, st;
  for (std::size_t q : c.split_indices(split)) {
    t.push_back(teacher.query_embedding(q, c.golden[q].front()));
    st.push_back(s.aligned_query_embedding(data.queries[q]));
  }
  Alignment a;
  for (std::size_t i = 0; i < t.size(); ++i) a.r_emb_q += distance(t[i], st[i]);
  a.r_emb_q /= static_cast<double>(t.size());
  a.discrepancy = pairwise_discrepancy(t, st);
  a.mean_abs_discrepancy = mean_abs(a.discrepancy);
  return a;
}

}  // namespace embedmatch

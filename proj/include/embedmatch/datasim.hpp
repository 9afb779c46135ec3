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

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "embedmatch/numerics.hpp"
#include "embedmatch/text.hpp"

namespace embedmatch {

struct Document {
  std::string id;
  std::string text;
  int topic = -1;
  bool operator==(const Document&) const = default;
};

struct Query {
  std::string id;
  std::string text;
  std::vector<std::string> answers;
  int topic = -1;
  std::string split = "train";  // "train" or "eval"
  bool operator==(const Query&) const = default;
};

/// Documents, queries and their golden documents (indices into `docs`).
struct Corpus {
  std::vector<Document> docs;
  std::vector<Query> queries;
  std::vector<std::vector<std::size_t>> golden;  // per query

  std::vector<std::size_t> split_indices(std::string_view split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (queries[i].split == split) out.push_back(i);
    }
    return out;
  }

  std::vector<std::string> all_texts() const {
    std::vector<std::string> t;
    for (const auto& d : docs) t.push_back(d.text);
    for (const auto& q : queries) t.push_back(q.text);
    return t;
  }

  bool operator==(const Corpus&) const = default;
};

/// (query, L documents, L binary labels); indices refer to a Corpus.
struct TrainingExample {
  std::size_t query = 0;
  std::vector<std::size_t> docs;
  std::vector<int> labels;
  bool operator==(const TrainingExample&) const = default;
};

struct Dataset {
  Corpus corpus;
  std::vector<TrainingExample> examples;
  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// Topic model and generator
// ---------------------------------------------------------------------------

struct TopicModel {
  std::vector<std::string> words;              // shared vocabulary (no specials)
  std::vector<std::vector<double>> word_probs; // per topic, sums to 1
  std::vector<std::size_t> keyword;            // per topic, index into words
};

struct CorpusSpec {
  std::size_t topics = 8;
  std::size_t docs_per_topic = 50;
  std::size_t queries_per_topic = 63;
  std::size_t vocab_size = 400;  // including the reserved special ids
  std::size_t doc_len = 12;
  std::size_t query_len = 5;
  double topic_mass = 0.75;     // probability a token comes from the topic's own words
  double query_overlap = 0.6;   // probability a query token is copied from its golden doc
  std::size_t eval_queries = 100;
  /// Extra queries per topic in a "pretrain" split, used only to train
  /// teachers; train/eval queries do not depend on this count.
  std::size_t pretrain_queries_per_topic = 0;
  std::uint64_t seed = 0;
};

inline TopicModel make_topic_model(const CorpusSpec& spec) {
  const std::size_t reserved = static_cast<std::size_t>(special::kNumReserved);
  if (spec.topics < 1 || spec.docs_per_topic < 1 || spec.queries_per_topic < 1 ||
      spec.doc_len < 2 || spec.query_len < 1) {
    throw Error("corpus sizes must be >= 1 (doc_len >= 2)");
  }
  if (spec.vocab_size <= spec.topics + reserved) {
    throw Error("vocab_size must exceed topics + reserved ids");
  }
  const std::size_t free_words = spec.vocab_size - reserved - spec.topics;
  const std::size_t background = free_words / 4;
  const std::size_t per_topic = (free_words - background) / spec.topics;
  if (per_topic < 1 || background < 1) throw Error("vocab_size too small for topic count");
  TopicModel m;
  for (std::size_t t = 0; t < spec.topics; ++t) m.words.push_back("key" + std::to_string(t));
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t j = 0; j < per_topic; ++j) {
      m.words.push_back("t" + std::to_string(t) + "w" + std::to_string(j));
    }
  }
  const std::size_t bg_begin = m.words.size();
  for (std::size_t j = 0; j < background; ++j) m.words.push_back("bg" + std::to_string(j));
  for (std::size_t t = 0; t < spec.topics; ++t) {
    std::vector<double> p(m.words.size(), 0.0);
    const std::size_t begin = spec.topics + t * per_topic;
    for (std::size_t j = 0; j < per_topic; ++j) {
      p[begin + j] = spec.topic_mass / static_cast<double>(per_topic);
    }
    for (std::size_t j = 0; j < background; ++j) {
      p[bg_begin + j] = (1.0 - spec.topic_mass) / static_cast<double>(background);
    }
    m.word_probs.push_back(std::move(p));
    m.keyword.push_back(t);
  }
  return m;
}

namespace detail {
inline std::size_t sample_index(const std::vector<double>& p, Rng& rng) {
  double u = rng.uniform();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (u < p[i]) return i;
    u -= p[i];
  }
  for (std::size_t i = p.size(); i-- > 0;) {
    if (p[i] > 0) return i;
  }
  return 0;
}

inline std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s.push_back(' ');
    s += w;
  }
  return s;
}

inline std::string padded_id(char prefix, std::size_t i) {
  std::string n = std::to_string(i);
  return std::string(1, prefix) + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
}
}  // namespace detail

/// Synthetic corpus: documents carry their topic keyword plus topic/background
/// words; each query is written against one golden document of its topic,
/// copying some of its words and drawing the rest from the topic. The last
/// `eval_queries` queries (after a seeded shuffle) form the eval split.
inline Corpus generate_corpus(const CorpusSpec& spec) {
  const TopicModel tm = make_topic_model(spec);
  Rng rng(derive_seed(spec.seed, "corpus"));
  Corpus c;
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t i = 0; i < spec.docs_per_topic; ++i) {
      std::vector<std::string> words;
      const std::size_t key_pos = rng.below(spec.doc_len);
      for (std::size_t j = 0; j < spec.doc_len; ++j) {
        words.push_back(j == key_pos ? tm.words[tm.keyword[t]]
                                     : tm.words[detail::sample_index(tm.word_probs[t], rng)]);
      }
      c.docs.push_back({detail::padded_id('d', c.docs.size()), detail::join(words),
                        static_cast<int>(t)});
    }
  }
  auto make_query = [&](std::size_t t, Rng& r) {
    const std::size_t g = t * spec.docs_per_topic + r.below(spec.docs_per_topic);
    const auto doc_words = split_whitespace(c.docs[g].text);
    std::vector<std::string> words;
    for (std::size_t j = 0; j < spec.query_len; ++j) {
      if (r.uniform() < spec.query_overlap) {
        words.push_back(doc_words[r.below(doc_words.size())]);
      } else {
        words.push_back(tm.words[detail::sample_index(tm.word_probs[t], r)]);
      }
    }
    Query q;
    q.text = detail::join(words);
    q.answers = {tm.words[tm.keyword[t]]};
    q.topic = static_cast<int>(t);
    c.queries.push_back(std::move(q));
    c.golden.push_back({g});
  };
  for (std::size_t t = 0; t < spec.topics; ++t) {
    for (std::size_t i = 0; i < spec.queries_per_topic; ++i) make_query(t, rng);
  }
  // Shuffle queries so that splits mix topics.
  std::vector<std::size_t> order(c.queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  Corpus shuffled;
  shuffled.docs = c.docs;
  const std::size_t n_eval = std::min(spec.eval_queries, order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    Query q = c.queries[order[i]];
    q.id = detail::padded_id('q', i);
    q.split = i + n_eval >= order.size() ? "eval" : "train";
    shuffled.queries.push_back(std::move(q));
    shuffled.golden.push_back(c.golden[order[i]]);
  }
  if (spec.pretrain_queries_per_topic > 0) {
    Rng prng(derive_seed(spec.seed, "pretrain"));
    c.queries.clear();
    c.golden.clear();
    for (std::size_t t = 0; t < spec.topics; ++t) {
      for (std::size_t i = 0; i < spec.pretrain_queries_per_topic; ++i) make_query(t, prng);
    }
    for (std::size_t i = 0; i < c.queries.size(); ++i) {
      Query q = std::move(c.queries[i]);
      q.id = detail::padded_id('p', i);
      q.split = "pretrain";
      shuffled.queries.push_back(std::move(q));
      shuffled.golden.push_back(c.golden[i]);
    }
  }
  return shuffled;
}

/// Random: any non-golden doc. InTopicExcluded: other topics only (easy).
/// InTopic: same topic only (hard).
enum class NegativeSampling { Random, InTopicExcluded, InTopic };

/// One golden positive and L-1 sampled negatives per training query.
/// With L == 1, examples alternate between the golden document (y=1) and a
/// sampled negative (y=0).
inline std::vector<TrainingExample> make_training_examples(const Corpus& c, std::size_t L,
                                                           NegativeSampling negatives,
                                                           std::uint64_t seed,
                                                           std::string_view split = "train") {
  if (L < 1) throw Error("L must be >= 1");
  if (L > c.docs.size()) throw Error("L exceeds corpus size");
  Rng rng(derive_seed(seed, "examples"));
  std::vector<TrainingExample> out;
  std::size_t counter = 0;
  for (std::size_t qi : c.split_indices(split)) {
    if (c.golden[qi].empty()) throw Error("query " + c.queries[qi].id + " has no golden doc");
    const std::size_t gold = c.golden[qi].front();
    const int topic = c.queries[qi].topic;
    auto draw_negative = [&](const std::vector<std::size_t>& taken) {
      for (int attempt = 0; attempt < 10000; ++attempt) {
        const std::size_t d = rng.below(c.docs.size());
        if (std::find(c.golden[qi].begin(), c.golden[qi].end(), d) != c.golden[qi].end()) continue;
        if (std::find(taken.begin(), taken.end(), d) != taken.end()) continue;
        if (negatives == NegativeSampling::InTopicExcluded && c.docs[d].topic == topic) continue;
        if (negatives == NegativeSampling::InTopic && c.docs[d].topic != topic) continue;
        return d;
      }
      throw Error("cannot sample enough negatives for query " + c.queries[qi].id);
    };
    TrainingExample ex;
    ex.query = qi;
    if (L == 1) {
      if (counter++ % 2 == 0) {
        ex.docs = {gold};
        ex.labels = {1};
      } else {
        ex.docs = {draw_negative({})};
        ex.labels = {0};
      }
    } else {
      ex.docs.push_back(gold);
      ex.labels.push_back(1);
      while (ex.docs.size() < L) {
        ex.docs.push_back(draw_negative(ex.docs));
        ex.labels.push_back(0);
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// On-disk format: corpus.jsonl, queries.jsonl, qrels.tsv, train.jsonl
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string all = ss.str();
  if (!all.empty() && all.back() != '\n') {
    throw Error(p.string() + ": truncated file (last line not newline-terminated)");
  }
  std::vector<std::string> lines;
  std::string line;
  std::istringstream ls(all);
  while (std::getline(ls, line)) lines.push_back(line);
  return lines;
}

inline nlohmann::json parse_line(const std::filesystem::path& p, std::size_t lineno,
                                 const std::string& line) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(p.string() + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
  }
}

template <typename T>
T field(const nlohmann::json& j, const char* name, const std::filesystem::path& p,
        std::size_t lineno) {
  if (!j.is_object() || !j.contains(name)) {
    throw Error(p.string() + ":" + std::to_string(lineno) + ": missing field '" + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(p.string() + ":" + std::to_string(lineno) + ": bad type for field '" + name + "'");
  }
}
}  // namespace detail

/// File name -> content of the on-disk dataset format.
inline std::vector<std::pair<std::string, std::string>> dataset_files(const Dataset& ds) {
  std::ostringstream corpus, queries, qrels, train;
  for (const auto& d : ds.corpus.docs) {
    corpus << nlohmann::json{{"doc_id", d.id}, {"text", d.text}, {"topic", d.topic}}.dump()
           << '\n';
  }
  for (const auto& q : ds.corpus.queries) {
    queries << nlohmann::json{{"query_id", q.id}, {"text", q.text}, {"answers", q.answers},
                              {"topic", q.topic}, {"split", q.split}}
                   .dump()
            << '\n';
  }
  for (std::size_t i = 0; i < ds.corpus.queries.size(); ++i) {
    for (std::size_t d : ds.corpus.golden[i]) {
      qrels << ds.corpus.queries[i].id << '\t' << ds.corpus.docs[d].id << '\n';
    }
  }
  for (const auto& ex : ds.examples) {
    std::vector<std::string> ids;
    for (std::size_t d : ex.docs) ids.push_back(ds.corpus.docs[d].id);
    train << nlohmann::json{{"query_id", ds.corpus.queries[ex.query].id}, {"doc_ids", ids},
                            {"labels", ex.labels}}
                 .dump()
          << '\n';
  }
  return {{"corpus.jsonl", corpus.str()},
          {"queries.jsonl", queries.str()},
          {"qrels.tsv", qrels.str()},
          {"train.jsonl", train.str()}};
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : dataset_files(ds)) {
    std::ofstream out(dir / name, std::ios::binary);
    out << content;
    if (!out) throw Error("cannot write " + (dir / name).string());
  }
}

/// Loads a dataset directory. Any malformed line, dangling reference or
/// truncated file aborts the whole load with a located error.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  std::unordered_map<std::string, std::size_t> doc_index, query_index;
  {
    const auto p = dir / "corpus.jsonl";
    const auto lines = detail::read_lines(p);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto j = detail::parse_line(p, i + 1, lines[i]);
      Document d;
      d.id = detail::field<std::string>(j, "doc_id", p, i + 1);
      d.text = detail::field<std::string>(j, "text", p, i + 1);
      d.topic = j.value("topic", -1);
      if (!doc_index.emplace(d.id, ds.corpus.docs.size()).second) {
        throw Error(p.string() + ":" + std::to_string(i + 1) + ": duplicate doc_id " + d.id);
      }
      ds.corpus.docs.push_back(std::move(d));
    }
  }
  {
    const auto p = dir / "queries.jsonl";
    const auto lines = detail::read_lines(p);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto j = detail::parse_line(p, i + 1, lines[i]);
      Query q;
      q.id = detail::field<std::string>(j, "query_id", p, i + 1);
      q.text = detail::field<std::string>(j, "text", p, i + 1);
      q.answers = detail::field<std::vector<std::string>>(j, "answers", p, i + 1);
      q.topic = j.value("topic", -1);
      q.split = j.value("split", std::string("train"));
      if (!query_index.emplace(q.id, ds.corpus.queries.size()).second) {
        throw Error(p.string() + ":" + std::to_string(i + 1) + ": duplicate query_id " + q.id);
      }
      ds.corpus.queries.push_back(std::move(q));
    }
  }
  ds.corpus.golden.assign(ds.corpus.queries.size(), {});
  {
    const auto p = dir / "qrels.tsv";
    const auto lines = detail::read_lines(p);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto tab = lines[i].find('\t');
      const std::string loc = p.string() + ":" + std::to_string(i + 1);
      if (tab == std::string::npos) throw Error(loc + ": expected query_id<TAB>doc_id");
      const std::string qid = lines[i].substr(0, tab);
      const std::string did = lines[i].substr(tab + 1);
      auto qi = query_index.find(qid);
      if (qi == query_index.end()) throw Error(loc + ": unknown query_id " + qid);
      auto di = doc_index.find(did);
      if (di == doc_index.end()) throw Error(loc + ": unknown doc_id " + did);
      ds.corpus.golden[qi->second].push_back(di->second);
    }
  }
  const auto train_path = dir / "train.jsonl";
  if (std::filesystem::exists(train_path)) {
    const auto lines = detail::read_lines(train_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto j = detail::parse_line(train_path, i + 1, lines[i]);
      const std::string loc = train_path.string() + ":" + std::to_string(i + 1);
      TrainingExample ex;
      const auto qid = detail::field<std::string>(j, "query_id", train_path, i + 1);
      auto qi = query_index.find(qid);
      if (qi == query_index.end()) throw Error(loc + ": unknown query_id " + qid);
      ex.query = qi->second;
      for (const auto& did : detail::field<std::vector<std::string>>(j, "doc_ids", train_path,
                                                                     i + 1)) {
        auto di = doc_index.find(did);
        if (di == doc_index.end()) throw Error(loc + ": unknown doc_id " + did);
        ex.docs.push_back(di->second);
      }
      ex.labels = detail::field<std::vector<int>>(j, "labels", train_path, i + 1);
      if (ex.labels.size() != ex.docs.size()) throw Error(loc + ": labels/doc_ids length mismatch");
      for (int y : ex.labels) {
        if (y != 0 && y != 1) throw Error(loc + ": labels must be 0/1");
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

}  // namespace embedmatch

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

#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace embedmatch;
namespace fs = std::filesystem;

namespace {

CorpusSpec small_spec(std::uint64_t seed = 1) {
  CorpusSpec s;
  s.topics = 3;
  s.docs_per_topic = 6;
  s.queries_per_topic = 5;
  s.vocab_size = 60;
  s.eval_queries = 4;
  s.seed = seed;
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("embedmatch_test_" + name);
  fs::remove_all(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST(Datasim, ShapesAndSplits) {
  const Corpus c = generate_corpus(small_spec());
  EXPECT_EQ(c.docs.size(), 18u);
  EXPECT_EQ(c.queries.size(), 15u);
  EXPECT_EQ(c.split_indices("eval").size(), 4u);
  EXPECT_EQ(c.split_indices("train").size(), 11u);
  for (std::size_t q = 0; q < c.queries.size(); ++q) {
    ASSERT_EQ(c.golden[q].size(), 1u);
    EXPECT_EQ(c.docs[c.golden[q][0]].topic, c.queries[q].topic);
    // Every document of a topic carries the topic keyword, the query's answer.
    EXPECT_TRUE(contains_answer(c.docs[c.golden[q][0]].text, c.queries[q].answers[0]));
  }
}

TEST(Datasim, PretrainQueriesDoNotPerturbTheMainSplits) {
  CorpusSpec s = small_spec();
  const Corpus base = generate_corpus(s);
  s.pretrain_queries_per_topic = 4;
  const Corpus more = generate_corpus(s);
  ASSERT_EQ(more.queries.size(), base.queries.size() + 12);
  for (std::size_t i = 0; i < base.queries.size(); ++i) EXPECT_EQ(more.queries[i], base.queries[i]);
  EXPECT_EQ(more.split_indices("pretrain").size(), 12u);
}

TEST(Datasim, GenerationIsSeedDeterministic) {
  EXPECT_EQ(generate_corpus(small_spec(4)), generate_corpus(small_spec(4)));
  EXPECT_NE(generate_corpus(small_spec(4)).docs, generate_corpus(small_spec(5)).docs);
}

TEST(Datasim, NegativeSamplingModes) {
  const Corpus c = generate_corpus(small_spec());
  for (auto mode : {NegativeSampling::Random, NegativeSampling::InTopicExcluded,
                    NegativeSampling::InTopic}) {
    const auto ex = make_training_examples(c, 4, mode, 3);
    ASSERT_EQ(ex.size(), c.split_indices("train").size());
    for (const auto& e : ex) {
      ASSERT_EQ(e.docs.size(), 4u);
      EXPECT_EQ(e.labels, (std::vector<int>{1, 0, 0, 0}));
      EXPECT_EQ(e.docs[0], c.golden[e.query][0]);
      for (std::size_t i = 1; i < 4; ++i) {
        const bool same = c.docs[e.docs[i]].topic == c.queries[e.query].topic;
        if (mode == NegativeSampling::InTopicExcluded) {
          EXPECT_FALSE(same);
        }
        if (mode == NegativeSampling::InTopic) {
          EXPECT_TRUE(same);
        }
        EXPECT_NE(e.docs[i], e.docs[0]);
      }
    }
  }
  EXPECT_THROW(make_training_examples(c, 0, NegativeSampling::Random, 0), Error);
  // Six documents per topic cannot supply seven same-topic negatives.
  EXPECT_THROW(make_training_examples(c, 8, NegativeSampling::InTopic, 0), Error);
}

TEST(Datasim, SingleDocumentExamplesAlternateLabels) {
  const Corpus c = generate_corpus(small_spec());
  const auto ex = make_training_examples(c, 1, NegativeSampling::Random, 0);
  for (std::size_t i = 0; i < ex.size(); ++i) EXPECT_EQ(ex[i].labels[0], i % 2 == 0 ? 1 : 0);
}

TEST(Datasim, SaveLoadRoundTrip) {
  Dataset ds;
  ds.corpus = generate_corpus(small_spec());
  ds.examples = make_training_examples(ds.corpus, 3, NegativeSampling::Random, 1);
  const fs::path dir = fresh_dir("roundtrip");
  save_dataset(ds, dir);
  EXPECT_EQ(load_dataset(dir), ds);
}

TEST(Datasim, LoadErrorsAreLocated) {
  Dataset ds;
  ds.corpus = generate_corpus(small_spec());
  const fs::path dir = fresh_dir("errors");
  save_dataset(ds, dir);
  write(dir / "qrels.tsv", "q000000\td000000\nq000001\tnope\n");
  try {
    load_dataset(dir);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("qrels.tsv:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
  save_dataset(ds, dir);
  write(dir / "corpus.jsonl", "{\"doc_id\": \"a\", \"text\": \"x\"}\n{\"doc_id\": \"b\"\n");
  try {
    load_dataset(dir);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("corpus.jsonl:2"), std::string::npos) << e.what();
  }
  fs::remove(dir / "queries.jsonl");
  EXPECT_THROW(load_dataset(dir), Error);
}

TEST(Text, VocabAndTokenize) {
  const Vocab v = Vocab::from_texts({"b a", "c a"});
  EXPECT_EQ(v.size(), special::kNumReserved + 3);
  const TokenSequence s = tokenize("a zzz c", v, true);
  EXPECT_EQ(s.ids.front(), special::kCls);
  EXPECT_EQ(s.ids[2], special::kUnk);
  EXPECT_EQ(detokenize(tokenize("a c", v, true), v), "a c");
}

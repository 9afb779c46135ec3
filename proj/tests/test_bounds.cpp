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

#include "support.hpp"

using namespace embedmatch;

TEST(Bounds, InequalitiesHoldAndMatchTheOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const EmbeddedSample e = emtest::random_bound_triple(rng, 64);
    const auto o = emtest::bound_oracle(e);
    const BoundReport l4 = lemma4_check(e), l5 = lemma5_check(e);
    EXPECT_NEAR(l4.lhs, o.lhs4, 1e-9);
    EXPECT_NEAR(l4.rhs, o.rhs4, 1e-9);
    EXPECT_NEAR(l5.lhs, o.lhs5, 1e-9);
    EXPECT_NEAR(l5.rhs, o.rhs5, 1e-9);
    EXPECT_TRUE(l4.verdict);
    EXPECT_TRUE(l5.verdict);
  }
}

TEST(Bounds, IdenticalTowersLeaveOnlyTheLabelTerm) {
  Rng rng(3);
  EmbeddedSample e = emtest::random_bound_triple(rng, 16);
  e.sq = e.tq;
  e.sd = e.td;
  const BoundReport r = lemma4_check(e);
  EXPECT_EQ(r.term_emb_q, 0.0);
  EXPECT_EQ(r.term_emb_d, 0.0);
  EXPECT_DOUBLE_EQ(r.rhs, r.term_label);
}

TEST(Bounds, KIsTheLargestNorm) {
  EmbeddedSample e;
  e.tq = {{3.0, 4.0}};
  e.td = {{1.0, 0.0}};
  e.sq = {{0.0, 0.0}};
  e.sd = {{0.0, 6.0}};
  e.y = {1};
  EXPECT_DOUBLE_EQ(compute_K(e), 6.0);
  e.y = {2};
  EXPECT_THROW(compute_K(e), Error);
}

TEST(Bounds, GapTermsAndJson) {
  Rng rng(9);
  const auto train = emtest::random_bound_triple(rng, 32);
  const auto held = emtest::random_bound_triple(rng, 32);
  const BoundReport r = theorem1_terms(train, held);
  ASSERT_TRUE(r.r_emb_q.has_value());
  EXPECT_GE(*r.delta_teacher_estimate, 0.0);
  const auto j = r.to_json();
  EXPECT_EQ(j.at("uniform_deviation"), "not computable");
  EXPECT_EQ(j.at("kind"), "theorem1");
  EXPECT_TRUE(j.contains("K"));
}

TEST(Bounds, PairwiseDiscrepancy) {
  const std::vector<Vec> t{{0.0}, {1.0}, {3.0}};
  const std::vector<Vec> s{{0.0}, {2.0}, {3.0}};
  const auto d = pairwise_discrepancy(t, s);
  EXPECT_EQ(d, (std::vector<double>{-1.0, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(mean_abs(d), 2.0 / 3.0);
  EXPECT_THROW(pairwise_discrepancy({{0.0}}, {{0.0}}), Error);
}

TEST(Bounds, PairSampleNeedsSingleDocumentExamples) {
  TrainingExample ex{0, {1, 2}, {1, 0}};
  EXPECT_THROW(PairSample::from_examples({ex}), Error);
  TrainingExample one{0, {1}, {1}};
  EXPECT_EQ(PairSample::from_examples({one}).y, std::vector<int>{1});
}

TEST(Bounds, ProjectionIsRequiredForMismatchedWidths) {
  Rng rng(1);
  const DEModel t = DEModel::random({.vocab_size = 10, .hidden = 4, .out_dim = 4}, PoolingKind::Mean,
                                    true, rng);
  const DEModel s = DEModel::random({.vocab_size = 10, .hidden = 2, .out_dim = 2}, PoolingKind::Mean,
                                    true, rng);
  const std::vector<TokenSequence> seqs{{{special::kCls, 6}}};
  const PairSample ps{{0}, {0}, {1}};
  EXPECT_THROW(embed_sample(t, s, ps, seqs, seqs, nullptr), Error);
  const Projection p = make_projection(2, 4, rng);
  bool projected = false;
  embed_sample(t, s, ps, seqs, seqs, &p, &projected);
  EXPECT_TRUE(projected);
}

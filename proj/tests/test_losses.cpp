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

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    for (const auto& [name, err] : emtest::loss_grad_errors(rng)) {
      ASSERT_LT(err, 1e-4) << name << " trial " << trial;
    }
  }
}

TEST(Losses, HandValues) {
  const std::vector<int> y{1, 0};
  EXPECT_NEAR(softmax_ce_onehot(Vec{0.0, 0.0}, y).value, std::log(2.0), 1e-15);
  EXPECT_NEAR(binary_ce_onehot(Vec{0.0, 0.0}, y).value, 2.0 * std::log(2.0), 1e-15);
  // Matching distributions leave only the target entropy.
  EXPECT_NEAR(softmax_ce_distill(Vec{1.0, 1.0}, Vec{5.0, 5.0}).value, std::log(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(mse_distill(Vec{1.0, 2.0}, Vec{2.0, 0.0}).value, 5.0);
  const auto g = softmax_ce_distill(Vec{0.3, -1.2}, Vec{0.3, -1.2}).grad;
  EXPECT_NEAR(g[0], 0.0, 1e-15);
  EXPECT_NEAR(g[1], 0.0, 1e-15);
}

TEST(Losses, TemperatureSoftensTheTarget) {
  const Vec s{0.0, 0.0, 0.0}, t{4.0, 0.0, -4.0};
  const double cold = softmax_ce_distill(s, t, 0.5).value;
  const double hot = softmax_ce_distill(s, t, 8.0).value;
  // With a uniform student the loss is log(3) for any target.
  EXPECT_NEAR(cold, std::log(3.0), 1e-12);
  EXPECT_NEAR(hot, std::log(3.0), 1e-12);
  EXPECT_THROW(softmax_ce_distill(s, t, 0.0), Error);
}

TEST(Losses, ExtremeScoresStayFinite) {
  const Vec s{900.0, -900.0};
  const Vec t{-900.0, 900.0};
  const std::vector<int> y{0, 1};
  for (const auto& o : {softmax_ce_onehot(s, y), binary_ce_onehot(s, y),
                        softmax_ce_distill(s, t), binary_ce_distill(s, t)}) {
    EXPECT_TRUE(std::isfinite(o.value));
    EXPECT_TRUE(all_finite(o.grad));
  }
}

TEST(Losses, InputValidation) {
  EXPECT_THROW(softmax_ce_onehot(Vec{1.0}, std::vector<int>{1, 0}), Error);
  EXPECT_THROW(softmax_ce_onehot(Vec{1.0, 2.0}, std::vector<int>{0, 0}), Error);
  EXPECT_THROW(binary_ce_onehot(Vec{1.0, 2.0}, std::vector<int>{2, 0}), Error);
  EXPECT_THROW(mse_distill(Vec{}, Vec{}), Error);
  EXPECT_THROW(binary_ce_distill(Vec{1.0}, Vec{1.0, 2.0}), Error);
  EXPECT_EQ(distill_loss_from_string("binary_ce"), DistillLoss::BinaryCE);
  EXPECT_THROW(distill_loss_from_string("kl"), Error);
}

TEST(Losses, EmbedMatchValueAndZeroDistanceSubgradient) {
  const Projection id{Mat(2, 2), Mat(1, 2)};
  Projection p = id;
  p.w(0, 0) = p.w(1, 1) = 1.0;
  const std::vector<Vec> teacher{{3.0, 4.0}, {1.0, 1.0}};
  const std::vector<Vec> student{{0.0, 0.0}, {1.0, 1.0}};
  const auto o = embed_match_loss(teacher, student, p);
  EXPECT_DOUBLE_EQ(o.value, 2.5);  // (5 + 0) / 2
  EXPECT_EQ(o.grad_student[1], (Vec{0.0, 0.0}));
  const auto sq = embed_match_loss(teacher, student, p, true);
  EXPECT_DOUBLE_EQ(sq.value, 12.5);
  EXPECT_THROW(embed_match_loss(teacher, {student[0]}, p), Error);
}

TEST(Losses, ReconstructionRejectsShapeMismatch) {
  TokenSequence seq{{special::kCls, 6, 7}};
  const Affine dec = Affine::zeros(2, 8);
  EXPECT_THROW(reconstruction_loss(Mat(2, 2), seq, dec), Error);
  const auto o = reconstruction_loss(Mat(3, 2), seq, dec);
  EXPECT_NEAR(o.value, std::log(8.0), 1e-12);  // uniform logits
}

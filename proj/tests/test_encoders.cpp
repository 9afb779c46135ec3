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
using emtest::flatten;
using emtest::unflatten;

namespace {

const EncoderShape kShape{.vocab_size = 12, .hidden = 4, .out_dim = 3, .blocks = 2};

}  // namespace

class EncoderGrad : public ::testing::TestWithParam<PoolingKind> {};

TEST_P(EncoderGrad, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    EncoderParams p = EncoderParams::random(kShape, GetParam(), rng);
    const TokenSequence seq = emtest::random_sequence(rng, kShape.vocab_size, 2 + rng.below(4));
    const Vec c = emtest::random_vec(rng, kShape.out_dim);
    const double err = grad_check(
        [&](std::span<const double> x, Vec& g) {
          EncoderParams q = p;
          unflatten(x, q);
          const PooledForward f = encode_with_cache(q, seq);
          EncoderParams grad = zeros_like(q);
          encode_backward(q, f, c, grad);
          g = flatten(grad);
          return dot(c, f.embedding);
        },
        flatten(p));
    EXPECT_LT(err, 1e-6) << to_string(GetParam());
  }
}

INSTANTIATE_TEST_SUITE_P(Pooling, EncoderGrad,
                         ::testing::Values(PoolingKind::FirstToken, PoolingKind::Mean),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Encoder, PaddingDoesNotChangeTheEmbedding) {
  Rng rng(2);
  const EncoderParams p = EncoderParams::random(kShape, PoolingKind::Mean, rng);
  TokenSequence s{{special::kCls, 7, 8, 9}};
  TokenSequence padded = s;
  padded.ids.insert(padded.ids.end(), {special::kPad, special::kPad});
  EXPECT_EQ(encode(p, s), encode(p, padded));
}

TEST(Encoder, EmptySequenceIsAnError) {
  Rng rng(2);
  const EncoderParams p = EncoderParams::random(kShape, PoolingKind::Mean, rng);
  EXPECT_THROW(encode(p, TokenSequence{}), Error);
}

TEST(Encoder, PoolingKindRoundTripsThroughStrings) {
  for (auto k : {PoolingKind::FirstToken, PoolingKind::Mean, PoolingKind::SegmentWeightedMean,
                 PoolingKind::DualSpecialToken}) {
    EXPECT_EQ(pooling_from_string(to_string(k)), k);
  }
  EXPECT_THROW(pooling_from_string("max"), Error);
}

TEST(Models, JointInputLayout) {
  const TokenSequence q{{special::kCls, 5, 6}};
  const TokenSequence d{{special::kCls, 7, 8, 9}};
  const JointInput j = build_joint_input(q, d, false);
  EXPECT_EQ(j.seq.ids, (std::vector<TokenId>{special::kCls, 5, 6, special::kSep, 7, 8, 9,
                                             special::kSep}));
  EXPECT_EQ(j.first_sep, 3u);
  EXPECT_EQ(j.doc_begin, 4u);
  EXPECT_EQ(j.doc_end, 7u);
  EXPECT_EQ(j.segments, (std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1, 1}));
  const JointInput e = build_joint_input(q, d, true);
  EXPECT_EQ(e.seq.ids.size(), 6u);
  EXPECT_EQ(e.query_begin, e.query_end);
  // Truncation keeps the query and trims the document.
  const JointInput t = build_joint_input(q, d, false, 6);
  EXPECT_EQ(t.seq.ids.size(), 6u);
  EXPECT_EQ(t.doc_end - t.doc_begin, 1u);
  EXPECT_THROW(build_joint_input(q, d, false, 4), Error);
}

TEST(Models, SegmentWeightedMeanUsesInverseSqrtLength) {
  Rng rng(8);
  const CEModel ce = CEModel::random_dual(kShape, PoolingKind::SegmentWeightedMean, false, rng);
  const TokenSequence q{{special::kCls, 5}};
  const TokenSequence d{{special::kCls, 6, 7, 8, 9}};
  const JointInput j = build_joint_input(q, d, false);
  const JointForward f = ce_forward(ce, j);
  Vec expect_d(kShape.out_dim, 0.0);
  for (std::size_t i = j.doc_begin; i < j.doc_end; ++i) axpy(0.5, f.cache.out.row(i), expect_d);
  for (std::size_t c = 0; c < kShape.out_dim; ++c) {
    EXPECT_NEAR(f.proxy_d[c], expect_d[c], 1e-14);
    EXPECT_NEAR(f.proxy_q[c], f.cache.out(j.query_begin, c), 1e-14);  // length 1, weight 1
  }
  EXPECT_NEAR(f.score, dot(f.proxy_q, f.proxy_d), 1e-14);
}

TEST(Models, DualSpecialTokenReadsClsAndFirstSep) {
  Rng rng(8);
  const CEModel ce = CEModel::random_dual(kShape, PoolingKind::DualSpecialToken, false, rng);
  const JointInput j = build_joint_input(TokenSequence{{5, 6}}, TokenSequence{{7}}, false);
  const JointForward f = ce_forward(ce, j);
  for (std::size_t c = 0; c < kShape.out_dim; ++c) {
    EXPECT_EQ(f.proxy_q[c], f.cache.out(0, c));
    EXPECT_EQ(f.proxy_d[c], f.cache.out(j.first_sep, c));
  }
  EXPECT_THROW(ce_score_cls(ce, TokenSequence{{5}}, TokenSequence{{6}}), Error);
}

namespace {

Vec flatten_ce(const CEModel& ce) {
  Vec v = flatten(ce.encoder);
  if (const auto* h = std::get_if<ClassificationHead>(&ce.head)) emtest::append(v, h->w);
  if (ce.decoder) {
    emtest::append(v, ce.decoder->w);
    emtest::append(v, ce.decoder->b);
  }
  return v;
}

void unflatten_ce(std::span<const double> x, CEModel& ce) {
  const std::size_t n = ce.encoder.parameter_count();
  unflatten(x.first(n), ce.encoder);
  std::size_t at = n;
  if (auto* h = std::get_if<ClassificationHead>(&ce.head)) emtest::read_into(x, at, h->w);
  if (ce.decoder) {
    emtest::read_into(x, at, ce.decoder->w);
    emtest::read_into(x, at, ce.decoder->b);
  }
}

Vec flatten_ce_grad(const CEModel& ce, const CEGrad& g) {
  Vec v = flatten(g.encoder);
  if (!ce.is_dual()) emtest::append(v, g.w);
  if (g.decoder) {
    emtest::append(v, g.decoder->w);
    emtest::append(v, g.decoder->b);
  }
  return v;
}

}  // namespace

TEST(Models, CrossEncoderBackwardMatchesFiniteDifferences) {
  Rng rng(13);
  const TokenSequence q{{special::kCls, 5, 6}};
  const TokenSequence d{{special::kCls, 7, 8, 9}};
  for (int variant = 0; variant < 3; ++variant) {
    CEModel ce = variant == 0 ? CEModel::random_cls(kShape, rng)
                              : CEModel::random_dual(kShape,
                                                     variant == 1 ? PoolingKind::DualSpecialToken
                                                                  : PoolingKind::SegmentWeightedMean,
                                                     true, rng);
    const Vec cq = emtest::random_vec(rng, kShape.out_dim);
    // Objective: score + <cq, proxy_q> + reconstruction (dual variants).
    const double err = grad_check(
        [&](std::span<const double> x, Vec& g) {
          CEModel m = ce;
          unflatten_ce(x, m);
          const JointForward f = ce_forward(m, build_joint_input(q, d, false));
          CEGrad grad = CEGrad::zeros_for(m);
          double value = f.score;
          std::optional<Mat> d_tokens;
          Vec dq;
          if (m.is_dual()) {
            value += dot(cq, f.proxy_q);
            dq = cq;
            const auto r = reconstruction_loss(f.cache.out, f.input.seq, *m.decoder);
            value += r.value;
            d_tokens = r.grad_embs;
            axpy(1.0, r.grad_decoder.w.data(), grad.decoder->w.data());
            axpy(1.0, r.grad_decoder.b.data(), grad.decoder->b.data());
          }
          ce_backward(m, f, 1.0, dq, {}, d_tokens ? &*d_tokens : nullptr, grad);
          g = flatten_ce_grad(m, grad);
          return value;
        },
        flatten_ce(ce));
    EXPECT_LT(err, 1e-6) << "variant " << variant;
  }
}

TEST(Models, ProjectionIsIdentityWhenDimensionsMatch) {
  Rng rng(1);
  const Projection p = make_projection(3, 3, rng);
  const Vec x{1.0, -2.0, 0.5};
  EXPECT_EQ(project(p, x), x);
  const Projection r = make_projection(2, 3, rng);
  EXPECT_EQ(r.out_dim(), 3u);
  EXPECT_THROW(project(r, x), Error);
}

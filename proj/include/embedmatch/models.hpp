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

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "embedmatch/encoder.hpp"

namespace embedmatch {

/// Affine map y = W x + b, W stored (out x in), b stored (1 x out).
struct Affine {
  Mat w;
  Mat b;

  std::size_t in_dim() const { return w.cols(); }
  std::size_t out_dim() const { return w.rows(); }

  Vec apply(std::span<const double> x) const {
    if (x.size() != in_dim()) {
      throw Error("dimension mismatch: affine expects " + std::to_string(in_dim()) + ", got " +
                  std::to_string(x.size()));
    }
    return affine(w, b.row(0), x);
  }

  /// Accumulates parameter gradients into `grad`; returns d/dx.
  Vec backward(std::span<const double> x, std::span<const double> d_out, Affine& grad) const {
    Vec dx(in_dim(), 0.0);
    for (std::size_t r = 0; r < out_dim(); ++r) {
      const double g = d_out[r];
      grad.b(0, r) += g;
      if (g == 0.0) continue;
      axpy(g, x, grad.w.row(r));
      axpy(g, w.row(r), dx);
    }
    return dx;
  }

  static Affine zeros(std::size_t in, std::size_t out) { return {Mat(out, in), Mat(1, out)}; }

  template <typename Fn>
  void for_each(Fn&& fn) {
    fn("w", w);
    fn("b", b);
  }

  bool operator==(const Affine&) const = default;
};

/// Student-to-teacher embedding projection: identity when dimensions match,
/// Xavier-uniform otherwise; bias starts at zero.
using Projection = Affine;

inline Projection make_projection(std::size_t student_dim, std::size_t teacher_dim, Rng& rng) {
  Projection p = Affine::zeros(student_dim, teacher_dim);
  if (student_dim == teacher_dim) {
    for (std::size_t i = 0; i < student_dim; ++i) p.w(i, i) = 1.0;
  } else {
    fill_xavier_uniform(p.w, rng);
  }
  return p;
}

inline Vec project(const Projection& p, std::span<const double> emb) { return p.apply(emb); }

/// Inner-product scorer of a dual encoder.
inline double de_score(std::span<const double> q_emb, std::span<const double> d_emb) {
  return dot(q_emb, d_emb);
}

// ---------------------------------------------------------------------------
// Dual encoder
// ---------------------------------------------------------------------------

struct DEModel {
  EncoderParams query;
  std::optional<EncoderParams> doc;  // empty => towers share `query`

  bool shared() const { return !doc.has_value(); }
  const EncoderParams& query_encoder() const { return query; }
  const EncoderParams& doc_encoder() const { return doc ? *doc : query; }
  EncoderParams& doc_encoder() { return doc ? *doc : query; }

  static DEModel random(const EncoderShape& shape, PoolingKind pooling, bool shared, Rng& rng) {
    DEModel m;
    m.query = EncoderParams::random(shape, pooling, rng);
    if (!shared) m.doc = EncoderParams::random(shape, pooling, rng);
    return m;
  }

  bool operator==(const DEModel&) const = default;
};

// ---------------------------------------------------------------------------
// Joint (cross-encoder) inputs
// ---------------------------------------------------------------------------

/// [CLS] q [SEP] d [SEP], or [CLS] [SEP] d [SEP] for an empty query.
struct JointInput {
  TokenSequence seq;
  std::vector<std::uint8_t> segments;
  std::size_t query_begin = 1, query_end = 1;  // query token positions [begin, end)
  std::size_t first_sep = 1;
  std::size_t doc_begin = 2, doc_end = 2;      // document token positions

  EncoderInput encoder_input() const { return {seq.ids, segments}; }
};

inline std::vector<TokenId> strip_specials(const TokenSequence& s) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < s.unpadded_length(); ++i) {
    if (s.ids[i] == special::kCls || s.ids[i] == special::kSep) continue;
    out.push_back(s.ids[i]);
  }
  return out;
}

/// Builds the joint input. The document tail is truncated so the result fits
/// in `max_len` (0 = unbounded); the query is never truncated.
inline JointInput build_joint_input(const TokenSequence& q, const TokenSequence& d,
                                    bool empty_query, std::size_t max_len = 0) {
  const std::vector<TokenId> qt = empty_query ? std::vector<TokenId>{} : strip_specials(q);
  std::vector<TokenId> dt = strip_specials(d);
  if (max_len != 0) {
    if (qt.size() + 3 > max_len) throw Error("query too long for joint input");
    const std::size_t room = max_len - 3 - qt.size();
    if (dt.size() > room) dt.resize(room);
  }
  JointInput j;
  j.seq.ids.push_back(special::kCls);
  j.seq.ids.insert(j.seq.ids.end(), qt.begin(), qt.end());
  j.query_begin = 1;
  j.query_end = 1 + qt.size();
  j.first_sep = j.query_end;
  j.seq.ids.push_back(special::kSep);
  j.doc_begin = j.first_sep + 1;
  j.seq.ids.insert(j.seq.ids.end(), dt.begin(), dt.end());
  j.doc_end = j.doc_begin + dt.size();
  j.seq.ids.push_back(special::kSep);
  j.segments.assign(j.seq.ids.size(), 1);
  for (std::size_t i = 0; i <= j.first_sep; ++i) j.segments[i] = 0;
  return j;
}

// ---------------------------------------------------------------------------
// Cross encoder
// ---------------------------------------------------------------------------

struct ClassificationHead {
  Mat w;  // 1 x k
  bool operator==(const ClassificationHead&) const = default;
};

struct DualPoolHead {
  PoolingKind kind = PoolingKind::DualSpecialToken;
  bool operator==(const DualPoolHead&) const = default;
};

struct CEModel {
  EncoderParams encoder;
  std::variant<ClassificationHead, DualPoolHead> head;
  /// Token decoder (R^k -> R^V) used by the reconstruction objective.
  std::optional<Affine> decoder;

  bool is_dual() const { return std::holds_alternative<DualPoolHead>(head); }

  static CEModel random_cls(const EncoderShape& shape, Rng& rng) {
    CEModel m;
    m.encoder = EncoderParams::random(shape, PoolingKind::FirstToken, rng);
    ClassificationHead h{Mat(1, shape.out_dim)};
    fill_normal(h.w, rng, 1.0 / std::sqrt(static_cast<double>(shape.out_dim)));
    m.head = h;
    return m;
  }

  static CEModel random_dual(const EncoderShape& shape, PoolingKind kind, bool with_decoder,
                             Rng& rng) {
    if (!is_dual_pooling(kind)) throw Error("dual-pooled CE needs a dual pooling kind");
    CEModel m;
    m.encoder = EncoderParams::random(shape, kind, rng);
    m.head = DualPoolHead{kind};
    if (with_decoder) {
      Affine dec = Affine::zeros(shape.out_dim, shape.vocab_size);
      fill_xavier_uniform(dec.w, rng);
      m.decoder = dec;
    }
    return m;
  }

  bool operator==(const CEModel&) const = default;
};

/// Cached joint forward pass.
struct JointForward {
  JointInput input;
  ForwardCache cache;
  Vec proxy_q;  // dual pooling only
  Vec proxy_d;  // dual pooling only
  double score = 0.0;
};

inline void check_segment(std::size_t begin, std::size_t end) {
  if (end <= begin) throw Error("empty segment");
}

/// Dual pooling of joint token outputs.
inline void dual_pool(PoolingKind kind, const JointInput& j, const Mat& out, Vec& proxy_q,
                      Vec& proxy_d) {
  const std::size_t k = out.cols();
  proxy_q.assign(k, 0.0);
  proxy_d.assign(k, 0.0);
  check_segment(j.doc_begin, j.doc_end);
  if (kind == PoolingKind::DualSpecialToken) {
    auto rq = out.row(0);
    auto rd = out.row(j.first_sep);
    proxy_q.assign(rq.begin(), rq.end());
    proxy_d.assign(rd.begin(), rd.end());
  } else if (kind == PoolingKind::SegmentWeightedMean) {
    const std::size_t nq = j.query_end - j.query_begin;
    if (nq > 0) {
      const double wq = 1.0 / std::sqrt(static_cast<double>(nq));
      for (std::size_t i = j.query_begin; i < j.query_end; ++i) axpy(wq, out.row(i), proxy_q);
    }
    const double wd = 1.0 / std::sqrt(static_cast<double>(j.doc_end - j.doc_begin));
    for (std::size_t i = j.doc_begin; i < j.doc_end; ++i) axpy(wd, out.row(i), proxy_d);
  } else {
    throw Error("not a dual pooling kind");
  }
}

inline void dual_pool_backward(PoolingKind kind, const JointInput& j,
                               std::span<const double> d_q, std::span<const double> d_d,
                               Mat& d_out) {
  if (kind == PoolingKind::DualSpecialToken) {
    axpy(1.0, d_q, d_out.row(0));
    axpy(1.0, d_d, d_out.row(j.first_sep));
  } else {
    const std::size_t nq = j.query_end - j.query_begin;
    if (nq > 0) {
      const double wq = 1.0 / std::sqrt(static_cast<double>(nq));
      for (std::size_t i = j.query_begin; i < j.query_end; ++i) axpy(wq, d_q, d_out.row(i));
    }
    const double wd = 1.0 / std::sqrt(static_cast<double>(j.doc_end - j.doc_begin));
    for (std::size_t i = j.doc_begin; i < j.doc_end; ++i) axpy(wd, d_d, d_out.row(i));
  }
}

inline JointForward ce_forward(const CEModel& ce, const JointInput& j) {
  JointForward f;
  f.input = j;
  f.cache = encode_tokens(ce.encoder, j.encoder_input());
  if (const auto* cls = std::get_if<ClassificationHead>(&ce.head)) {
    f.score = dot(cls->w.row(0), f.cache.out.row(0));
  } else {
    const auto& dual = std::get<DualPoolHead>(ce.head);
    dual_pool(dual.kind, j, f.cache.out, f.proxy_q, f.proxy_d);
    f.score = dot(f.proxy_q, f.proxy_d);
  }
  return f;
}

/// s(q,d) = <w, [CLS]-pooled joint embedding>.
inline double ce_score_cls(const CEModel& ce, const TokenSequence& q, const TokenSequence& d,
                           std::size_t max_len = 0) {
  if (!std::holds_alternative<ClassificationHead>(ce.head)) {
    throw Error("ce_score_cls requires a classification-vector head");
  }
  return ce_forward(ce, build_joint_input(q, d, false, max_len)).score;
}

struct DualPoolResult {
  Vec proxy_q;
  Vec proxy_d;
  double score = 0.0;
};

inline DualPoolResult ce_dual_pool(const CEModel& ce, const TokenSequence& q,
                                   const TokenSequence& d, bool empty_query = false,
                                   std::size_t max_len = 0) {
  if (!ce.is_dual()) throw Error("ce_dual_pool requires a dual-pooling head");
  JointForward f = ce_forward(ce, build_joint_input(q, d, empty_query, max_len));
  return {std::move(f.proxy_q), std::move(f.proxy_d), f.score};
}

/// Score of any cross encoder.
inline double ce_score(const CEModel& ce, const TokenSequence& q, const TokenSequence& d,
                       std::size_t max_len = 0) {
  return ce_forward(ce, build_joint_input(q, d, false, max_len)).score;
}

/// Gradient container mirroring CEModel.
struct CEGrad {
  EncoderParams encoder;
  Mat w;  // classification head, 1 x k (empty for dual heads)
  std::optional<Affine> decoder;

  static CEGrad zeros_for(const CEModel& ce) {
    CEGrad g;
    g.encoder = zeros_like(ce.encoder);
    if (!ce.is_dual()) g.w = Mat(1, ce.encoder.shape.out_dim);
    if (ce.decoder) g.decoder = Affine::zeros(ce.decoder->in_dim(), ce.decoder->out_dim());
    return g;
  }
};

/// Backpropagates d(loss)/d(score) plus optional direct gradients on the
/// proxy embeddings and the token outputs.
inline void ce_backward(const CEModel& ce, const JointForward& f, double d_score,
                        std::span<const double> d_proxy_q, std::span<const double> d_proxy_d,
                        const Mat* d_tokens, CEGrad& grad) {
  const std::size_t k = ce.encoder.shape.out_dim;
  Mat d_out = d_tokens ? *d_tokens : Mat(f.cache.out.rows(), k);
  if (const auto* cls = std::get_if<ClassificationHead>(&ce.head)) {
    axpy(d_score, f.cache.out.row(0), grad.w.row(0));
    axpy(d_score, cls->w.row(0), d_out.row(0));
  } else {
    Vec dq(k, 0.0), dd(k, 0.0);
    if (!d_proxy_q.empty()) axpy(1.0, d_proxy_q, dq);
    if (!d_proxy_d.empty()) axpy(1.0, d_proxy_d, dd);
    axpy(d_score, f.proxy_d, dq);
    axpy(d_score, f.proxy_q, dd);
    dual_pool_backward(std::get<DualPoolHead>(ce.head).kind, f.input, dq, dd, d_out);
  }
  backward_tokens(ce.encoder, f.cache, d_out, grad.encoder);
}

}  // namespace embedmatch

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

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "embedmatch/numerics.hpp"
#include "embedmatch/text.hpp"

namespace embedmatch {

enum class PoolingKind { FirstToken, Mean, SegmentWeightedMean, DualSpecialToken };

inline std::string_view to_string(PoolingKind k) {
  switch (k) {
    case PoolingKind::FirstToken: return "first_token";
    case PoolingKind::Mean: return "mean";
    case PoolingKind::SegmentWeightedMean: return "segment_weighted_mean";
    case PoolingKind::DualSpecialToken: return "dual_special_token";
  }
  return "?";
}

inline PoolingKind pooling_from_string(std::string_view s) {
  if (s == "first_token") return PoolingKind::FirstToken;
  if (s == "mean") return PoolingKind::Mean;
  if (s == "segment_weighted_mean") return PoolingKind::SegmentWeightedMean;
  if (s == "dual_special_token") return PoolingKind::DualSpecialToken;
  throw Error("unknown pooling kind '" + std::string(s) + "'");
}

inline bool is_dual_pooling(PoolingKind k) {
  return k == PoolingKind::SegmentWeightedMean || k == PoolingKind::DualSpecialToken;
}

struct EncoderShape {
  std::size_t vocab_size = 0;
  std::size_t hidden = 16;  // h
  std::size_t out_dim = 16; // k
  std::size_t blocks = 1;   // B
  bool operator==(const EncoderShape&) const = default;
};

struct EncoderBlock {
  Mat wq, wk, wv;  // h x h
  Mat wf;          // h x h
  Mat bf;          // 1 x h
};

/// Desk-scale Transformer stand-in. Each block is
///   H  = X + softmax(X Wq (X Wk)^T / sqrt(h)) X Wv
///   X' = H + tanh(H Wf + bf)
/// and the token outputs are Y = X_B Wo + bo. Inputs are token embeddings
/// plus a two-way segment embedding (query side / document side).
struct EncoderParams {
  EncoderShape shape;
  PoolingKind pooling = PoolingKind::FirstToken;
  Mat tok_emb;  // V x h
  Mat seg_emb;  // 2 x h
  std::vector<EncoderBlock> blocks;
  Mat wo;  // h x k
  Mat bo;  // 1 x k

  static EncoderParams zeros(const EncoderShape& s, PoolingKind pooling) {
    EncoderParams p;
    p.shape = s;
    p.pooling = pooling;
    p.tok_emb = Mat(s.vocab_size, s.hidden);
    p.seg_emb = Mat(2, s.hidden);
    p.blocks.resize(s.blocks);
    for (auto& b : p.blocks) {
      b.wq = Mat(s.hidden, s.hidden);
      b.wk = Mat(s.hidden, s.hidden);
      b.wv = Mat(s.hidden, s.hidden);
      b.wf = Mat(s.hidden, s.hidden);
      b.bf = Mat(1, s.hidden);
    }
    p.wo = Mat(s.hidden, s.out_dim);
    p.bo = Mat(1, s.out_dim);
    return p;
  }

  static EncoderParams random(const EncoderShape& s, PoolingKind pooling, Rng& rng) {
    EncoderParams p = zeros(s, pooling);
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(s.hidden));
    fill_normal(p.tok_emb, rng, emb_std);
    fill_normal(p.seg_emb, rng, emb_std);
    for (auto& b : p.blocks) {
      fill_xavier_uniform(b.wq, rng);
      fill_xavier_uniform(b.wk, rng);
      fill_xavier_uniform(b.wv, rng);
      fill_xavier_uniform(b.wf, rng);
    }
    fill_xavier_uniform(p.wo, rng);
    return p;
  }

  /// Visits every parameter matrix with a stable name, in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    fn("tok_emb", tok_emb);
    fn("seg_emb", seg_emb);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string pre = "block" + std::to_string(i) + ".";
      fn(pre + "wq", blocks[i].wq);
      fn(pre + "wk", blocks[i].wk);
      fn(pre + "wv", blocks[i].wv);
      fn(pre + "wf", blocks[i].wf);
      fn(pre + "bf", blocks[i].bf);
    }
    fn("wo", wo);
    fn("bo", bo);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<EncoderParams*>(this)->for_each(
        [&](const std::string& name, Mat& m) { fn(name, static_cast<const Mat&>(m)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Mat& m) { n += m.size(); });
    return n;
  }

  bool operator==(const EncoderParams& o) const {
    if (!(shape == o.shape) || pooling != o.pooling || !(tok_emb == o.tok_emb) ||
        !(seg_emb == o.seg_emb) || !(wo == o.wo) || !(bo == o.bo) ||
        blocks.size() != o.blocks.size()) {
      return false;
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& a = blocks[i];
      const auto& b = o.blocks[i];
      if (!(a.wq == b.wq && a.wk == b.wk && a.wv == b.wv && a.wf == b.wf && a.bf == b.bf)) {
        return false;
      }
    }
    return true;
  }
};

/// Parameter-shaped gradient accumulator.
inline EncoderParams zeros_like(const EncoderParams& p) {
  return EncoderParams::zeros(p.shape, p.pooling);
}

/// Encoder input: unpadded token ids with their segment (0 = query side,
/// 1 = document side).
struct EncoderInput {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> segments;
};

inline EncoderInput single_segment_input(const TokenSequence& seq) {
  EncoderInput in;
  const std::size_t n = seq.unpadded_length();
  in.ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(n));
  in.segments.assign(n, 0);
  return in;
}

struct BlockCache {
  Mat x;         // block input
  Mat q, k, v;   // projections
  Mat attn;      // row-softmaxed attention
  Mat h;         // post-attention residual
  Mat t;         // tanh activations
};

/// Everything the backward pass needs.
struct ForwardCache {
  EncoderInput input;
  std::vector<BlockCache> blocks;
  Mat x_final;  // n x h
  Mat out;      // n x k (token outputs Y)
};

/// Runs the encoder, returning per-token outputs (n x k) in cache.out.
inline ForwardCache encode_tokens(const EncoderParams& p, const EncoderInput& in) {
  const std::size_t n = in.ids.size();
  if (n == 0) throw Error("encode: empty sequence");
  if (in.segments.size() != n) throw Error("encode: segment/id length mismatch");
  const std::size_t h = p.shape.hidden;
  ForwardCache c;
  c.input = in;
  Mat x(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId id = in.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= p.shape.vocab_size) {
      throw Error("out-of-vocabulary id " + std::to_string(id));
    }
    const std::size_t seg = in.segments[i] ? 1 : 0;
    for (std::size_t j = 0; j < h; ++j) {
      x(i, j) = p.tok_emb(static_cast<std::size_t>(id), j) + p.seg_emb(seg, j);
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  c.blocks.resize(p.blocks.size());
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    auto& bc = c.blocks[b];
    bc.x = x;
    matmul(x, blk.wq, bc.q);
    matmul(x, blk.wk, bc.k);
    matmul(x, blk.wv, bc.v);
    matmul_nt(bc.q, bc.k, bc.attn);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = bc.attn.row(i);
      for (double& s : row) s *= scale;
      const Vec sm = stable_softmax(row);
      std::copy(sm.begin(), sm.end(), row.begin());
    }
    bc.h = x;
    matmul(bc.attn, bc.v, bc.h, /*accumulate=*/true);
    Mat u;
    matmul(bc.h, blk.wf, u);
    bc.t = Mat(n, h);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < h; ++j) bc.t(i, j) = std::tanh(u(i, j) + blk.bf(0, j));
    }
    x = bc.h;
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += bc.t.data()[i];
  }
  c.x_final = x;
  matmul(x, p.wo, c.out);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p.shape.out_dim; ++j) c.out(i, j) += p.bo(0, j);
  }
  return c;
}

/// Backpropagates d(loss)/d(token outputs) into `grad`.
inline void backward_tokens(const EncoderParams& p, const ForwardCache& c, const Mat& d_out,
                            EncoderParams& grad) {
  const std::size_t n = c.input.ids.size();
  const std::size_t h = p.shape.hidden;
  if (d_out.rows() != n || d_out.cols() != p.shape.out_dim) {
    throw Error("backward: gradient shape mismatch");
  }
  matmul_tn(c.x_final, d_out, grad.wo, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p.shape.out_dim; ++j) grad.bo(0, j) += d_out(i, j);
  }
  Mat dx;
  matmul_nt(d_out, p.wo, dx);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (std::size_t b = p.blocks.size(); b-- > 0;) {
    const auto& blk = p.blocks[b];
    const auto& bc = c.blocks[b];
    auto& g = grad.blocks[b];
    // X' = H + tanh(U)
    Mat du(n, h);
    for (std::size_t i = 0; i < du.size(); ++i) {
      const double t = bc.t.data()[i];
      du.data()[i] = dx.data()[i] * (1.0 - t * t);
    }
    matmul_tn(bc.h, du, g.wf, true);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < h; ++j) g.bf(0, j) += du(i, j);
    }
    Mat dh = dx;
    matmul_nt(du, blk.wf, dh, true);
    // H = X + A V
    Mat dattn;
    matmul_nt(dh, bc.v, dattn);
    Mat dv;
    matmul_tn(bc.attn, dh, dv);
    Mat ds(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < n; ++j) inner += dattn(i, j) * bc.attn(i, j);
      for (std::size_t j = 0; j < n; ++j) {
        ds(i, j) = bc.attn(i, j) * (dattn(i, j) - inner) * scale;
      }
    }
    Mat dq;
    matmul(ds, bc.k, dq);
    Mat dk;
    matmul_tn(ds, bc.q, dk);
    matmul_tn(bc.x, dq, g.wq, true);
    matmul_tn(bc.x, dk, g.wk, true);
    matmul_tn(bc.x, dv, g.wv, true);
    dx = dh;
    matmul_nt(dq, blk.wq, dx, true);
    matmul_nt(dk, blk.wk, dx, true);
    matmul_nt(dv, blk.wv, dx, true);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<std::size_t>(c.input.ids[i]);
    const std::size_t seg = c.input.segments[i] ? 1 : 0;
    for (std::size_t j = 0; j < h; ++j) {
      grad.tok_emb(id, j) += dx(i, j);
      grad.seg_emb(seg, j) += dx(i, j);
    }
  }
}

/// Single-sequence pooling (FirstToken is the [CLS]-pooling stand-in).
inline Vec pool_single(PoolingKind kind, const Mat& out) {
  Vec e(out.cols(), 0.0);
  switch (kind) {
    case PoolingKind::FirstToken: {
      auto r = out.row(0);
      e.assign(r.begin(), r.end());
      break;
    }
    case PoolingKind::Mean: {
      for (std::size_t i = 0; i < out.rows(); ++i) axpy(1.0, out.row(i), e);
      for (double& x : e) x /= static_cast<double>(out.rows());
      break;
    }
    default:
      throw Error("pooling kind '" + std::string(to_string(kind)) +
                  "' is only valid on joint inputs");
  }
  return e;
}

inline Mat pool_single_backward(PoolingKind kind, std::size_t n, std::span<const double> d_emb) {
  Mat d(n, d_emb.size());
  if (kind == PoolingKind::FirstToken) {
    std::copy(d_emb.begin(), d_emb.end(), d.row(0).begin());
  } else if (kind == PoolingKind::Mean) {
    for (std::size_t i = 0; i < n; ++i) axpy(1.0 / static_cast<double>(n), d_emb, d.row(i));
  } else {
    throw Error("pooling kind not valid for single sequences");
  }
  return d;
}

/// Pooled embedding of a single (non-joint) sequence.
inline Vec encode(const EncoderParams& p, const TokenSequence& seq) {
  const EncoderInput in = single_segment_input(seq);
  if (in.ids.empty()) throw Error("encode: empty sequence");
  return pool_single(p.pooling, encode_tokens(p, in).out);
}

/// Forward + cache for training.
struct PooledForward {
  ForwardCache cache;
  Vec embedding;
};

inline PooledForward encode_with_cache(const EncoderParams& p, const TokenSequence& seq) {
  PooledForward f;
  f.cache = encode_tokens(p, single_segment_input(seq));
  f.embedding = pool_single(p.pooling, f.cache.out);
  return f;
}

inline void encode_backward(const EncoderParams& p, const PooledForward& f,
                            std::span<const double> d_emb, EncoderParams& grad) {
  const Mat d = pool_single_backward(p.pooling, f.cache.input.ids.size(), d_emb);
  backward_tokens(p, f.cache, d, grad);
}

}  // namespace embedmatch

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
#include <string>
#include <vector>

#include "embedmatch/numerics.hpp"
#include "embedmatch/optim.hpp"
#include "embedmatch/text.hpp"

namespace embedmatch {

/// Denoising query autoencoder with a single latent vector.
///
/// Encoder: position-specific token tables, averaged over the M slots of the
/// padded content sequence. Decoder: one affine map per slot, greedy argmax.
struct AutoencoderParams {
  std::size_t max_len = 8;  // M: content slots, [PAD]-filled
  std::size_t latent = 64;
  std::size_t vocab_size = 0;
  Mat enc;    // (M * V) x latent; row j*V + t embeds token t at slot j
  Mat dec_w;  // (M * V) x latent
  Mat dec_b;  // M x V

  static AutoencoderParams random(std::size_t vocab_size, std::size_t max_len,
                                  std::size_t latent, Rng& rng) {
    if (vocab_size <= special::kNumReserved || max_len == 0 || latent == 0) {
      throw Error("autoencoder: invalid sizes");
    }
    AutoencoderParams p{max_len, latent, vocab_size, Mat(max_len * vocab_size, latent),
                        Mat(max_len * vocab_size, latent), Mat(max_len, vocab_size)};
    fill_normal(p.enc, rng, 1.0);
    fill_normal(p.dec_w, rng, 1.0 / std::sqrt(static_cast<double>(latent)));
    return p;
  }

  bool operator==(const AutoencoderParams&) const = default;
};

namespace detail {
/// Content tokens of a query padded/truncated to M slots.
inline std::vector<TokenId> ae_slots(const TokenSequence& x, std::size_t m) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < x.unpadded_length(); ++i) {
    const TokenId t = x.ids[i];
    if (t == special::kCls || t == special::kSep) continue;
    out.push_back(t);
  }
  out.resize(m, special::kPad);
  return out;
}

inline void ae_check_ids(const AutoencoderParams& ae, const std::vector<TokenId>& slots) {
  for (TokenId t : slots) {
    if (t < 0 || static_cast<std::size_t>(t) >= ae.vocab_size) {
      throw Error("autoencoder: out-of-vocabulary id " + std::to_string(t));
    }
  }
}
}  // namespace detail

inline Vec ae_encode(const AutoencoderParams& ae, const std::vector<TokenId>& slots) {
  detail::ae_check_ids(ae, slots);
  Vec z(ae.latent, 0.0);
  const double inv = 1.0 / static_cast<double>(ae.max_len);
  for (std::size_t j = 0; j < ae.max_len; ++j) {
    axpy(inv, ae.enc.row(j * ae.vocab_size + static_cast<std::size_t>(slots[j])), z);
  }
  return z;
}

inline Vec ae_logits(const AutoencoderParams& ae, std::span<const double> z, std::size_t slot) {
  Vec out(ae.vocab_size);
  for (std::size_t t = 0; t < ae.vocab_size; ++t) {
    out[t] = ae.dec_b(slot, t) + dot(ae.dec_w.row(slot * ae.vocab_size + t), z);
  }
  return out;
}

/// Greedy decode; stops at the first [PAD]. Returns a [CLS]-prefixed sequence.
inline TokenSequence ae_decode(const AutoencoderParams& ae, std::span<const double> z) {
  TokenSequence s;
  s.ids.push_back(special::kCls);
  for (std::size_t j = 0; j < ae.max_len; ++j) {
    const Vec l = ae_logits(ae, z, j);
    const auto best = static_cast<TokenId>(std::max_element(l.begin(), l.end()) - l.begin());
    if (best == special::kPad) break;
    s.ids.push_back(best);
  }
  return s;
}

/// Replaces each content slot by [MASK] with probability `mask_prob`.
inline std::vector<TokenId> mask_slots(std::vector<TokenId> slots, double mask_prob, Rng& rng) {
  for (auto& t : slots) {
    if (t != special::kPad && rng.uniform() < mask_prob) t = special::kMask;
  }
  return slots;
}

/// n greedy decodes of Enc(mask(x)) + eps, eps ~ N(0, sigma^2 I).
inline std::vector<TokenSequence> generate_queries(const AutoencoderParams& ae,
                                                   const TokenSequence& x, std::size_t n,
                                                   double sigma, double mask_prob,
                                                   std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error("sigma must be non-negative");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw Error("mask probability must be in [0, 1]");
  Rng rng(seed);
  const auto slots = detail::ae_slots(x, ae.max_len);
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vec z = ae_encode(ae, mask_slots(slots, mask_prob, rng));
    for (double& v : z) v += sigma * rng.normal();
    out.push_back(ae_decode(ae, z));
  }
  return out;
}

struct RoundTripStats {
  double exact = 0.0;     // fraction of queries reproduced exactly
  double token = 0.0;     // per-slot accuracy, [PAD] slots included
};

inline RoundTripStats round_trip_accuracy(const AutoencoderParams& ae,
                                          const std::vector<TokenSequence>& queries) {
  RoundTripStats st;
  if (queries.empty()) return st;
  double slots_ok = 0.0;
  for (const auto& q : queries) {
    const auto want = detail::ae_slots(q, ae.max_len);
    const auto got = detail::ae_slots(ae_decode(ae, ae_encode(ae, want)), ae.max_len);
    if (got == want) st.exact += 1.0;
    for (std::size_t j = 0; j < ae.max_len; ++j) slots_ok += got[j] == want[j] ? 1.0 : 0.0;
  }
  st.exact /= static_cast<double>(queries.size());
  st.token = slots_ok / static_cast<double>(queries.size() * ae.max_len);
  return st;
}

struct AutoencoderConfig {
  std::size_t max_len = 8;
  std::size_t latent = 64;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double lr = 1e-2;
  double train_sigma = 0.1;  // latent noise during training
  double train_mask = 0.1;   // input masking during training
  std::uint64_t seed = 0;
};

struct AutoencoderRun {
  AutoencoderParams params;
  std::vector<double> epoch_loss;
  std::vector<RoundTripStats> epoch_accuracy;  // clean round trip after each epoch
};

/// Mean per-slot cross-entropy of reconstructing the clean slots.
inline double ae_loss(const AutoencoderParams& ae, const std::vector<TokenId>& input,
                      const std::vector<TokenId>& target, std::span<const double> noise,
                      AutoencoderParams* grad) {
  Vec z = ae_encode(ae, input);
  if (!noise.empty()) axpy(1.0, noise, z);
  const double inv_m = 1.0 / static_cast<double>(ae.max_len);
  double loss = 0.0;
  Vec dz(ae.latent, 0.0);
  for (std::size_t j = 0; j < ae.max_len; ++j) {
    const Vec l = ae_logits(ae, z, j);
    const auto y = static_cast<std::size_t>(target[j]);
    loss += inv_m * (log_sum_exp(l) - l[y]);
    if (grad == nullptr) continue;
    Vec p = stable_softmax(l);
    p[y] -= 1.0;
    for (std::size_t t = 0; t < ae.vocab_size; ++t) {
      const double g = inv_m * p[t];
      grad->dec_b(j, t) += g;
      axpy(g, z, grad->dec_w.row(j * ae.vocab_size + t));
      axpy(g, ae.dec_w.row(j * ae.vocab_size + t), dz);
    }
  }
  if (grad != nullptr) {
    for (std::size_t j = 0; j < ae.max_len; ++j) {
      axpy(inv_m, dz, grad->enc.row(j * ae.vocab_size + static_cast<std::size_t>(input[j])));
    }
  }
  return loss;
}

inline AutoencoderRun train_autoencoder(const std::vector<TokenSequence>& queries,
                                        std::size_t vocab_size, const AutoencoderConfig& cfg) {
  if (queries.size() < 100) throw Error("autoencoder needs at least 100 queries");
  Rng init_rng(derive_seed(cfg.seed, "init"));
  Rng rng(derive_seed(cfg.seed, "augmentation"));
  AutoencoderRun run{AutoencoderParams::random(vocab_size, cfg.max_len, cfg.latent, init_rng), {},
                     {}};
  auto& ae = run.params;
  std::vector<std::vector<TokenId>> slots;
  for (const auto& q : queries) {
    slots.push_back(detail::ae_slots(q, cfg.max_len));
    detail::ae_check_ids(ae, slots.back());
  }
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  AutoencoderParams grad{ae.max_len, ae.latent, ae.vocab_size, Mat(ae.enc.rows(), ae.latent),
                         Mat(ae.dec_w.rows(), ae.latent), Mat(ae.max_len, ae.vocab_size)};
  std::vector<std::size_t> order(slots.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Vec noise(ae.latent);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      for (Mat* m : {&grad.enc, &grad.dec_w, &grad.dec_b}) {
        std::fill(m->data().begin(), m->data().end(), 0.0);
      }
      for (std::size_t i = b; i < e; ++i) {
        const auto& target = slots[order[i]];
        const auto input = mask_slots(target, cfg.train_mask, rng);
        for (double& v : noise) v = cfg.train_sigma * rng.normal();
        total += ae_loss(ae, input, target, noise, &grad);
      }
      const double inv = 1.0 / static_cast<double>(e - b);
      for (Mat* m : {&grad.enc, &grad.dec_w, &grad.dec_b}) {
        for (double& v : m->data()) v *= inv;
      }
      opt.step({{&ae.enc, &grad.enc, false}, {&ae.dec_w, &grad.dec_w, false},
                {&ae.dec_b, &grad.dec_b, false}},
               cfg.lr);
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean)) {
      throw Error("autoencoder training diverged at epoch " + std::to_string(epoch));
    }
    run.epoch_loss.push_back(mean);
    run.epoch_accuracy.push_back(round_trip_accuracy(ae, queries));
  }
  return run;
}

}  // namespace embedmatch

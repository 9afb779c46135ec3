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
// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "embedmatch/pipeline.hpp"

namespace emtest {

using namespace embedmatch;

inline Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<int> random_onehot(Rng& rng, std::size_t n) {
  std::vector<int> y(n, 0);
  y[rng.below(n)] = 1;
  return y;
}

/// Flattens every matrix of an encoder (in for_each order).
inline Vec flatten(const EncoderParams& p) {
  Vec out;
  p.for_each([&](const std::string&, const Mat& m) {
    out.insert(out.end(), m.data().begin(), m.data().end());
  });
  return out;
}

inline void unflatten(std::span<const double> v, EncoderParams& p) {
  std::size_t at = 0;
  p.for_each([&](const std::string&, Mat& m) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(at), m.size(), m.data().begin());
    at += m.size();
  });
}

inline void append(Vec& out, const Mat& m) { out.insert(out.end(), m.data().begin(), m.data().end()); }

inline void read_into(std::span<const double> v, std::size_t& at, Mat& m) {
  std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(at), m.size(), m.data().begin());
  at += m.size();
}

inline TokenSequence random_sequence(Rng& rng, std::size_t vocab, std::size_t len) {
  TokenSequence s;
  s.ids.push_back(special::kCls);
  for (std::size_t i = 0; i < len; ++i) {
    s.ids.push_back(static_cast<TokenId>(special::kNumReserved +
                                         rng.below(vocab - special::kNumReserved)));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Loss gradient checks (one random instance per call)
// ---------------------------------------------------------------------------

/// Worst relative error of each loss on one random instance.
inline std::map<std::string, double> loss_grad_errors(Rng& rng, double eps = 1e-5) {
  std::map<std::string, double> worst;
  const std::size_t n = 2 + rng.below(7);
  const Vec s = random_vec(rng, n, 2.0);
  const Vec t = random_vec(rng, n, 2.0);
  const auto y = random_onehot(rng, n);
  const double temp = 0.5 + 2.0 * rng.uniform();

  auto score_loss = [&](const std::string& name, auto fn) {
    worst[name] = grad_check(
        [&](std::span<const double> x, Vec& g) {
          const LossOutput o = fn(x);
          g = o.grad;
          return o.value;
        },
        s, eps);
  };
  score_loss("softmax_ce_onehot", [&](std::span<const double> x) { return softmax_ce_onehot(x, y); });
  score_loss("binary_ce_onehot", [&](std::span<const double> x) { return binary_ce_onehot(x, y); });
  score_loss("softmax_ce_distill",
             [&](std::span<const double> x) { return softmax_ce_distill(x, t, temp); });
  score_loss("binary_ce_distill", [&](std::span<const double> x) { return binary_ce_distill(x, t); });
  score_loss("mse_distill", [&](std::span<const double> x) { return mse_distill(x, t); });

  // Embedding matching: gradient w.r.t. student embeddings and projection.
  {
    const std::size_t pairs = 1 + rng.below(4), in = 2 + rng.below(4), out = 2 + rng.below(4);
    std::vector<Vec> teacher, student;
    for (std::size_t i = 0; i < pairs; ++i) {
      teacher.push_back(random_vec(rng, out));
      student.push_back(random_vec(rng, in));
    }
    Projection proj = Affine::zeros(in, out);
    for (double& x : proj.w.data()) x = rng.normal();
    for (double& x : proj.b.data()) x = rng.normal();
    for (bool squared : {false, true}) {
      Vec params;
      for (const auto& v : student) params.insert(params.end(), v.begin(), v.end());
      append(params, proj.w);
      append(params, proj.b);
      const double e = grad_check(
          [&](std::span<const double> x, Vec& g) {
            std::vector<Vec> st(pairs, Vec(in));
            std::size_t at = 0;
            for (auto& v : st) {
              std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(at), in, v.begin());
              at += in;
            }
            Projection p = proj;
            read_into(x, at, p.w);
            read_into(x, at, p.b);
            const auto o = embed_match_loss(teacher, st, p, squared);
            g.clear();
            for (const auto& v : o.grad_student) g.insert(g.end(), v.begin(), v.end());
            append(g, o.grad_projection.w);
            append(g, o.grad_projection.b);
            return o.value;
          },
          params, eps);
      worst[squared ? "embed_match_squared" : "embed_match"] = e;
    }
  }

  // Reconstruction: gradient w.r.t. token embeddings and decoder.
  {
    const std::size_t len = 1 + rng.below(5), k = 2 + rng.below(3), vocab = 8;
    TokenSequence original = random_sequence(rng, vocab, len);
    Mat embs(original.size(), k);
    for (double& x : embs.data()) x = rng.normal();
    Affine dec = Affine::zeros(k, vocab);
    for (double& x : dec.w.data()) x = rng.normal();
    for (double& x : dec.b.data()) x = rng.normal();
    Vec params;
    append(params, embs);
    append(params, dec.w);
    append(params, dec.b);
    worst["reconstruction"] = grad_check(
        [&](std::span<const double> x, Vec& g) {
          Mat e(embs.rows(), k);
          Affine d = dec;
          std::size_t at = 0;
          read_into(x, at, e);
          read_into(x, at, d.w);
          read_into(x, at, d.b);
          const auto o = reconstruction_loss(e, original, d);
          g.clear();
          append(g, o.grad_embs);
          append(g, o.grad_decoder.w);
          append(g, o.grad_decoder.b);
          return o.value;
        },
        params, eps);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Definitional metric oracles (written independently of the library)
// ---------------------------------------------------------------------------

/// 1-based rank of the first golden document, or 0 when absent.
inline std::size_t first_hit(const std::vector<std::size_t>& ranked, const std::set<std::size_t>& g) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (g.count(ranked[i])) return i + 1;
  }
  return 0;
}

inline double oracle_recall(const std::vector<std::vector<std::size_t>>& lists,
                            const std::vector<std::set<std::size_t>>& golden, std::size_t k) {
  double s = 0.0;
  for (std::size_t q = 0; q < lists.size(); ++q) {
    const std::size_t r = first_hit(lists[q], golden[q]);
    s += (r != 0 && r <= k) ? 1.0 : 0.0;
  }
  return s / static_cast<double>(lists.size());
}

inline double oracle_mrr10(const std::vector<std::vector<std::size_t>>& lists,
                           const std::vector<std::set<std::size_t>>& golden) {
  double s = 0.0;
  for (std::size_t q = 0; q < lists.size(); ++q) {
    const std::size_t r = first_hit(lists[q], golden[q]);
    if (r != 0 && r <= 10) s += 1.0 / static_cast<double>(r);
  }
  return 100.0 * s / static_cast<double>(lists.size());
}

inline double oracle_ndcg10(const std::vector<std::vector<std::size_t>>& lists,
                            const std::vector<std::set<std::size_t>>& golden) {
  double s = 0.0;
  for (std::size_t q = 0; q < lists.size(); ++q) {
    double dcg = 0.0, ideal = 0.0;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, lists[q].size()); ++i) {
      if (golden[q].count(lists[q][i])) dcg += std::log(2.0) / std::log(static_cast<double>(i) + 2.0);
    }
    for (std::size_t i = 0; i < std::min<std::size_t>(10, golden[q].size()); ++i) {
      ideal += std::log(2.0) / std::log(static_cast<double>(i) + 2.0);
    }
    s += dcg / ideal;
  }
  return 100.0 * s / static_cast<double>(lists.size());
}

// ---------------------------------------------------------------------------
// Bound oracles
// ---------------------------------------------------------------------------

/// Random teacher and student dual encoders embedding a random n-pair sample.
/// Roughly a third of the students have a smaller width and are projected.
inline EmbeddedSample random_bound_triple(Rng& rng, std::size_t n) {
  const std::size_t vocab = 30;
  const EncoderShape ts{.vocab_size = vocab, .hidden = 6, .out_dim = 4, .blocks = 1};
  EncoderShape ss = ts;
  const bool narrow = rng.below(3) == 0;
  if (narrow) ss.hidden = ss.out_dim = 2;
  const DEModel teacher = DEModel::random(ts, PoolingKind::Mean, rng.below(2) == 0, rng);
  const DEModel student = DEModel::random(ss, PoolingKind::FirstToken, false, rng);
  const Projection proj = make_projection(ss.out_dim, ts.out_dim, rng);
  std::vector<TokenSequence> queries, docs;
  PairSample s;
  for (std::size_t i = 0; i < n; ++i) {
    queries.push_back(random_sequence(rng, vocab, 1 + rng.below(4)));
    docs.push_back(random_sequence(rng, vocab, 2 + rng.below(6)));
    s.queries.push_back(i);
    s.docs.push_back(i);
    s.y.push_back(static_cast<int>(rng.below(2)));
  }
  // Scale the teacher so that scores span a useful range.
  EmbeddedSample e = embed_sample(teacher, student, s, queries, docs, &proj);
  const double scale = 0.5 + 3.0 * rng.uniform();
  for (auto* g : {&e.tq, &e.td}) {
    for (auto& v : *g) {
      for (double& x : v) x *= scale;
    }
  }
  return e;
}

struct BoundSides {
  double lhs4, rhs4, lhs5, rhs5;
};

/// Both lemmas evaluated from their definitions with naive loops.
inline BoundSides bound_oracle(const EmbeddedSample& e) {
  const std::size_t n = e.y.size();
  double K = 0.0;
  for (const auto* g : {&e.tq, &e.td, &e.sq, &e.sd}) {
    for (const auto& v : *g) {
      double ss = 0.0;
      for (double x : v) ss += x * x;
      K = std::max(K, std::sqrt(ss));
    }
  }
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  // -log sigmoid(x), written to survive large |x|; -log(1 - sigmoid(x)) = nls(-x).
  auto nls = [](double x) {
    return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
  };
  auto dist = [](const Vec& a, const Vec& b) {
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(ss);
  };
  double distill = 0.0, t_onehot = 0.0, s_onehot = 0.0, dq = 0.0, dd = 0.0, lab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0, t = 0.0;
    for (std::size_t c = 0; c < e.sq[i].size(); ++c) s += e.sq[i][c] * e.sd[i][c];
    for (std::size_t c = 0; c < e.tq[i].size(); ++c) t += e.tq[i][c] * e.td[i][c];
    const double pt = sig(t);
    distill += pt * nls(s) + (1.0 - pt) * nls(-s);
    t_onehot += e.y[i] ? nls(t) : nls(-t);
    s_onehot += e.y[i] ? nls(s) : nls(-s);
    dq += dist(e.sq[i], e.tq[i]);
    dd += dist(e.sd[i], e.td[i]);
    lab += std::abs(pt - e.y[i]);
  }
  const double m = static_cast<double>(n);
  return {distill / m - t_onehot / m, 2 * K * dq / m + 2 * K * dd / m + K * K * lab / m,
          s_onehot / m - distill / m, K * K * lab / m};
}

// ---------------------------------------------------------------------------
// Small, fast experiment configs
// ---------------------------------------------------------------------------

/// A tiny end-to-end config for unit and CLI tests (seconds, not minutes).
inline ExperimentConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 0) {
  ExperimentConfig c;
  c.seed = seed;
  c.output_dir = out_dir;
  c.corpus.topics = 3;
  c.corpus.docs_per_topic = 10;
  c.corpus.queries_per_topic = 40;  // the autoencoder wants >= 100 train queries
  c.corpus.vocab_size = 80;
  c.corpus.eval_queries = 9;
  c.corpus.pretrain_queries_per_topic = 10;
  c.negatives_per_example = 3;
  c.teacher.hidden = c.teacher.out_dim = 8;
  c.teacher_train.steps = 40;
  c.teacher_train.batch_size = 8;
  c.student.hidden = c.student.out_dim = 4;
  c.student_train.steps = 30;
  c.student_train.batch_size = 8;
  c.augment.ae.epochs = 3;
  c.augment.ae.latent = 8;
  c.retrieval_depth = 20;
  c.rerank_candidates = 10;
  return c;
}

}  // namespace emtest

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
#include <span>
#include <string>
#include <vector>

#include "embedmatch/models.hpp"
#include "embedmatch/numerics.hpp"

namespace embedmatch {

/// Loss value plus gradient with respect to the (student) scores.
struct LossOutput {
  double value = 0.0;
  Vec grad;
};

namespace detail {
inline void check_labels(std::span<const double> s, std::span<const int> y) {
  if (s.size() != y.size()) throw Error("length mismatch between scores and labels");
  if (s.empty()) throw Error("empty score list");
  for (int v : y) {
    if (v != 0 && v != 1) throw Error("labels must be 0 or 1");
  }
}
inline void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("length mismatch between student and teacher scores");
  if (a.empty()) throw Error("empty score list");
}
}  // namespace detail

/// -sum_j y_j log softmax(s)_j
inline LossOutput softmax_ce_onehot(std::span<const double> s, std::span<const int> y) {
  detail::check_labels(s, y);
  double npos = 0.0;
  for (int v : y) npos += v;
  if (npos == 0.0) throw Error("no positive");
  const double lse = log_sum_exp(s);
  const Vec p = stable_softmax(s);
  LossOutput out;
  out.grad.resize(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (y[j]) out.value -= s[j] - lse;
    out.grad[j] = npos * p[j] - y[j];
  }
  return out;
}

/// One-vs-all binary cross-entropy, using log(1 - sigma(s)) = -softplus(s).
inline LossOutput binary_ce_onehot(std::span<const double> s, std::span<const int> y) {
  detail::check_labels(s, y);
  LossOutput out;
  out.grad.resize(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    out.value += y[j] ? softplus(-s[j]) : softplus(s[j]);
    out.grad[j] = sigmoid(s[j]) - y[j];
  }
  return out;
}

/// Cross-entropy of softmax(s_student/T) against softmax(s_teacher/T).
inline LossOutput softmax_ce_distill(std::span<const double> student,
                                     std::span<const double> teacher, double temperature = 1.0) {
  detail::check_pair(student, teacher);
  if (!(temperature > 0.0)) throw Error("temperature must be positive");
  Vec ss(student.begin(), student.end()), ts(teacher.begin(), teacher.end());
  for (double& x : ss) x /= temperature;
  for (double& x : ts) x /= temperature;
  const Vec target = stable_softmax(ts);
  const Vec p = stable_softmax(ss);
  const double lse = log_sum_exp(ss);
  LossOutput out;
  out.grad.resize(student.size());
  for (std::size_t j = 0; j < student.size(); ++j) {
    out.value -= target[j] * (ss[j] - lse);
    out.grad[j] = (p[j] - target[j]) / temperature;
  }
  return out;
}

/// -sum_j [sigma(t_j) log sigma(s_j) + (1 - sigma(t_j)) log(1 - sigma(s_j))]
inline LossOutput binary_ce_distill(std::span<const double> student,
                                    std::span<const double> teacher) {
  detail::check_pair(student, teacher);
  LossOutput out;
  out.grad.resize(student.size());
  for (std::size_t j = 0; j < student.size(); ++j) {
    const double pt = sigmoid(teacher[j]);
    const double qt = sigmoid(-teacher[j]);  // 1 - pt without cancellation
    out.value += pt * softplus(-student[j]) + qt * softplus(student[j]);
    out.grad[j] = sigmoid(student[j]) - pt;
  }
  return out;
}

/// sum_j (t_j - s_j)^2
inline LossOutput mse_distill(std::span<const double> student, std::span<const double> teacher) {
  detail::check_pair(student, teacher);
  LossOutput out;
  out.grad.resize(student.size());
  for (std::size_t j = 0; j < student.size(); ++j) {
    const double d = teacher[j] - student[j];
    out.value += d * d;
    out.grad[j] = -2.0 * d;
  }
  return out;
}

enum class DistillLoss { SoftmaxCE, BinaryCE, MSE };

inline std::string_view to_string(DistillLoss l) {
  switch (l) {
    case DistillLoss::SoftmaxCE: return "softmax_ce";
    case DistillLoss::BinaryCE: return "binary_ce";
    case DistillLoss::MSE: return "mse";
  }
  return "?";
}

inline DistillLoss distill_loss_from_string(std::string_view s) {
  if (s == "softmax_ce") return DistillLoss::SoftmaxCE;
  if (s == "binary_ce") return DistillLoss::BinaryCE;
  if (s == "mse") return DistillLoss::MSE;
  throw Error("unknown distillation loss '" + std::string(s) + "'");
}

inline LossOutput score_distill(DistillLoss kind, std::span<const double> student,
                                std::span<const double> teacher, double temperature) {
  switch (kind) {
    case DistillLoss::SoftmaxCE: return softmax_ce_distill(student, teacher, temperature);
    case DistillLoss::BinaryCE: return binary_ce_distill(student, teacher);
    case DistillLoss::MSE: return mse_distill(student, teacher);
  }
  throw Error("unknown distillation loss");
}

// ---------------------------------------------------------------------------
// Embedding matching
// ---------------------------------------------------------------------------

struct EmbedMatchOutput {
  double value = 0.0;
  std::vector<Vec> grad_student;  // d/d(student embedding), one per pair
  Projection grad_projection;
};

/// (1/n) sum_i ||teacher_i - proj(student_i)||, or its squared variant.
/// The norm's subgradient at zero is taken as zero.
inline EmbedMatchOutput embed_match_loss(const std::vector<Vec>& teacher,
                                         const std::vector<Vec>& student, const Projection& p,
                                         bool squared = false) {
  if (teacher.size() != student.size()) throw Error("embedding count mismatch");
  EmbedMatchOutput out;
  out.grad_projection = Affine::zeros(p.in_dim(), p.out_dim());
  out.grad_student.resize(student.size());
  if (teacher.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(teacher.size());
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const Vec ps = p.apply(student[i]);
    if (ps.size() != teacher[i].size()) throw Error("projected dimension mismatch");
    Vec diff(ps.size());
    for (std::size_t j = 0; j < ps.size(); ++j) diff[j] = ps[j] - teacher[i][j];
    const double dist = norm2(diff);
    Vec d_ps(ps.size(), 0.0);
    if (squared) {
      out.value += inv_n * dist * dist;
      for (std::size_t j = 0; j < ps.size(); ++j) d_ps[j] = 2.0 * inv_n * diff[j];
    } else {
      out.value += inv_n * dist;
      if (dist > 0.0) {
        for (std::size_t j = 0; j < ps.size(); ++j) d_ps[j] = inv_n * diff[j] / dist;
      }
    }
    out.grad_student[i] = p.backward(student[i], d_ps, out.grad_projection);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

struct ReconstructionOutput {
  double value = 0.0;
  Mat grad_embs;
  Affine grad_decoder;
};

/// Mean over positions of softmax CE between decoder(emb_pos) and the
/// original token at that position (specials included).
inline ReconstructionOutput reconstruction_loss(const Mat& final_token_embs,
                                                const TokenSequence& original,
                                                const Affine& decoder) {
  const std::size_t n = original.unpadded_length();
  if (final_token_embs.rows() != n) {
    throw Error("reconstruction: " + std::to_string(final_token_embs.rows()) +
                " embedding rows for " + std::to_string(n) + " positions");
  }
  if (n == 0) throw Error("reconstruction: empty sequence");
  ReconstructionOutput out;
  out.grad_embs = Mat(n, final_token_embs.cols());
  out.grad_decoder = Affine::zeros(decoder.in_dim(), decoder.out_dim());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto target = static_cast<std::size_t>(original.ids[i]);
    if (target >= decoder.out_dim()) throw Error("out-of-vocabulary id in reconstruction");
    const Vec logits = decoder.apply(final_token_embs.row(i));
    Vec p = stable_softmax(logits);
    out.value += inv_n * (log_sum_exp(logits) - logits[target]);
    p[target] -= 1.0;
    for (double& x : p) x *= inv_n;
    const Vec dx = decoder.backward(final_token_embs.row(i), p, out.grad_decoder);
    axpy(1.0, dx, out.grad_embs.row(i));
  }
  return out;
}

}  // namespace embedmatch

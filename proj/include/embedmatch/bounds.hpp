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
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "embedmatch/datasim.hpp"
#include "embedmatch/losses.hpp"
#include "embedmatch/models.hpp"

namespace embedmatch {

inline constexpr double kBoundSlack = 1e-9;

/// Teacher (F, G) and student (f, g) embeddings of a labeled pair sample.
struct EmbeddedSample {
  std::vector<Vec> tq, td;  // F(q_i), G(d_i)
  std::vector<Vec> sq, sd;  // f(q_i), g(d_i), projected when dimensions differ
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  void validate() const {
    const std::size_t n = y.size();
    if (n == 0) throw Error("empty sample");
    if (tq.size() != n || td.size() != n || sq.size() != n || sd.size() != n) {
      throw Error("sample arrays have inconsistent lengths");
    }
    for (int v : y) {
      if (v != 0 && v != 1) throw Error("labels must be 0 or 1");
    }
  }
};

/// A labeled sample of single-document examples.
struct PairSample {
  std::vector<std::size_t> queries, docs;
  std::vector<int> y;

  static PairSample from_examples(const std::vector<TrainingExample>& examples) {
    PairSample s;
    for (const auto& ex : examples) {
      if (ex.docs.size() != 1) throw Error("lemma requires single-document examples");
      s.queries.push_back(ex.query);
      s.docs.push_back(ex.docs[0]);
      s.y.push_back(ex.labels[0]);
    }
    return s;
  }
};

/// Embeds a pair sample with a teacher and a student dual encoder. When the
/// student's dimension differs from the teacher's, both student towers are
/// passed through `proj` and `projected` is set.
inline EmbeddedSample embed_sample(const DEModel& teacher, const DEModel& student,
                                   const PairSample& s, const std::vector<TokenSequence>& queries,
                                   const std::vector<TokenSequence>& docs,
                                   const Projection* proj, bool* projected = nullptr) {
  const bool use_proj =
      teacher.query.shape.out_dim != student.query.shape.out_dim && proj != nullptr;
  if (teacher.query.shape.out_dim != student.query.shape.out_dim && proj == nullptr) {
    throw Error("student and teacher dimensions differ: a projection is required");
  }
  if (projected) *projected = use_proj;
  EmbeddedSample e;
  e.y = s.y;
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    const auto& q = queries.at(s.queries[i]);
    const auto& d = docs.at(s.docs[i]);
    e.tq.push_back(encode(teacher.query_encoder(), q));
    e.td.push_back(encode(teacher.doc_encoder(), d));
    Vec fq = encode(student.query_encoder(), q);
    Vec gd = encode(student.doc_encoder(), d);
    e.sq.push_back(use_proj ? project(*proj, fq) : fq);
    e.sd.push_back(use_proj ? project(*proj, gd) : gd);
  }
  return e;
}

/// Largest embedding norm among the four encoders over the sample.
inline double compute_K(const EmbeddedSample& e) {
  e.validate();
  double k = 0.0;
  for (const auto* group : {&e.tq, &e.td, &e.sq, &e.sd}) {
    for (const auto& v : *group) k = std::max(k, norm2(v));
  }
  return k;
}

struct BoundReport {
  std::string kind;
  std::size_t n = 0;
  double K = 0.0;
  double lhs = 0.0;
  double term_emb_q = 0.0;
  double term_emb_d = 0.0;
  double term_label = 0.0;
  double rhs = 0.0;
  bool verdict = false;
  bool projected_student = false;
  // theorem-level terms
  std::optional<double> r_emb_q, r_emb_d;
  std::optional<double> delta_teacher_estimate;
  std::optional<double> teacher_error_train, teacher_error_heldout;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["kind"] = kind;
    j["n"] = n;
    j["K"] = K;
    j["lhs"] = lhs;
    j["term_emb_q"] = term_emb_q;
    j["term_emb_d"] = term_emb_d;
    j["term_label"] = term_label;
    j["rhs"] = rhs;
    j["slack"] = kBoundSlack;
    j["verdict"] = verdict;
    j["projected_student"] = projected_student;
    if (projected_student) {
      j["note"] = "student embeddings projected to the teacher dimension";
    }
    if (r_emb_q) j["r_emb_q"] = *r_emb_q;
    if (r_emb_d) j["r_emb_d"] = *r_emb_d;
    if (delta_teacher_estimate) {
      j["delta_teacher_estimate"] = *delta_teacher_estimate;
      j["delta_teacher_note"] = "estimate: |train risk - held-out risk| of the teacher";
    }
    if (teacher_error_train) j["teacher_error_train"] = *teacher_error_train;
    if (teacher_error_heldout) j["teacher_error_heldout"] = *teacher_error_heldout;
    if (kind == "theorem1") j["uniform_deviation"] = "not computable";
    return j;
  }
};

namespace detail {
inline double mean_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += distance(a[i], b[i]);
  return s / static_cast<double>(a.size());
}
inline double mean_label_error(const EmbeddedSample& e) {
  double s = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) s += std::abs(sigmoid(dot(e.tq[i], e.td[i])) - e.y[i]);
  return s / static_cast<double>(e.size());
}
/// Binary CE of scores against labels, averaged.
inline double mean_onehot_risk(const std::vector<double>& s, const std::vector<int>& y) {
  return binary_ce_onehot(s, y).value / static_cast<double>(s.size());
}
inline std::vector<double> scores(const std::vector<Vec>& q, const std::vector<Vec>& d) {
  std::vector<double> out;
  for (std::size_t i = 0; i < q.size(); ++i) out.push_back(dot(q[i], d[i]));
  return out;
}
}  // namespace detail

/// Binary-CE distillation risk of the student minus the teacher's one-hot
/// risk, against its embedding-misalignment + teacher-error bound.
inline BoundReport lemma4_check(const EmbeddedSample& e) {
  e.validate();
  BoundReport r;
  r.kind = "lemma4";
  r.n = e.size();
  r.K = compute_K(e);
  const auto ss = detail::scores(e.sq, e.sd);
  const auto ts = detail::scores(e.tq, e.td);
  const double n = static_cast<double>(r.n);
  r.lhs = binary_ce_distill(ss, ts).value / n - detail::mean_onehot_risk(ts, e.y);
  r.term_emb_q = 2.0 * r.K * detail::mean_distance(e.sq, e.tq);
  r.term_emb_d = 2.0 * r.K * detail::mean_distance(e.sd, e.td);
  r.term_label = r.K * r.K * detail::mean_label_error(e);
  r.rhs = r.term_emb_q + r.term_emb_d + r.term_label;
  r.verdict = r.lhs <= r.rhs + kBoundSlack;
  return r;
}

/// Student one-hot risk minus its distillation risk, against K^2 times the
/// teacher's mean label error.
inline BoundReport lemma5_check(const EmbeddedSample& e) {
  e.validate();
  BoundReport r;
  r.kind = "lemma5";
  r.n = e.size();
  r.K = compute_K(e);
  const auto ss = detail::scores(e.sq, e.sd);
  const auto ts = detail::scores(e.tq, e.td);
  const double n = static_cast<double>(r.n);
  r.lhs = detail::mean_onehot_risk(ss, e.y) - binary_ce_distill(ss, ts).value / n;
  r.term_label = r.K * r.K * detail::mean_label_error(e);
  r.rhs = r.term_label;
  r.verdict = r.lhs <= r.rhs + kBoundSlack;
  return r;
}

/// Computable terms of the teacher-student gap bound. The lemma4 fields
/// are filled from the training sample.
inline BoundReport theorem1_terms(const EmbeddedSample& train, const EmbeddedSample& heldout) {
  heldout.validate();
  BoundReport r = lemma4_check(train);
  r.kind = "theorem1";
  r.r_emb_q = detail::mean_distance(train.sq, train.tq);
  r.r_emb_d = detail::mean_distance(train.sd, train.td);
  const double train_risk =
      detail::mean_onehot_risk(detail::scores(train.tq, train.td), train.y);
  const double held_risk =
      detail::mean_onehot_risk(detail::scores(heldout.tq, heldout.td), heldout.y);
  r.delta_teacher_estimate = std::abs(train_risk - held_risk);
  r.teacher_error_train = r.K * r.K * detail::mean_label_error(train);
  r.teacher_error_heldout = r.K * r.K * detail::mean_label_error(heldout);
  return r;
}

/// ||t_i - t_j|| - ||s_i - s_j|| for every unordered pair i < j.
inline std::vector<double> pairwise_discrepancy(const std::vector<Vec>& teacher,
                                                const std::vector<Vec>& student) {
  if (teacher.size() != student.size()) throw Error("embedding count mismatch");
  if (teacher.size() < 2) throw Error("pairwise discrepancy needs at least 2 queries");
  std::vector<double> out;
  out.reserve(teacher.size() * (teacher.size() - 1) / 2);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    for (std::size_t j = i + 1; j < teacher.size(); ++j) {
      out.push_back(distance(teacher[i], teacher[j]) - distance(student[i], student[j]));
    }
  }
  return out;
}

inline double mean_abs(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s / static_cast<double>(v.size());
}

}  // namespace embedmatch

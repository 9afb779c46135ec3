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

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "embedmatch/datasim.hpp"
#include "embedmatch/losses.hpp"
#include "embedmatch/models.hpp"
#include "embedmatch/optim.hpp"
#include "embedmatch/retrieval.hpp"

namespace embedmatch {

/// Corpus tokenized once against a shared vocabulary.
struct TokenizedData {
  Vocab vocab;
  std::vector<TokenSequence> docs;     // [CLS] + tokens
  std::vector<TokenSequence> queries;  // [CLS] + tokens
  std::size_t max_len = 32;            // joint-input limit for cross encoders

  static TokenizedData from_corpus(const Corpus& c, std::size_t max_len = 32) {
    TokenizedData t;
    t.vocab = Vocab::from_texts(c.all_texts());
    t.max_len = max_len;
    for (const auto& d : c.docs) t.docs.push_back(tokenize(d.text, t.vocab, true, max_len));
    for (const auto& q : c.queries) t.queries.push_back(tokenize(q.text, t.vocab, true, max_len));
    return t;
  }
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class StudentMode { Symmetric, AsymmetricInheritDocs };

struct StudentConfig {
  StudentMode mode = StudentMode::Symmetric;
  std::size_t hidden = 16;
  std::size_t out_dim = 16;
  std::size_t blocks = 1;
  bool shared_towers = false;
  PoolingKind pooling = PoolingKind::FirstToken;
};

struct LossWeights {
  double onehot = 1.0;
  double score_distill = 1.0;
  DistillLoss distill_kind = DistillLoss::SoftmaxCE;
  double embed_q = 0.0;
  double embed_d = 0.0;
  double recon = 0.0;  // cross-encoder teachers only
  bool squared_embed = false;

  void validate() const {
    for (double w : {onehot, score_distill, embed_q, embed_d, recon}) {
      if (!(w >= 0.0)) throw Error("loss weights must be non-negative");
    }
    if (onehot + score_distill + embed_q + embed_d + recon <= 0.0) {
      throw Error("at least one loss weight must be positive");
    }
  }
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t steps = 1000;
  double peak_lr = 1e-3;
  double warmup_fraction = 0.05;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool in_batch_negatives = false;
  std::size_t eval_every = 0;  // 0 disables periodic evaluation

  ScheduleConfig schedule() const { return {steps, peak_lr, warmup_fraction}; }
};

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  double onehot = 0.0;
  double distill = 0.0;
  double embed_q = 0.0;
  double embed_q_aug = 0.0;
  double embed_d = 0.0;
  double recon = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<std::pair<std::size_t, std::map<std::string, double>>> evals;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "step,lr,total,onehot,distill,embed_q,embed_q_aug,embed_d,recon\n";
    for (const auto& r : steps) {
      os << r.step << ',' << r.lr << ',' << r.total << ',' << r.onehot << ',' << r.distill << ','
         << r.embed_q << ',' << r.embed_q_aug << ',' << r.embed_d << ',' << r.recon << '\n';
    }
    return os.str();
  }
};

using EvalHook = std::function<std::map<std::string, double>()>;

// ---------------------------------------------------------------------------
// Frozen teacher view
// ---------------------------------------------------------------------------

/// Read-only access to a trained teacher's scores and embeddings, memoized.
class Teacher {
 public:
  static Teacher from_de(const DEModel& de, const TokenizedData& data) {
    Teacher t;
    t.de_ = std::make_shared<DEModel>(de);
    t.data_ = &data;
    t.dim_ = de.query.shape.out_dim;
    return t;
  }

  static Teacher from_ce(const CEModel& ce, const TokenizedData& data) {
    Teacher t;
    t.ce_ = std::make_shared<CEModel>(ce);
    t.data_ = &data;
    t.dim_ = ce.encoder.shape.out_dim;
    return t;
  }

  bool is_cross_encoder() const { return ce_ != nullptr; }
  bool has_embeddings() const { return de_ != nullptr || ce_->is_dual(); }
  std::size_t dim() const { return dim_; }
  const DEModel* de() const { return de_.get(); }
  const CEModel* ce() const { return ce_.get(); }

  double score(std::size_t q, std::size_t d) const {
    const auto key = pair_key(q, d);
    if (auto it = scores_.find(key); it != scores_.end()) return it->second;
    double s;
    if (de_) {
      s = dot(query_embedding(q, d), doc_embedding(d));
    } else {
      s = ce_forward(*ce_, build_joint_input(data_->queries[q], data_->docs[d], false,
                                             data_->max_len))
              .score;
    }
    scores_.emplace(key, s);
    return s;
  }

  /// Teacher query embedding; a cross encoder pools it from the pair
  /// (query, anchor_doc).
  Vec query_embedding(std::size_t q, std::size_t anchor_doc) const {
    const auto key = de_ ? pair_key(q, 0) : pair_key(q, anchor_doc);
    if (auto it = query_embs_.find(key); it != query_embs_.end()) return it->second;
    Vec e = query_embedding(data_->queries[q], anchor_doc);
    query_embs_.emplace(key, e);
    return e;
  }

  Vec query_embedding(const TokenSequence& q, std::size_t anchor_doc) const {
    if (de_) return encode(de_->query_encoder(), q);
    require_dual();
    return ce_dual_pool(*ce_, q, data_->docs[anchor_doc], false, data_->max_len).proxy_q;
  }

  /// Teacher document embedding; for a cross encoder, the empty-query proxy.
  Vec doc_embedding(std::size_t d) const {
    if (auto it = doc_embs_.find(d); it != doc_embs_.end()) return it->second;
    Vec e;
    if (de_) {
      e = encode(de_->doc_encoder(), data_->docs[d]);
    } else {
      require_dual();
      e = ce_dual_pool(*ce_, TokenSequence{}, data_->docs[d], true, data_->max_len).proxy_d;
    }
    doc_embs_.emplace(d, e);
    return e;
  }

  /// The inheritable document index.
  DocumentIndex build_doc_index(const std::vector<std::string>& doc_ids,
                                std::string encoder_hash = {}) const {
    if (de_) return build_index(de_->doc_encoder(), doc_ids, data_->docs, encoder_hash);
    return build_index(*ce_, doc_ids, data_->docs, data_->max_len, encoder_hash);
  }

 private:
  static std::uint64_t pair_key(std::size_t q, std::size_t d) {
    return (static_cast<std::uint64_t>(q) << 32) | static_cast<std::uint64_t>(d);
  }
  void require_dual() const {
    if (!ce_->is_dual()) throw Error("teacher cross encoder has no dual pooling: no embeddings");
  }

  std::shared_ptr<const DEModel> de_;
  std::shared_ptr<const CEModel> ce_;
  const TokenizedData* data_ = nullptr;
  std::size_t dim_ = 0;
  mutable std::unordered_map<std::uint64_t, double> scores_;
  mutable std::unordered_map<std::uint64_t, Vec> query_embs_;
  mutable std::unordered_map<std::size_t, Vec> doc_embs_;
};

// ---------------------------------------------------------------------------
// Student
// ---------------------------------------------------------------------------

struct Student {
  StudentMode mode = StudentMode::Symmetric;
  DEModel model;   // asymmetric students only use the query tower
  Projection proj; // student dim -> teacher dim

  bool asymmetric() const { return mode == StudentMode::AsymmetricInheritDocs; }

  /// Embedding used for scoring: proj(f(q)) when documents are inherited.
  Vec scoring_query_embedding(const TokenSequence& q) const {
    Vec e = encode(model.query_encoder(), q);
    return asymmetric() ? project(proj, e) : e;
  }

  /// Student query embedding mapped into the teacher's space.
  Vec aligned_query_embedding(const TokenSequence& q) const {
    return project(proj, encode(model.query_encoder(), q));
  }

  bool operator==(const Student&) const = default;
};

inline Student make_student(const StudentConfig& cfg, std::size_t vocab_size,
                            std::size_t teacher_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  Student s;
  s.mode = cfg.mode;
  const EncoderShape shape{vocab_size, cfg.hidden, cfg.out_dim, cfg.blocks};
  const bool shared = cfg.shared_towers || cfg.mode == StudentMode::AsymmetricInheritDocs;
  s.model = DEModel::random(shape, cfg.pooling, shared, rng);
  s.proj = make_projection(cfg.out_dim, teacher_dim == 0 ? cfg.out_dim : teacher_dim, rng);
  return s;
}

struct StudentGrad {
  EncoderParams query;
  std::optional<EncoderParams> doc;
  Projection proj;

  static StudentGrad zeros_for(const Student& s) {
    StudentGrad g;
    g.query = zeros_like(s.model.query);
    if (s.model.doc) g.doc = zeros_like(*s.model.doc);
    g.proj = Affine::zeros(s.proj.in_dim(), s.proj.out_dim());
    return g;
  }
  EncoderParams& doc_grad() { return doc ? *doc : query; }
};

inline std::vector<ParamRef> param_refs(Student& s, StudentGrad& g, bool train_projection) {
  std::vector<ParamRef> refs;
  auto add_encoder = [&](EncoderParams& p, EncoderParams& gp) {
    std::vector<Mat*> gv;
    gp.for_each([&](const std::string&, Mat& m) { gv.push_back(&m); });
    std::size_t i = 0;
    p.for_each([&](const std::string& name, Mat& m) {
      const bool bias = name == "bo" || name.ends_with(".bf");
      refs.push_back({&m, gv[i++], !bias});
    });
  };
  add_encoder(s.model.query, g.query);
  if (s.model.doc && !s.asymmetric()) add_encoder(*s.model.doc, *g.doc);
  if (train_projection) {
    refs.push_back({&s.proj.w, &g.proj.w, false});
    refs.push_back({&s.proj.b, &g.proj.b, false});
  }
  return refs;
}

/// Everything one student update needs besides the student itself.
struct DistillContext {
  const TokenizedData* data = nullptr;
  const Corpus* corpus = nullptr;
  const Teacher* teacher = nullptr;        // null: plain supervised training
  const DocumentIndex* doc_index = nullptr;// required for asymmetric students
  /// Generated queries per corpus query index, with their precomputed
  /// teacher embeddings.
  const std::unordered_map<std::size_t, std::vector<TokenSequence>>* aug_queries = nullptr;
  const std::unordered_map<std::size_t, std::vector<Vec>>* aug_teacher_embs = nullptr;
};

struct ObjectiveResult {
  StepRecord components;  // step/lr left at zero
  StudentGrad grad;
};

/// Weighted objective on one batch: one-hot + score distillation +
/// query/document embedding matching (+ generated-query matching), with
/// analytic gradients for the student's trainable parameters.
inline ObjectiveResult student_objective(const Student& s, const std::vector<TrainingExample>& batch,
                                         const LossWeights& w, const TrainConfig& cfg,
                                         const DistillContext& ctx) {
  if (batch.empty()) throw Error("empty batch");
  const TokenizedData& data = *ctx.data;
  const bool asym = s.asymmetric();
  if (asym && ctx.doc_index == nullptr) {
    throw Error("asymmetric student requires an inherited document index");
  }
  const bool needs_teacher = w.score_distill > 0 || w.embed_q > 0 || w.embed_d > 0;
  if (needs_teacher && ctx.teacher == nullptr) throw Error("loss weights require a teacher");
  const double embed_d_weight = asym ? 0.0 : w.embed_d;

  ObjectiveResult res;
  res.grad = StudentGrad::zeros_for(s);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const EncoderParams& q_enc = s.model.query_encoder();
  const EncoderParams& d_enc = s.model.doc_encoder();

  std::vector<PooledForward> q_fwd;
  std::vector<Vec> d_eq;  // dLoss / d(student query embedding)
  for (const auto& ex : batch) {
    q_fwd.push_back(encode_with_cache(q_enc, data.queries[ex.query]));
    d_eq.emplace_back(q_enc.shape.out_dim, 0.0);
  }

  // Document forward passes for symmetric students, one per unique doc.
  std::map<std::size_t, PooledForward> d_fwd;
  std::map<std::size_t, Vec> d_ed;
  auto doc_embedding = [&](std::size_t d) -> Vec {
    if (asym) {
      auto r = ctx.doc_index->embeddings.row(d);
      return Vec(r.begin(), r.end());
    }
    auto it = d_fwd.find(d);
    if (it == d_fwd.end()) {
      it = d_fwd.emplace(d, encode_with_cache(d_enc, data.docs[d])).first;
      d_ed.emplace(d, Vec(d_enc.shape.out_dim, 0.0));
    }
    return it->second.embedding;
  };

  const bool scoring = w.onehot > 0 || w.score_distill > 0;
  for (std::size_t i = 0; i < batch.size() && scoring; ++i) {
    const auto& ex = batch[i];
    std::vector<std::size_t> cand = ex.docs;
    std::vector<int> labels = ex.labels;
    if (cfg.in_batch_negatives) {
      for (std::size_t o = 0; o < batch.size(); ++o) {
        if (o == i) continue;
        for (std::size_t j = 0; j < batch[o].docs.size(); ++j) {
          if (!batch[o].labels[j]) continue;
          const std::size_t d = batch[o].docs[j];
          if (std::find(cand.begin(), cand.end(), d) != cand.end()) continue;
          cand.push_back(d);
          labels.push_back(0);
        }
      }
    }
    const Vec& e_q = q_fwd[i].embedding;
    const Vec q_eff = asym ? project(s.proj, e_q) : e_q;
    std::vector<Vec> demb;
    Vec scores;
    for (std::size_t d : cand) {
      demb.push_back(doc_embedding(d));
      scores.push_back(dot(q_eff, demb.back()));
    }
    Vec ds(cand.size(), 0.0);
    if (w.onehot > 0) {
      const auto l = softmax_ce_onehot(scores, labels);
      res.components.onehot += inv_b * l.value;
      axpy(w.onehot * inv_b, l.grad, ds);
    }
    if (w.score_distill > 0) {
      Vec ts;
      for (std::size_t d : cand) ts.push_back(ctx.teacher->score(ex.query, d));
      const auto l = score_distill(w.distill_kind, scores, ts, cfg.temperature);
      res.components.distill += inv_b * l.value;
      axpy(w.score_distill * inv_b, l.grad, ds);
    }
    Vec d_qeff(q_eff.size(), 0.0);
    for (std::size_t j = 0; j < cand.size(); ++j) {
      axpy(ds[j], demb[j], d_qeff);
      if (!asym) axpy(ds[j], q_eff, d_ed.at(cand[j]));
    }
    if (asym) {
      axpy(1.0, s.proj.backward(e_q, d_qeff, res.grad.proj), d_eq[i]);
    } else {
      axpy(1.0, d_qeff, d_eq[i]);
    }
  }

  if (w.embed_q > 0) {
    std::vector<Vec> t_emb, s_emb;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& ex = batch[i];
      std::size_t anchor = ex.docs.front();
      for (std::size_t j = 0; j < ex.docs.size(); ++j) {
        if (ex.labels[j]) {
          anchor = ex.docs[j];
          break;
        }
      }
      t_emb.push_back(ctx.teacher->query_embedding(ex.query, anchor));
      s_emb.push_back(q_fwd[i].embedding);
    }
    auto l = embed_match_loss(t_emb, s_emb, s.proj, w.squared_embed);
    res.components.embed_q = l.value;
    for (std::size_t i = 0; i < batch.size(); ++i) axpy(w.embed_q, l.grad_student[i], d_eq[i]);
    axpy(w.embed_q, l.grad_projection.w.data(), res.grad.proj.w.data());
    axpy(w.embed_q, l.grad_projection.b.data(), res.grad.proj.b.data());

    // Generated queries contribute embedding matching only.
    if (ctx.aug_queries != nullptr) {
      std::vector<Vec> ta, sa;
      std::vector<PooledForward> a_fwd;
      for (const auto& ex : batch) {
        auto it = ctx.aug_queries->find(ex.query);
        if (it == ctx.aug_queries->end()) continue;
        const auto& temb = ctx.aug_teacher_embs->at(ex.query);
        for (std::size_t g = 0; g < it->second.size(); ++g) {
          a_fwd.push_back(encode_with_cache(q_enc, it->second[g]));
          sa.push_back(a_fwd.back().embedding);
          ta.push_back(temb[g]);
        }
      }
      if (!ta.empty()) {
        auto la = embed_match_loss(ta, sa, s.proj, w.squared_embed);
        res.components.embed_q_aug = la.value;
        axpy(w.embed_q, la.grad_projection.w.data(), res.grad.proj.w.data());
        axpy(w.embed_q, la.grad_projection.b.data(), res.grad.proj.b.data());
        for (std::size_t g = 0; g < a_fwd.size(); ++g) {
          Vec d(la.grad_student[g]);
          for (double& x : d) x *= w.embed_q;
          encode_backward(q_enc, a_fwd[g], d, res.grad.query);
        }
      }
    }
  }

  if (embed_d_weight > 0) {
    std::vector<std::size_t> docs;
    for (const auto& ex : batch) {
      for (std::size_t d : ex.docs) docs.push_back(d);
    }
    std::vector<Vec> t_emb, s_emb;
    for (std::size_t d : docs) {
      t_emb.push_back(ctx.teacher->doc_embedding(d));
      s_emb.push_back(doc_embedding(d));
    }
    auto l = embed_match_loss(t_emb, s_emb, s.proj, w.squared_embed);
    res.components.embed_d = l.value;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      axpy(embed_d_weight, l.grad_student[i], d_ed.at(docs[i]));
    }
    axpy(embed_d_weight, l.grad_projection.w.data(), res.grad.proj.w.data());
    axpy(embed_d_weight, l.grad_projection.b.data(), res.grad.proj.b.data());
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    encode_backward(q_enc, q_fwd[i], d_eq[i], res.grad.query);
  }
  for (auto& [d, fwd] : d_fwd) encode_backward(d_enc, fwd, d_ed.at(d), res.grad.doc_grad());

  auto& c = res.components;
  c.total = w.onehot * c.onehot + w.score_distill * c.distill + w.embed_q * c.embed_q +
            w.embed_q * c.embed_q_aug + embed_d_weight * c.embed_d;
  if (!std::isfinite(c.total)) throw Error("non-finite objective");
  return res;
}

/// One optimizer update of the student; the teacher and inherited index are
/// only read.
inline StepRecord distill_step(Student& s, AdamW& opt, const std::vector<TrainingExample>& batch,
                               const LossWeights& w, const TrainConfig& cfg,
                               const DistillContext& ctx, double lr) {
  ObjectiveResult r = student_objective(s, batch, w, cfg, ctx);
  auto check = [](const Mat& m) {
    if (!all_finite(m.data())) throw Error("NaN gradient");
  };
  r.grad.query.for_each([&](const std::string&, const Mat& m) { check(m); });
  if (r.grad.doc) r.grad.doc->for_each([&](const std::string&, const Mat& m) { check(m); });
  check(r.grad.proj.w);
  const bool train_proj = s.asymmetric() || w.embed_q > 0 || w.embed_d > 0;
  opt.step(param_refs(s, r.grad, train_proj), lr);
  r.components.lr = lr;
  return r.components;
}

namespace detail {
/// Deterministic epoch-shuffled batches.
class Batcher {
 public:
  Batcher(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), bs_(std::min(batch_size, n)), rng_(derive_seed(seed, "batching")) {
    if (n == 0) throw Error("dataset is empty");
    if (batch_size == 0) throw Error("batch size must be positive");
  }
  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    while (out.size() < bs_) {
      if (pos_ == order_.size()) {
        order_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::size_t n_, bs_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

inline void check_examples(const std::vector<TrainingExample>& examples) {
  if (examples.empty()) throw Error("dataset is empty");
  for (const auto& ex : examples) {
    if (std::find(ex.labels.begin(), ex.labels.end(), 1) == ex.labels.end()) {
      throw Error("training example without a positive document");
    }
  }
}
}  // namespace detail

struct StudentRun {
  Student student;
  TrainHistory history;
};

/// Trains a student (or, without a teacher, a dual encoder from labels).
inline StudentRun train_student(Student student, const std::vector<TrainingExample>& examples,
                                const LossWeights& weights, const TrainConfig& cfg,
                                const DistillContext& ctx, const EvalHook& eval = {}) {
  weights.validate();
  detail::check_examples(examples);
  AdamW opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  detail::Batcher batcher(examples.size(), cfg.batch_size, cfg.seed);
  StudentRun run{std::move(student), {}};
  const auto sched = cfg.schedule();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<TrainingExample> batch;
    for (std::size_t i : batcher.next()) batch.push_back(examples[i]);
    StepRecord rec;
    try {
      rec = distill_step(run.student, opt, batch, weights, cfg, ctx, lr_at(step, sched));
    } catch (const Error& e) {
      throw Error("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    rec.step = step;
    run.history.steps.push_back(rec);
    if (eval && cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) {
      run.history.evals.emplace_back(step + 1, eval());
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Teachers
// ---------------------------------------------------------------------------

enum class TeacherKind { DualEncoder, CrossEncoder, CrossEncoderDualPooled };

inline std::string_view to_string(TeacherKind k) {
  switch (k) {
    case TeacherKind::DualEncoder: return "de";
    case TeacherKind::CrossEncoder: return "ce";
    case TeacherKind::CrossEncoderDualPooled: return "ce-dual";
  }
  return "?";
}

inline TeacherKind teacher_kind_from_string(std::string_view s) {
  if (s == "de") return TeacherKind::DualEncoder;
  if (s == "ce") return TeacherKind::CrossEncoder;
  if (s == "ce-dual") return TeacherKind::CrossEncoderDualPooled;
  throw Error("unknown teacher kind '" + std::string(s) + "'");
}

struct TeacherConfig {
  TeacherKind kind = TeacherKind::DualEncoder;
  std::size_t hidden = 32;
  std::size_t out_dim = 32;
  std::size_t blocks = 1;
  bool shared_towers = false;
  PoolingKind de_pooling = PoolingKind::FirstToken;
  // Beats the two-special-token variant as a re-ranking teacher in our sweeps.
  PoolingKind dual_pooling = PoolingKind::SegmentWeightedMean;
  double recon_weight = 1.0;
};

struct TeacherModel {
  TeacherKind kind = TeacherKind::DualEncoder;
  std::optional<DEModel> de;
  std::optional<CEModel> ce;

  Teacher view(const TokenizedData& data) const {
    return de ? Teacher::from_de(*de, data) : Teacher::from_ce(*ce, data);
  }
  bool operator==(const TeacherModel&) const = default;
};

struct TeacherRun {
  TeacherModel model;
  TrainHistory history;
};

inline TeacherModel init_teacher(const TeacherConfig& tc, std::size_t vocab_size,
                                 std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  const EncoderShape shape{vocab_size, tc.hidden, tc.out_dim, tc.blocks};
  TeacherModel m;
  m.kind = tc.kind;
  switch (tc.kind) {
    case TeacherKind::DualEncoder:
      m.de = DEModel::random(shape, tc.de_pooling, tc.shared_towers, rng);
      break;
    case TeacherKind::CrossEncoder:
      m.ce = CEModel::random_cls(shape, rng);
      break;
    case TeacherKind::CrossEncoderDualPooled:
      m.ce = CEModel::random_dual(shape, tc.dual_pooling, tc.recon_weight > 0, rng);
      break;
  }
  return m;
}

/// Cross-encoder objective on one batch: one-hot softmax CE over each
/// example's candidates plus, for dual-pooled models with a decoder, the
/// weighted mean token-reconstruction loss over all joint inputs.
inline std::pair<StepRecord, CEGrad> ce_objective(const CEModel& ce,
                                                  const std::vector<TrainingExample>& batch,
                                                  double recon_weight, const TokenizedData& data) {
  CEGrad g = CEGrad::zeros_for(ce);
  StepRecord rec;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::size_t pairs = 0;
  for (const auto& ex : batch) pairs += ex.docs.size();
  const bool recon = recon_weight > 0 && ce.decoder.has_value();
  const double inv_p = 1.0 / static_cast<double>(pairs);
  for (const auto& ex : batch) {
    std::vector<JointForward> fwd;
    Vec scores;
    for (std::size_t d : ex.docs) {
      fwd.push_back(ce_forward(
          ce, build_joint_input(data.queries[ex.query], data.docs[d], false, data.max_len)));
      scores.push_back(fwd.back().score);
    }
    const auto l = softmax_ce_onehot(scores, ex.labels);
    rec.onehot += inv_b * l.value;
    for (std::size_t j = 0; j < fwd.size(); ++j) {
      Mat d_tokens;
      const Mat* d_tok_ptr = nullptr;
      if (recon) {
        auto r = reconstruction_loss(fwd[j].cache.out, fwd[j].input.seq, *ce.decoder);
        rec.recon += inv_p * r.value;
        d_tokens = r.grad_embs;
        for (double& x : d_tokens.data()) x *= recon_weight * inv_p;
        axpy(recon_weight * inv_p, r.grad_decoder.w.data(), g.decoder->w.data());
        axpy(recon_weight * inv_p, r.grad_decoder.b.data(), g.decoder->b.data());
        d_tok_ptr = &d_tokens;
      }
      ce_backward(ce, fwd[j], inv_b * l.grad[j], {}, {}, d_tok_ptr, g);
    }
  }
  rec.total = rec.onehot + (recon ? recon_weight * rec.recon : 0.0);
  if (!std::isfinite(rec.total)) throw Error("non-finite objective");
  return {rec, std::move(g)};
}

inline TeacherRun train_teacher(const TeacherConfig& tc, const TokenizedData& data,
                                const Corpus& corpus, const std::vector<TrainingExample>& examples,
                                const TrainConfig& cfg, const EvalHook& eval = {}) {
  detail::check_examples(examples);
  TeacherRun run;
  run.model = init_teacher(tc, data.vocab.size(), cfg.seed);
  if (tc.kind == TeacherKind::DualEncoder) {
    Student s;
    s.mode = StudentMode::Symmetric;
    s.model = *run.model.de;
    s.proj = Affine::zeros(tc.out_dim, tc.out_dim);
    LossWeights w;
    w.onehot = 1.0;
    w.score_distill = 0.0;
    DistillContext ctx{&data, &corpus, nullptr, nullptr, nullptr, nullptr};
    auto r = train_student(std::move(s), examples, w, cfg, ctx, eval);
    run.model.de = std::move(r.student.model);
    run.history = std::move(r.history);
    return run;
  }
  CEModel& ce = *run.model.ce;
  AdamW opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  detail::Batcher batcher(examples.size(), cfg.batch_size, cfg.seed);
  const auto sched = cfg.schedule();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<TrainingExample> batch;
    for (std::size_t i : batcher.next()) batch.push_back(examples[i]);
    auto [rec, g] = ce_objective(ce, batch, tc.recon_weight, data);
    if (!std::isfinite(rec.total)) {
      throw Error("training diverged at step " + std::to_string(step));
    }
    std::vector<ParamRef> refs;
    std::vector<Mat*> gv;
    g.encoder.for_each([&](const std::string&, Mat& m) { gv.push_back(&m); });
    std::size_t i = 0;
    ce.encoder.for_each([&](const std::string& name, Mat& m) {
      const bool bias = name == "bo" || name.ends_with(".bf");
      refs.push_back({&m, gv[i++], !bias});
    });
    if (auto* cls = std::get_if<ClassificationHead>(&ce.head)) refs.push_back({&cls->w, &g.w, true});
    if (ce.decoder) {
      refs.push_back({&ce.decoder->w, &g.decoder->w, true});
      refs.push_back({&ce.decoder->b, &g.decoder->b, false});
    }
    rec.lr = lr_at(step, sched);
    rec.step = step;
    opt.step(refs, rec.lr);
    run.history.steps.push_back(rec);
    if (eval && cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) {
      run.history.evals.emplace_back(step + 1, eval());
    }
  }
  return run;
}

}  // namespace embedmatch

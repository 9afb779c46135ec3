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

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "embedmatch/config.hpp"
#include "embedmatch/io.hpp"

namespace embedmatch {

namespace fs = std::filesystem;

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "EMBEDMATCH_OUTPUT_ROOT";

/// The config's output directory, unless the environment overrides it.
inline fs::path output_root(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') {
    return fs::path(env);
  }
  return fs::path(cfg.output_dir);
}

/// Collects atomically written outputs of one stage and their hashes.
class StageWriter {
 public:
  StageWriter(fs::path root, std::string stage) : root_(std::move(root)), stage_(std::move(stage)) {}

  void write(const std::string& rel, const std::string& content) {
    write_atomic(root_ / rel, content);
    outputs_.push_back({{"path", rel}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  }

  /// Writes manifests/<stage>.json; returns its content.
  json finish(const ExperimentConfig& cfg, const std::string& suffix = {}) {
    json m{{"schema_version", kManifestSchemaVersion},
           {"stage", stage_},
           {"config_sha256", sha256_hex(to_ini(cfg))},
           {"seed", cfg.seed},
           {"outputs", outputs_}};
    const std::string name = "manifests/" + stage_ + (suffix.empty() ? "" : "-" + suffix) + ".json";
    write_atomic(root_ / name, dump(m));
    return m;
  }

 private:
  fs::path root_;
  std::string stage_;
  json outputs_ = json::array();
};

// ---------------------------------------------------------------------------
// Loading shared inputs
// ---------------------------------------------------------------------------

struct LoadedData {
  Dataset ds;
  TokenizedData tok;
};

inline LoadedData load_data(const ExperimentConfig& cfg) {
  const fs::path dir = output_root(cfg) / "data";
  if (!fs::exists(dir / "corpus.jsonl")) {
    throw Error("no dataset under " + dir.string() + " (run gen-data first)");
  }
  LoadedData d;
  d.ds = load_dataset(dir);
  d.tok = TokenizedData::from_corpus(d.ds.corpus, cfg.max_len);
  return d;
}

inline std::vector<TrainingExample> examples_for(const Dataset& ds,
                                                 const std::vector<std::string>& splits) {
  std::vector<TrainingExample> out;
  for (const auto& ex : ds.examples) {
    const auto& split = ds.corpus.queries[ex.query].split;
    if (std::find(splits.begin(), splits.end(), split) != splits.end()) out.push_back(ex);
  }
  return out;
}

inline TeacherModel load_teacher(const ExperimentConfig& cfg) {
  const fs::path p = output_root(cfg) / "teacher" / "teacher.json";
  if (!fs::exists(p)) throw Error("no teacher checkpoint at " + p.string());
  return teacher_from_json(json::parse(read_file(p)));
}

inline std::string teacher_hash(const ExperimentConfig& cfg) {
  return sha256_hex(read_file(output_root(cfg) / "teacher" / "teacher.json"));
}

inline DocumentIndex load_index(const ExperimentConfig& cfg) {
  const fs::path p = output_root(cfg) / "index" / "index.json";
  if (!fs::exists(p)) throw Error("no document index at " + p.string() + " (run build-index)");
  return index_from_json(json::parse(read_file(p)));
}

inline fs::path student_dir(const std::string& name) { return fs::path("students") / name; }

inline Student load_student(const ExperimentConfig& cfg) {
  const fs::path p = output_root(cfg) / student_dir(cfg.name) / "student.json";
  if (!fs::exists(p)) throw Error("no student checkpoint at " + p.string());
  return student_from_json(json::parse(read_file(p)));
}

inline json metrics_json(const std::string& experiment, const Metrics& m) {
  json j{{"experiment", experiment}, {"metrics", json::object()}};
  for (const auto& [k, v] : m) j["metrics"][k] = v;
  return j;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

inline Dataset generate_dataset(const ExperimentConfig& cfg) {
  CorpusSpec spec = cfg.corpus;
  spec.seed = derive_seed(cfg.seed, "data");
  Dataset ds;
  ds.corpus = generate_corpus(spec);
  const auto neg_seed = derive_seed(cfg.seed, "data/negatives");
  ds.examples = make_training_examples(ds.corpus, cfg.negatives_per_example,
                                       cfg.negative_sampling, neg_seed, "train");
  if (spec.pretrain_queries_per_topic > 0) {
    // Teacher-only split; random negatives keep it a generic pretraining signal.
    auto pre = make_training_examples(ds.corpus, cfg.negatives_per_example,
                                      NegativeSampling::Random, neg_seed, "pretrain");
    ds.examples.insert(ds.examples.end(), pre.begin(), pre.end());
  }
  return ds;
}

inline json stage_gen_data(const ExperimentConfig& cfg) {
  StageWriter w(output_root(cfg), "gen-data");
  for (const auto& [name, content] : dataset_files(generate_dataset(cfg))) {
    w.write("data/" + name, content);
  }
  return w.finish(cfg);
}

/// Retrieval and re-ranking metrics of a teacher on the eval split.
inline Metrics teacher_metrics(const TeacherModel& t, const LoadedData& d,
                               const ExperimentConfig& cfg) {
  const Corpus& c = d.ds.corpus;
  const Teacher view = t.view(d.tok);
  Metrics out;
  if (view.has_embeddings()) {
    const auto idx = view.build_doc_index(doc_ids(c));
    for (const auto& [k, v] :
         eval_dense([&](std::size_t q) { return view.query_embedding(q, c.golden[q].front()); },
                    idx, c, "eval", cfg.retrieval_depth)
             .metrics) {
      out["full/" + k] = v;
    }
  }
  const auto cand = first_stage_candidates(c, "eval", cfg.rerank_candidates);
  for (const auto& [k, v] :
       eval_rerank([&](std::size_t q, std::size_t doc) { return view.score(q, doc); }, c, cand)
           .metrics) {
    out["rerank/" + k] = v;
  }
  return out;
}

inline json stage_train_teacher(const ExperimentConfig& cfg) {
  const LoadedData d = load_data(cfg);
  std::vector<std::string> splits{"pretrain"};
  if (cfg.teacher_uses_train_split) splits.push_back("train");
  const auto examples = examples_for(d.ds, splits);
  TrainConfig tc = cfg.teacher_train;
  tc.seed = derive_seed(cfg.seed, "teacher");
  const TeacherRun run = train_teacher(cfg.teacher, d.tok, d.ds.corpus, examples, tc);
  StageWriter w(output_root(cfg), "train-teacher");
  w.write("teacher/teacher.json", dump(teacher_to_json(run.model)));
  w.write("teacher/history.csv", run.history.to_csv());
  w.write("teacher/metrics.json", dump(metrics_json("teacher", teacher_metrics(run.model, d, cfg))));
  return w.finish(cfg);
}

inline json stage_build_index(const ExperimentConfig& cfg) {
  const LoadedData d = load_data(cfg);
  const TeacherModel t = load_teacher(cfg);
  const Teacher view = t.view(d.tok);
  if (!view.has_embeddings()) {
    throw Error("build-index: a [CLS]-pooled cross encoder produces no document embeddings");
  }
  const auto idx = view.build_doc_index(doc_ids(d.ds.corpus), teacher_hash(cfg));
  StageWriter w(output_root(cfg), "build-index");
  w.write("index/index.json", dump(index_to_json(idx)));
  return w.finish(cfg);
}

inline std::vector<TokenSequence> split_queries(const LoadedData& d, const std::string& split) {
  std::vector<TokenSequence> out;
  for (std::size_t q : d.ds.corpus.split_indices(split)) out.push_back(d.tok.queries[q]);
  return out;
}

inline json stage_augment(const ExperimentConfig& cfg) {
  const LoadedData d = load_data(cfg);
  AutoencoderConfig ac = cfg.augment.ae;
  ac.seed = derive_seed(cfg.seed, "augmentation");
  const auto run = train_autoencoder(split_queries(d, "train"), d.tok.vocab.size(), ac);
  std::ostringstream gen;
  const auto base = derive_seed(cfg.seed, "augmentation");
  for (std::size_t q : d.ds.corpus.split_indices("train")) {
    const auto seed = generation_seed(base, q);
    for (const auto& g : generate_queries(run.params, d.tok.queries[q], cfg.augment.per_query,
                                          cfg.augment.sigma, cfg.augment.mask_prob, seed)) {
      std::vector<std::string> words;
      for (std::size_t i = 1; i < g.ids.size(); ++i) words.push_back(d.tok.vocab.token(g.ids[i]));
      gen << json{{"source_query_id", d.ds.corpus.queries[q].id},
                  {"generated_tokens", words},
                  {"sigma", cfg.augment.sigma},
                  {"mask_prob", cfg.augment.mask_prob},
                  {"seed", seed}}
                 .dump()
          << '\n';
    }
  }
  const auto last = run.epoch_accuracy.empty() ? RoundTripStats{} : run.epoch_accuracy.back();
  StageWriter w(output_root(cfg), "augment");
  w.write("augment/autoencoder.json", dump(autoencoder_to_json(run.params)));
  w.write("augment/generated.jsonl", gen.str());
  w.write("augment/stats.json",
          dump(json{{"round_trip_exact", last.exact},
                    {"round_trip_token", last.token},
                    {"epoch_loss", run.epoch_loss}}));
  return w.finish(cfg);
}

/// Generated queries read back from augment/generated.jsonl.
inline std::unordered_map<std::size_t, std::vector<TokenSequence>> load_generated(
    const ExperimentConfig& cfg, const LoadedData& d) {
  const fs::path p = output_root(cfg) / "augment" / "generated.jsonl";
  if (!fs::exists(p)) throw Error("no generated queries at " + p.string() + " (run augment)");
  std::unordered_map<std::string, std::size_t> qindex;
  for (std::size_t i = 0; i < d.ds.corpus.queries.size(); ++i) {
    qindex.emplace(d.ds.corpus.queries[i].id, i);
  }
  std::unordered_map<std::size_t, std::vector<TokenSequence>> out;
  const auto lines = detail::read_lines(p);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = detail::parse_line(p, i + 1, lines[i]);
    const auto qid = detail::field<std::string>(j, "source_query_id", p, i + 1);
    auto it = qindex.find(qid);
    if (it == qindex.end()) {
      throw Error(p.string() + ":" + std::to_string(i + 1) + ": unknown query " + qid);
    }
    TokenSequence s;
    s.ids.push_back(special::kCls);
    for (const auto& w : detail::field<std::vector<std::string>>(j, "generated_tokens", p, i + 1)) {
      s.ids.push_back(d.tok.vocab.id(w));
    }
    out[it->second].push_back(std::move(s));
  }
  return out;
}

struct DistillOutcome {
  Student student;
  TrainHistory history;
  Metrics metrics;
  Alignment alignment;
  std::vector<RankedList> rankings;
};

/// Trains and evaluates one student; everything is returned, nothing written.
inline DistillOutcome run_distill(const ExperimentConfig& cfg, const LoadedData& d,
                                  const std::optional<TeacherModel>& teacher_model,
                                  const DocumentIndex* index,
                                  const std::unordered_map<std::size_t, std::vector<TokenSequence>>*
                                      generated) {
  const Corpus& c = d.ds.corpus;
  std::optional<Teacher> teacher;
  if (teacher_model) teacher = teacher_model->view(d.tok);
  const bool asym = cfg.student.mode == StudentMode::AsymmetricInheritDocs;
  if (asym && index == nullptr) throw Error("asymmetric student requires the teacher index");
  if ((cfg.use_teacher || asym) && !teacher) throw Error("this recipe needs a trained teacher");
  Augmentation aug;
  if (cfg.querygen) {
    if (generated == nullptr) throw Error("query generation enabled but no generated queries");
    if (!teacher->has_embeddings()) throw Error("query generation needs teacher embeddings");
    for (const auto& [q, seqs] : *generated) {
      std::vector<Vec> embs;
      for (const auto& g : seqs) embs.push_back(teacher->query_embedding(g, c.golden[q].front()));
      aug.queries.emplace(q, seqs);
      aug.teacher_embs.emplace(q, std::move(embs));
    }
  }
  TrainConfig tc = cfg.student_train;
  tc.seed = derive_seed(cfg.seed, "student");
  const std::size_t tdim = teacher ? teacher->dim() : cfg.student.out_dim;
  Student s = make_student(cfg.student, d.tok.vocab.size(), tdim, tc.seed);
  const DistillContext ctx{&d.tok,
                           &c,
                           cfg.use_teacher || asym ? &*teacher : nullptr,
                           index,
                           cfg.querygen ? &aug.queries : nullptr,
                           cfg.querygen ? &aug.teacher_embs : nullptr};
  const auto train = examples_for(d.ds, {"train"});
  StudentRun run = train_student(std::move(s), train, cfg.loss, tc, ctx);

  DistillOutcome out;
  out.student = std::move(run.student);
  out.history = std::move(run.history);
  const DocumentIndex sidx = student_index(out.student, d.tok, c, index);
  auto full = eval_dense(
      [&](std::size_t q) { return out.student.scoring_query_embedding(d.tok.queries[q]); }, sidx,
      c, "eval", cfg.retrieval_depth);
  out.rankings = full.rankings;
  for (const auto& [k, v] : full.metrics) out.metrics["full/" + k] = v;
  const auto cand = first_stage_candidates(c, "eval", cfg.rerank_candidates);
  std::vector<Vec> qe(c.queries.size());
  for (std::size_t q : c.split_indices("eval")) {
    qe[q] = out.student.scoring_query_embedding(d.tok.queries[q]);
  }
  for (const auto& [k, v] :
       eval_rerank([&](std::size_t q, std::size_t doc) { return dot(qe[q], sidx.embeddings.row(doc)); },
                   c, cand)
           .metrics) {
    out.metrics["rerank/" + k] = v;
  }
  if (teacher && teacher->has_embeddings() && out.student.proj.out_dim() == teacher->dim()) {
    out.alignment = query_alignment(*teacher, out.student, d.tok, c, "eval");
    out.metrics["align/r_emb_q"] = out.alignment.r_emb_q;
    out.metrics["align/mean_abs_discrepancy"] = out.alignment.mean_abs_discrepancy;
  }
  return out;
}

inline std::string discrepancy_csv(const std::vector<double>& v) {
  std::ostringstream os;
  os << "discrepancy\n";
  for (double x : v) os << json(x).dump() << '\n';
  return os.str();
}

inline json stage_distill(const ExperimentConfig& cfg) {
  const LoadedData d = load_data(cfg);
  const bool asym = cfg.student.mode == StudentMode::AsymmetricInheritDocs;
  std::optional<TeacherModel> teacher;
  if (cfg.use_teacher || asym) teacher = load_teacher(cfg);
  std::optional<DocumentIndex> index;
  if (asym) {
    index = load_index(cfg);
    if (index->meta.encoder_hash != teacher_hash(cfg)) {
      throw Error("index was built from a different teacher checkpoint");
    }
  }
  std::optional<std::unordered_map<std::size_t, std::vector<TokenSequence>>> generated;
  if (cfg.querygen) generated = load_generated(cfg, d);
  const auto out = run_distill(cfg, d, teacher, index ? &*index : nullptr,
                               generated ? &*generated : nullptr);
  const std::string dir = student_dir(cfg.name).string() + "/";
  StageWriter w(output_root(cfg), "distill");
  w.write(dir + "student.json", dump(student_to_json(out.student)));
  w.write(dir + "history.csv", out.history.to_csv());
  w.write(dir + "metrics.json", dump(metrics_json(cfg.name, out.metrics)));
  w.write(dir + "rankings.tsv", rankings_to_tsv(out.rankings, doc_ids(d.ds.corpus)));
  if (!out.alignment.discrepancy.empty()) {
    w.write(dir + "discrepancy.csv", discrepancy_csv(out.alignment.discrepancy));
  }
  w.write(dir + "config.ini", to_ini(cfg));
  return w.finish(cfg, cfg.name);
}

/// Metrics of a ranking file against the dataset's qrels and answers.
inline Metrics evaluate_rankings_file(const ExperimentConfig& cfg, const fs::path& rankings) {
  const LoadedData d = load_data(cfg);
  const auto r = rankings_from_tsv(read_file(rankings), doc_ids(d.ds.corpus));
  return ranking_metrics(r, d.ds.corpus);
}

inline json stage_eval(const ExperimentConfig& cfg, const std::optional<fs::path>& rankings) {
  const fs::path src =
      rankings ? *rankings : output_root(cfg) / student_dir(cfg.name) / "rankings.tsv";
  if (!fs::exists(src)) throw Error("missing rankings file " + src.string());
  const Metrics m = evaluate_rankings_file(cfg, src);
  StageWriter w(output_root(cfg), "eval");
  w.write("eval/" + cfg.name + "/metrics.json", dump(metrics_json(cfg.name, m)));
  return w.finish(cfg, cfg.name);
}

/// Teacher and (projected) student embeddings of a pair sample. For an
/// asymmetric student the document side is the inherited teacher tower.
inline EmbeddedSample embed_for_bounds(const DEModel& teacher, const Student& s,
                                       const PairSample& sample, const TokenizedData& tok,
                                       bool* projected) {
  const bool project_student =
      s.asymmetric() || s.model.query.shape.out_dim != teacher.query.shape.out_dim;
  if (projected) *projected = project_student;
  EmbeddedSample e;
  e.y = sample.y;
  for (std::size_t i = 0; i < sample.y.size(); ++i) {
    const auto& q = tok.queries.at(sample.queries[i]);
    const auto& doc = tok.docs.at(sample.docs[i]);
    e.tq.push_back(encode(teacher.query_encoder(), q));
    e.td.push_back(encode(teacher.doc_encoder(), doc));
    const Vec fq = encode(s.model.query_encoder(), q);
    e.sq.push_back(project_student ? project(s.proj, fq) : fq);
    if (s.asymmetric()) {
      e.sd.push_back(e.td.back());
    } else {
      const Vec gd = encode(s.model.doc_encoder(), doc);
      e.sd.push_back(project_student ? project(s.proj, gd) : gd);
    }
  }
  return e;
}

struct BoundsOutcome {
  BoundReport lemma4, lemma5, theorem1;
  std::vector<double> discrepancy;
};

inline BoundsOutcome run_bounds(const ExperimentConfig& cfg, const LoadedData& d,
                                const TeacherModel& t, const Student& s) {
  if (!t.de) throw Error("bounds: the lemmas are stated for a dual-encoder teacher");
  const auto seed = derive_seed(cfg.seed, "bounds");
  const auto train = PairSample::from_examples(
      make_training_examples(d.ds.corpus, 1, NegativeSampling::Random, seed, "train"));
  const auto held = PairSample::from_examples(
      make_training_examples(d.ds.corpus, 1, NegativeSampling::Random, seed, "eval"));
  bool projected = false;
  const auto etrain = embed_for_bounds(*t.de, s, train, d.tok, &projected);
  const auto eheld = embed_for_bounds(*t.de, s, held, d.tok, nullptr);
  BoundsOutcome out{lemma4_check(etrain), lemma5_check(etrain), theorem1_terms(etrain, eheld), {}};
  for (auto* r : {&out.lemma4, &out.lemma5, &out.theorem1}) r->projected_student = projected;
  std::vector<Vec> tq, sq;
  for (std::size_t q : d.ds.corpus.split_indices("eval")) {
    tq.push_back(encode(t.de->query_encoder(), d.tok.queries[q]));
    sq.push_back(s.aligned_query_embedding(d.tok.queries[q]));
  }
  out.discrepancy = pairwise_discrepancy(tq, sq);
  return out;
}

inline json stage_bounds(const ExperimentConfig& cfg) {
  const LoadedData d = load_data(cfg);
  const auto out = run_bounds(cfg, d, load_teacher(cfg), load_student(cfg));
  const std::string dir = "bounds/" + cfg.name + "/";
  StageWriter w(output_root(cfg), "bounds");
  w.write(dir + "lemma4.json", dump(out.lemma4.to_json()));
  w.write(dir + "lemma5.json", dump(out.lemma5.to_json()));
  w.write(dir + "theorem1.json", dump(out.theorem1.to_json()));
  w.write(dir + "discrepancy.csv", discrepancy_csv(out.discrepancy));
  json m = w.finish(cfg, cfg.name);
  if (!out.lemma4.verdict || !out.lemma5.verdict) {
    throw Error("bound verification failed: an inequality was violated");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline constexpr const char* kReportHeader = "experiment,source,metric,value";

/// Flattens metric/bound JSON files into experiment,source,metric,value rows.
/// Numbers are written in the shortest form that parses back to the same
/// double.
inline std::string build_report(const std::vector<fs::path>& files) {
  std::vector<std::string> missing;
  for (const auto& f : files) {
    if (!fs::exists(f)) missing.push_back(f.string());
  }
  if (!missing.empty()) {
    std::string msg = "missing input file(s):";
    for (const auto& m : missing) msg += " " + m;
    throw Error(msg);
  }
  std::ostringstream os;
  os << kReportHeader << '\n';
  for (const auto& f : files) {
    const json j = json::parse(read_file(f));
    std::string experiment = j.value("experiment", f.parent_path().filename().string());
    const std::string source = f.filename().string();
    const json& body = j.contains("metrics") ? j.at("metrics") : j;
    for (const auto& [k, v] : body.items()) {
      if (!v.is_number()) continue;
      os << experiment << ',' << source << ',' << k << ',' << v.dump() << '\n';
    }
  }
  return os.str();
}

/// Metric and bound files under an output root, in a stable order.
inline std::vector<fs::path> discover_report_inputs(const fs::path& root) {
  std::vector<fs::path> out;
  for (const char* sub : {"teacher", "students", "eval", "bounds"}) {
    const fs::path dir = root / sub;
    if (!fs::exists(dir)) continue;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json" &&
          e.path().filename() != "teacher.json" && e.path().filename() != "student.json") {
        out.push_back(e.path());
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline json stage_report(const ExperimentConfig& cfg, const std::vector<fs::path>& inputs) {
  const auto files = inputs.empty() ? discover_report_inputs(output_root(cfg)) : inputs;
  StageWriter w(output_root(cfg), "report");
  w.write("report/report.csv", build_report(files));
  return w.finish(cfg);
}

}  // namespace embedmatch

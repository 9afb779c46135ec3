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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "embedmatch/experiment.hpp"

namespace embedmatch {

/// Invalid configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Everything one experiment needs. Defaults are the desk-scale settings.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string name = "experiment";
  std::string output_dir = "runs";
  std::string preset;  // empty: use [student]/[loss] as given

  CorpusSpec corpus{.pretrain_queries_per_topic = 250};
  std::size_t negatives_per_example = 4;  // L
  NegativeSampling negative_sampling = NegativeSampling::InTopic;
  std::size_t max_len = 32;

  TeacherConfig teacher{.kind = TeacherKind::DualEncoder,
                        .hidden = 24,
                        .out_dim = 24,
                        .blocks = 1,
                        .shared_towers = true,
                        .de_pooling = PoolingKind::Mean};
  TrainConfig teacher_train{.steps = 3000, .peak_lr = 1e-2, .in_batch_negatives = true};
  bool teacher_uses_train_split = true;

  StudentConfig student{.hidden = 12, .out_dim = 12};
  LossWeights loss;
  TrainConfig student_train{.steps = 3000, .peak_lr = 1e-2, .in_batch_negatives = true};

  bool querygen = false;
  AugmentConfig augment;

  std::size_t retrieval_depth = 100;
  std::size_t rerank_candidates = 50;

  /// Applies a named preset's student mode and loss weights.
  void apply_preset(const std::string& p) {
    const Recipe r = embedmatch::preset(p);
    preset = p;
    student.mode = r.mode;
    loss = r.weights;
    querygen = r.querygen;
    use_teacher = r.use_teacher;
  }
  bool use_teacher = true;
};

namespace detail {

template <typename T>
T parse_number(const std::string& field, const std::string& v) {
  T out{};
  const char* b = v.data();
  const char* e = v.data() + v.size();
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = static_cast<T>(std::stod(v, &used));
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ConfigError(field + ": expected a number, got '" + v + "'");
    }
  } else {
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e) {
      throw ConfigError(field + ": expected a non-negative integer, got '" + v + "'");
    }
  }
  return out;
}

inline bool parse_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(field + ": expected true/false, got '" + v + "'");
}

template <typename T>
std::string format_number(T v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string path;  // section.key
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T, typename Access>
Field number_field(std::string path, Access acc) {
  return {path,
          [=](ExperimentConfig& c, const std::string& v) { acc(c) = parse_number<T>(path, v); },
          [=](const ExperimentConfig& c) {
            return format_number(acc(const_cast<ExperimentConfig&>(c)));
          }};
}

template <typename Access>
Field bool_field(std::string path, Access acc) {
  return {path, [=](ExperimentConfig& c, const std::string& v) { acc(c) = parse_bool(path, v); },
          [=](const ExperimentConfig& c) {
            return std::string(acc(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

template <typename Access>
Field string_field(std::string path, Access acc) {
  return {path, [=](ExperimentConfig& c, const std::string& v) { acc(c) = v; },
          [=](const ExperimentConfig& c) { return acc(const_cast<ExperimentConfig&>(c)); }};
}

template <typename Parse, typename Print, typename Access>
Field enum_field(std::string path, Access acc, Parse parse, Print print) {
  return {path,
          [=](ExperimentConfig& c, const std::string& v) {
            try {
              acc(c) = parse(v);
            } catch (const Error& e) {
              throw ConfigError(path + ": " + e.what());
            }
          },
          [=](const ExperimentConfig& c) {
            return std::string(print(acc(const_cast<ExperimentConfig&>(c))));
          }};
}

inline NegativeSampling negative_sampling_from_string(std::string_view s) {
  if (s == "random") return NegativeSampling::Random;
  if (s == "in_topic_excluded") return NegativeSampling::InTopicExcluded;
  if (s == "in_topic") return NegativeSampling::InTopic;
  throw Error("unknown negative sampling '" + std::string(s) + "'");
}
inline std::string_view to_string(NegativeSampling n) {
  switch (n) {
    case NegativeSampling::Random: return "random";
    case NegativeSampling::InTopicExcluded: return "in_topic_excluded";
    case NegativeSampling::InTopic: return "in_topic";
  }
  return "?";
}
inline StudentMode student_mode_from_string(std::string_view s) {
  if (s == "symmetric") return StudentMode::Symmetric;
  if (s == "asymmetric") return StudentMode::AsymmetricInheritDocs;
  throw Error("unknown student mode '" + std::string(s) + "'");
}
inline std::string_view to_string(StudentMode m) {
  return m == StudentMode::Symmetric ? "symmetric" : "asymmetric";
}

#define EM_NUM(T, path, expr) number_field<T>(path, [](ExperimentConfig& c) -> T& { return expr; })
#define EM_BOOL(path, expr) bool_field(path, [](ExperimentConfig& c) -> bool& { return expr; })

inline void add_train_fields(std::vector<Field>& f, const std::string& sec,
                             TrainConfig ExperimentConfig::*member) {
  auto acc = [member](ExperimentConfig& c) -> TrainConfig& { return c.*member; };
  f.push_back(number_field<std::size_t>(sec + ".steps",
                                        [=](ExperimentConfig& c) -> std::size_t& {
                                          return acc(c).steps;
                                        }));
  f.push_back(number_field<std::size_t>(sec + ".batch_size",
                                        [=](ExperimentConfig& c) -> std::size_t& {
                                          return acc(c).batch_size;
                                        }));
  f.push_back(number_field<double>(sec + ".lr", [=](ExperimentConfig& c) -> double& {
    return acc(c).peak_lr;
  }));
  f.push_back(number_field<double>(sec + ".warmup_fraction", [=](ExperimentConfig& c) -> double& {
    return acc(c).warmup_fraction;
  }));
  f.push_back(number_field<double>(sec + ".weight_decay", [=](ExperimentConfig& c) -> double& {
    return acc(c).weight_decay;
  }));
  f.push_back(number_field<double>(sec + ".temperature", [=](ExperimentConfig& c) -> double& {
    return acc(c).temperature;
  }));
  f.push_back(bool_field(sec + ".in_batch_negatives", [=](ExperimentConfig& c) -> bool& {
    return acc(c).in_batch_negatives;
  }));
  f.push_back(number_field<std::size_t>(sec + ".eval_every",
                                        [=](ExperimentConfig& c) -> std::size_t& {
                                          return acc(c).eval_every;
                                        }));
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(EM_NUM(std::uint64_t, "run.seed", c.seed));
    f.push_back(string_field("run.name", [](ExperimentConfig& c) -> std::string& { return c.name; }));
    f.push_back(string_field("run.output_dir",
                             [](ExperimentConfig& c) -> std::string& { return c.output_dir; }));

    f.push_back(EM_NUM(std::size_t, "data.topics", c.corpus.topics));
    f.push_back(EM_NUM(std::size_t, "data.docs_per_topic", c.corpus.docs_per_topic));
    f.push_back(EM_NUM(std::size_t, "data.queries_per_topic", c.corpus.queries_per_topic));
    f.push_back(EM_NUM(std::size_t, "data.pretrain_queries_per_topic",
                       c.corpus.pretrain_queries_per_topic));
    f.push_back(EM_NUM(std::size_t, "data.eval_queries", c.corpus.eval_queries));
    f.push_back(EM_NUM(std::size_t, "data.vocab_size", c.corpus.vocab_size));
    f.push_back(EM_NUM(std::size_t, "data.doc_len", c.corpus.doc_len));
    f.push_back(EM_NUM(std::size_t, "data.query_len", c.corpus.query_len));
    f.push_back(EM_NUM(double, "data.topic_mass", c.corpus.topic_mass));
    f.push_back(EM_NUM(double, "data.query_overlap", c.corpus.query_overlap));
    f.push_back(EM_NUM(std::size_t, "data.negatives_per_example", c.negatives_per_example));
    f.push_back(enum_field(
        "data.negative_sampling",
        [](ExperimentConfig& c) -> NegativeSampling& { return c.negative_sampling; },
        negative_sampling_from_string, [](NegativeSampling n) { return to_string(n); }));
    f.push_back(EM_NUM(std::size_t, "data.max_len", c.max_len));

    f.push_back(enum_field(
        "teacher.kind", [](ExperimentConfig& c) -> TeacherKind& { return c.teacher.kind; },
        teacher_kind_from_string, [](TeacherKind k) { return to_string(k); }));
    f.push_back(EM_NUM(std::size_t, "teacher.hidden", c.teacher.hidden));
    f.push_back(EM_NUM(std::size_t, "teacher.out_dim", c.teacher.out_dim));
    f.push_back(EM_NUM(std::size_t, "teacher.blocks", c.teacher.blocks));
    f.push_back(EM_BOOL("teacher.shared_towers", c.teacher.shared_towers));
    f.push_back(enum_field(
        "teacher.de_pooling",
        [](ExperimentConfig& c) -> PoolingKind& { return c.teacher.de_pooling; },
        pooling_from_string, [](PoolingKind k) { return to_string(k); }));
    f.push_back(enum_field(
        "teacher.dual_pooling",
        [](ExperimentConfig& c) -> PoolingKind& { return c.teacher.dual_pooling; },
        pooling_from_string, [](PoolingKind k) { return to_string(k); }));
    f.push_back(EM_NUM(double, "teacher.recon_weight", c.teacher.recon_weight));
    f.push_back(EM_BOOL("teacher.uses_train_split", c.teacher_uses_train_split));
    add_train_fields(f, "teacher_train", &ExperimentConfig::teacher_train);

    f.push_back(enum_field(
        "student.mode", [](ExperimentConfig& c) -> StudentMode& { return c.student.mode; },
        student_mode_from_string, [](StudentMode m) { return to_string(m); }));
    f.push_back(EM_NUM(std::size_t, "student.hidden", c.student.hidden));
    f.push_back(EM_NUM(std::size_t, "student.out_dim", c.student.out_dim));
    f.push_back(EM_NUM(std::size_t, "student.blocks", c.student.blocks));
    f.push_back(EM_BOOL("student.shared_towers", c.student.shared_towers));
    f.push_back(enum_field(
        "student.pooling", [](ExperimentConfig& c) -> PoolingKind& { return c.student.pooling; },
        pooling_from_string, [](PoolingKind k) { return to_string(k); }));
    f.push_back(EM_BOOL("student.use_teacher", c.use_teacher));
    add_train_fields(f, "student_train", &ExperimentConfig::student_train);

    f.push_back(EM_NUM(double, "loss.onehot", c.loss.onehot));
    f.push_back(EM_NUM(double, "loss.score_distill", c.loss.score_distill));
    f.push_back(enum_field(
        "loss.distill_kind",
        [](ExperimentConfig& c) -> DistillLoss& { return c.loss.distill_kind; },
        distill_loss_from_string, [](DistillLoss k) { return to_string(k); }));
    f.push_back(EM_NUM(double, "loss.embed_q", c.loss.embed_q));
    f.push_back(EM_NUM(double, "loss.embed_d", c.loss.embed_d));
    f.push_back(EM_BOOL("loss.squared_embed", c.loss.squared_embed));

    f.push_back(EM_BOOL("augment.enabled", c.querygen));
    f.push_back(EM_NUM(std::size_t, "augment.per_query", c.augment.per_query));
    f.push_back(EM_NUM(double, "augment.sigma", c.augment.sigma));
    f.push_back(EM_NUM(double, "augment.mask_prob", c.augment.mask_prob));
    f.push_back(EM_NUM(std::size_t, "augment.max_len", c.augment.ae.max_len));
    f.push_back(EM_NUM(std::size_t, "augment.latent", c.augment.ae.latent));
    f.push_back(EM_NUM(std::size_t, "augment.epochs", c.augment.ae.epochs));
    f.push_back(EM_NUM(std::size_t, "augment.batch_size", c.augment.ae.batch_size));
    f.push_back(EM_NUM(double, "augment.lr", c.augment.ae.lr));
    f.push_back(EM_NUM(double, "augment.train_sigma", c.augment.ae.train_sigma));
    f.push_back(EM_NUM(double, "augment.train_mask", c.augment.ae.train_mask));

    f.push_back(EM_NUM(std::size_t, "eval.retrieval_depth", c.retrieval_depth));
    f.push_back(EM_NUM(std::size_t, "eval.rerank_candidates", c.rerank_candidates));
    return f;
  }();
  return table;
}

#undef EM_NUM
#undef EM_BOOL

}  // namespace detail

/// Sets one dotted `section.key` to a textual value; unknown keys are rejected.
inline void set_config_value(ExperimentConfig& cfg, const std::string& path,
                             const std::string& value) {
  if (path == "run.preset") {
    try {
      cfg.apply_preset(value);
    } catch (const Error& e) {
      throw ConfigError(std::string("run.preset: ") + e.what());
    }
    return;
  }
  for (const auto& f : detail::fields()) {
    if (f.path == path) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + path + "'");
}

/// Cross-field checks run before any work starts.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  for (const auto* t : {&c.teacher_train, &c.student_train}) {
    const std::string sec = t == &c.teacher_train ? "teacher_train" : "student_train";
    if (!(t->warmup_fraction >= 0.0 && t->warmup_fraction < 1.0)) {
      fail(sec + ".warmup_fraction: must be in [0, 1)");
    }
    if (t->batch_size == 0) fail(sec + ".batch_size: must be positive");
    if (!(t->peak_lr > 0.0)) fail(sec + ".lr: must be positive");
    if (!(t->temperature > 0.0)) fail(sec + ".temperature: must be positive");
    if (!(t->weight_decay >= 0.0)) fail(sec + ".weight_decay: must be non-negative");
  }
  if (c.negatives_per_example < 1) fail("data.negatives_per_example: must be >= 1");
  const std::size_t need = c.negatives_per_example - 1;
  if (c.negative_sampling == NegativeSampling::InTopic && c.corpus.docs_per_topic <= need) {
    fail("data.negative_sampling: in_topic needs docs_per_topic > negatives_per_example - 1");
  }
  if (c.negative_sampling == NegativeSampling::InTopicExcluded &&
      (c.corpus.topics - 1) * c.corpus.docs_per_topic < need) {
    fail("data.negative_sampling: too few documents outside each topic");
  }
  if (c.corpus.query_overlap < 0.0 || c.corpus.query_overlap > 1.0) {
    fail("data.query_overlap: must be in [0, 1]");
  }
  if (c.corpus.topic_mass < 0.0 || c.corpus.topic_mass > 1.0) {
    fail("data.topic_mass: must be in [0, 1]");
  }
  for (double w : {c.loss.onehot, c.loss.score_distill, c.loss.embed_q, c.loss.embed_d}) {
    if (!(w >= 0.0)) fail("loss: weights must be non-negative");
  }
  if (c.loss.onehot + c.loss.score_distill + c.loss.embed_q + c.loss.embed_d <= 0.0) {
    fail("loss: at least one weight must be positive");
  }
  if (!c.use_teacher && (c.loss.score_distill > 0 || c.loss.embed_q > 0 || c.loss.embed_d > 0)) {
    fail("student.use_teacher: distillation weights need a teacher");
  }
  if (c.augment.sigma < 0.0) fail("augment.sigma: must be non-negative");
  if (c.augment.mask_prob < 0.0 || c.augment.mask_prob > 1.0) {
    fail("augment.mask_prob: must be in [0, 1]");
  }
  if (c.student.hidden == 0 || c.student.out_dim == 0 || c.teacher.hidden == 0 ||
      c.teacher.out_dim == 0) {
    fail("model sizes must be positive");
  }
  if (c.retrieval_depth == 0) fail("eval.retrieval_depth: must be >= 1");
  if (c.teacher.kind == TeacherKind::CrossEncoder &&
      (c.student.mode == StudentMode::AsymmetricInheritDocs || c.loss.embed_q > 0)) {
    fail("teacher.kind: a [CLS]-pooled cross encoder has no embeddings to inherit or match");
  }
}

/// Parses INI text. A `preset` key in [run] is applied first so that the
/// file's other keys refine it.
inline ExperimentConfig parse_config(const std::string& ini_text,
                                     const std::vector<std::string>& overrides = {}) {
  ExperimentConfig cfg;
  boost::property_tree::ptree tree;
  if (!ini_text.empty()) {
    std::istringstream in(ini_text);
    try {
      boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config syntax: ") + e.what());
    }
  }
  std::vector<std::pair<std::string, std::string>> values;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' must be inside a [section]");
    }
    for (const auto& [key, val] : body) values.emplace_back(section + "." + key, val.data());
  }
  std::vector<std::pair<std::string, std::string>> ov;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' must look like section.key=value");
    }
    ov.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  for (const auto* list : {&values, &ov}) {
    for (const auto& [k, v] : *list) {
      if (k == "run.preset") set_config_value(cfg, k, v);
    }
  }
  for (const auto* list : {&values, &ov}) {
    for (const auto& [k, v] : *list) {
      if (k != "run.preset") set_config_value(cfg, k, v);
    }
  }
  validate(cfg);
  return cfg;
}

/// Canonical INI rendering of every field (stable order).
inline std::string to_ini(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  if (!cfg.preset.empty()) os << "[run]\npreset = " << cfg.preset << "\n";
  for (const auto& f : detail::fields()) {
    const auto dot = f.path.find('.');
    const std::string sec = f.path.substr(0, dot);
    if (sec != section) {
      if (!(sec == "run" && !cfg.preset.empty())) os << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    os << f.path.substr(dot + 1) << " = " << f.get(cfg) << "\n";
  }
  return os.str();
}

}  // namespace embedmatch

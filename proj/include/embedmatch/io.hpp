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

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "embedmatch/distill.hpp"
#include "embedmatch/queryaug.hpp"
#include "embedmatch/retrieval.hpp"

namespace embedmatch {

inline constexpr int kFormatVersion = 1;

using nlohmann::json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes via a sibling temp file and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << content;
    if (!out.flush()) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

/// nlohmann::json prints doubles in shortest round-trip form.
inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

// ---------------------------------------------------------------------------
// Tensors and models
// ---------------------------------------------------------------------------

inline json to_json(const Mat& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Mat mat_from_json(const json& j, const std::string& what) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  Mat m(rows, cols);
  const auto& data = j.at("data");
  if (data.size() != rows * cols) throw Error("checkpoint: bad size for " + what);
  for (std::size_t i = 0; i < data.size(); ++i) m.data()[i] = data[i].get<double>();
  return m;
}

inline json to_json(const EncoderParams& p) {
  json params = json::object();
  p.for_each([&](const std::string& name, const Mat& m) { params[name] = to_json(m); });
  return json{{"shape",
               {{"vocab_size", p.shape.vocab_size},
                {"hidden", p.shape.hidden},
                {"out_dim", p.shape.out_dim},
                {"blocks", p.shape.blocks}}},
              {"pooling", std::string(to_string(p.pooling))},
              {"params", params}};
}

inline EncoderParams encoder_from_json(const json& j) {
  const auto& s = j.at("shape");
  EncoderShape shape{s.at("vocab_size").get<std::size_t>(), s.at("hidden").get<std::size_t>(),
                     s.at("out_dim").get<std::size_t>(), s.at("blocks").get<std::size_t>()};
  EncoderParams p =
      EncoderParams::zeros(shape, pooling_from_string(j.at("pooling").get<std::string>()));
  const auto& params = j.at("params");
  p.for_each([&](const std::string& name, Mat& m) {
    if (!params.contains(name)) throw Error("checkpoint: missing parameter " + name);
    Mat loaded = mat_from_json(params.at(name), name);
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      throw Error("checkpoint: shape mismatch for " + name);
    }
    m = std::move(loaded);
  });
  return p;
}

inline json to_json(const Affine& a) { return json{{"w", to_json(a.w)}, {"b", to_json(a.b)}}; }

inline Affine affine_from_json(const json& j) {
  return {mat_from_json(j.at("w"), "w"), mat_from_json(j.at("b"), "b")};
}

inline json to_json(const DEModel& m) {
  json j{{"query", to_json(m.query)}, {"shared", m.shared()}};
  if (m.doc) j["doc"] = to_json(*m.doc);
  return j;
}

inline DEModel de_from_json(const json& j) {
  DEModel m;
  m.query = encoder_from_json(j.at("query"));
  if (!j.at("shared").get<bool>()) m.doc = encoder_from_json(j.at("doc"));
  return m;
}

inline json to_json(const CEModel& m) {
  json j{{"encoder", to_json(m.encoder)}};
  if (const auto* cls = std::get_if<ClassificationHead>(&m.head)) {
    j["head"] = {{"kind", "cls"}, {"w", to_json(cls->w)}};
  } else {
    j["head"] = {{"kind", "dual"},
                 {"pooling", std::string(to_string(std::get<DualPoolHead>(m.head).kind))}};
  }
  if (m.decoder) j["decoder"] = to_json(*m.decoder);
  return j;
}

inline CEModel ce_from_json(const json& j) {
  CEModel m;
  m.encoder = encoder_from_json(j.at("encoder"));
  const auto& h = j.at("head");
  if (h.at("kind").get<std::string>() == "cls") {
    m.head = ClassificationHead{mat_from_json(h.at("w"), "head.w")};
  } else {
    m.head = DualPoolHead{pooling_from_string(h.at("pooling").get<std::string>())};
  }
  if (j.contains("decoder")) m.decoder = affine_from_json(j.at("decoder"));
  return m;
}

namespace detail {
inline void check_header(const json& j, const std::string& kind) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kFormatVersion) {
    throw Error("unsupported checkpoint format version");
  }
  const auto got = j.at("model_kind").get<std::string>();
  if (got != kind) throw Error("expected a " + kind + " checkpoint, got " + got);
}
}  // namespace detail

inline json teacher_to_json(const TeacherModel& t) {
  json j{{"format_version", kFormatVersion},
         {"model_kind", "teacher"},
         {"teacher_kind", std::string(to_string(t.kind))}};
  if (t.de) j["de"] = to_json(*t.de);
  if (t.ce) j["ce"] = to_json(*t.ce);
  return j;
}

inline TeacherModel teacher_from_json(const json& j) {
  detail::check_header(j, "teacher");
  TeacherModel t;
  t.kind = teacher_kind_from_string(j.at("teacher_kind").get<std::string>());
  if (j.contains("de")) t.de = de_from_json(j.at("de"));
  if (j.contains("ce")) t.ce = ce_from_json(j.at("ce"));
  if (!t.de && !t.ce) throw Error("teacher checkpoint holds no model");
  return t;
}

inline json student_to_json(const Student& s) {
  return json{{"format_version", kFormatVersion},
              {"model_kind", "student"},
              {"mode", s.asymmetric() ? "asymmetric" : "symmetric"},
              {"model", to_json(s.model)},
              {"projection", to_json(s.proj)}};
}

inline Student student_from_json(const json& j) {
  detail::check_header(j, "student");
  Student s;
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "asymmetric" && mode != "symmetric") throw Error("unknown student mode " + mode);
  s.mode = mode == "asymmetric" ? StudentMode::AsymmetricInheritDocs : StudentMode::Symmetric;
  s.model = de_from_json(j.at("model"));
  s.proj = affine_from_json(j.at("projection"));
  return s;
}

inline json autoencoder_to_json(const AutoencoderParams& a) {
  return json{{"format_version", kFormatVersion}, {"model_kind", "autoencoder"},
              {"max_len", a.max_len},             {"latent", a.latent},
              {"vocab_size", a.vocab_size},       {"enc", to_json(a.enc)},
              {"dec_w", to_json(a.dec_w)},        {"dec_b", to_json(a.dec_b)}};
}

inline AutoencoderParams autoencoder_from_json(const json& j) {
  detail::check_header(j, "autoencoder");
  return {j.at("max_len").get<std::size_t>(), j.at("latent").get<std::size_t>(),
          j.at("vocab_size").get<std::size_t>(), mat_from_json(j.at("enc"), "enc"),
          mat_from_json(j.at("dec_w"), "dec_w"), mat_from_json(j.at("dec_b"), "dec_b")};
}

// ---------------------------------------------------------------------------
// Index and rankings
// ---------------------------------------------------------------------------

inline json index_to_json(const DocumentIndex& idx) {
  json rows = json::array();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto r = idx.embeddings.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return json{{"version", kFormatVersion},
              {"k", idx.dim()},
              {"N", idx.size()},
              {"encoder_hash", idx.meta.encoder_hash},
              {"pooling", idx.meta.pooling},
              {"empty_query", idx.meta.empty_query},
              {"doc_ids", idx.doc_ids},
              {"embeddings", rows}};
}

inline DocumentIndex index_from_json(const json& j) {
  if (j.at("version").get<int>() != kFormatVersion) throw Error("unsupported index version");
  DocumentIndex idx;
  const auto k = j.at("k").get<std::size_t>();
  const auto n = j.at("N").get<std::size_t>();
  idx.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
  idx.meta = {j.at("encoder_hash").get<std::string>(), j.at("pooling").get<std::string>(),
              j.at("empty_query").get<bool>()};
  const auto& rows = j.at("embeddings");
  if (idx.doc_ids.size() != n || rows.size() != n) throw Error("index: row count mismatch");
  idx.embeddings = Mat(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != k) throw Error("index: row " + std::to_string(i) + " has wrong width");
    for (std::size_t c = 0; c < k; ++c) idx.embeddings(i, c) = rows[i][c].get<double>();
  }
  return idx;
}

/// TSV lines: query_id, doc_id, rank (1-based), score.
inline std::string rankings_to_tsv(const std::vector<RankedList>& rankings,
                                   const std::vector<std::string>& doc_ids) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& r : rankings) {
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      os << r.query_id << '\t' << doc_ids.at(r.items[i].doc) << '\t' << (i + 1) << '\t'
         << r.items[i].score << '\n';
    }
  }
  return os.str();
}

inline std::vector<RankedList> rankings_from_tsv(const std::string& text,
                                                 const std::vector<std::string>& doc_ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < doc_ids.size(); ++i) index.emplace(doc_ids[i], i);
  std::vector<RankedList> out;
  std::map<std::string, std::size_t> pos;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string qid, did, rank, score;
    if (!std::getline(ls, qid, '\t') || !std::getline(ls, did, '\t') ||
        !std::getline(ls, rank, '\t') || !std::getline(ls, score)) {
      throw Error("rankings line " + std::to_string(lineno) + ": expected 4 columns");
    }
    auto it = index.find(did);
    if (it == index.end()) {
      throw Error("rankings line " + std::to_string(lineno) + ": unknown doc id " + did);
    }
    auto [p, fresh] = pos.emplace(qid, out.size());
    if (fresh) out.push_back({qid, {}});
    out[p->second].items.push_back({it->second, std::stod(score)});
  }
  return out;
}

}  // namespace embedmatch

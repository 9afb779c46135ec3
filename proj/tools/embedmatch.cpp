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

// Command-line driver: one subcommand per pipeline stage.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.

#include <iostream>

#include "CLI11.hpp"
#include "embedmatch/pipeline.hpp"

namespace em = embedmatch;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string preset;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "INI config file");
  sub->add_option("-s,--set", c.overrides, "override, section.key=value (repeatable)");
  sub->add_option("-p,--preset", c.preset, "named recipe, e.g. table1-row4");
}

em::ExperimentConfig load_config(const Common& c) {
  std::string text;
  if (!c.config_path.empty()) {
    if (!std::filesystem::exists(c.config_path)) {
      throw em::ConfigError("--config: no such file " + c.config_path);
    }
    text = em::read_file(c.config_path);
  }
  auto ov = c.overrides;
  // The flag wins over a preset named in the file.
  if (!c.preset.empty()) ov.push_back("run.preset=" + c.preset);
  return em::parse_config(text, ov);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embedmatch: teacher/student dense retrieval experiments"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus, queries and qrels");
  auto* teacher = app.add_subcommand("train-teacher", "train the teacher model");
  auto* index = app.add_subcommand("build-index", "embed every document with the teacher");
  auto* distill = app.add_subcommand("distill", "train one student recipe");
  auto* augment = app.add_subcommand("augment", "train the query autoencoder, generate queries");
  auto* eval = app.add_subcommand("eval", "score a rankings file or the named student");
  auto* bounds = app.add_subcommand("bounds", "check the risk bounds for the named student");
  auto* report = app.add_subcommand("report", "collect metrics into one CSV");
  auto* presets = app.add_subcommand("presets", "list recipe presets");
  for (auto* s : {gen, teacher, index, distill, augment, eval, bounds, report}) add_common(s, common);

  std::string rankings;
  eval->add_option("--rankings", rankings, "rankings TSV (query_id, doc_id, rank, score)");
  std::vector<std::string> inputs;
  report->add_option("inputs", inputs, "metric JSON files; default: everything under the output root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (presets->parsed()) {
      for (const auto& p : em::preset_names()) std::cout << p << '\n';
      return 0;
    }
    const em::ExperimentConfig cfg = load_config(common);
    em::json manifest;
    if (gen->parsed()) manifest = em::stage_gen_data(cfg);
    if (teacher->parsed()) manifest = em::stage_train_teacher(cfg);
    if (index->parsed()) manifest = em::stage_build_index(cfg);
    if (distill->parsed()) manifest = em::stage_distill(cfg);
    if (augment->parsed()) manifest = em::stage_augment(cfg);
    if (eval->parsed()) {
      manifest = em::stage_eval(
          cfg, rankings.empty() ? std::nullopt : std::optional<std::filesystem::path>(rankings));
    }
    if (bounds->parsed()) manifest = em::stage_bounds(cfg);
    if (report->parsed()) {
      manifest = em::stage_report(cfg, {inputs.begin(), inputs.end()});
    }
    for (const auto& o : manifest.at("outputs")) {
      std::cout << o.at("path").get<std::string>() << '\t' << o.at("sha256").get<std::string>()
                << '\n';
    }
    return 0;
  } catch (const em::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

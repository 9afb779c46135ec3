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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <map>

#include "embedmatch/pipeline.hpp"
#include "support.hpp"

using namespace embedmatch;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("embedmatch_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd =
      env + " " + std::string(EMBEDMATCH_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

// Every stage against the tiny configuration.
void full_pipeline(const ExperimentConfig& base) {
  stage_gen_data(base);
  stage_train_teacher(base);
  stage_build_index(base);
  stage_augment(base);
  for (const char* p : {"table1-row2", "table1-row4", "table1-row5"}) {
    ExperimentConfig c = base;
    c.apply_preset(p);
    c.name = p;
    stage_distill(c);
    stage_eval(c, std::nullopt);
    stage_bounds(c);
  }
  stage_report(base, {});
}

}  // namespace

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh_dir("codes");
  const std::string env = "EMBEDMATCH_OUTPUT_ROOT=" + dir.string();
  EXPECT_EQ(run_cli("presets"), 0);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("gen-data -s student.hidden=abc", env), 2);
  EXPECT_EQ(run_cli("gen-data -s nope.key=1", env), 2);
  EXPECT_EQ(run_cli("gen-data -c " + (dir / "missing.ini").string(), env), 2);
  EXPECT_EQ(run_cli("gen-data -p no-such-preset", env), 2);
  EXPECT_EQ(run_cli("gen-data -s data.docs_per_topic=3", env), 2);
  // Valid config, but the teacher stage has no dataset to read.
  EXPECT_EQ(run_cli("train-teacher", env), 1);
  EXPECT_EQ(run_cli("report " + (dir / "absent.json").string(), env), 1);
}

TEST(Cli, OutputRootComesFromTheEnvironment) {
  const fs::path dir = fresh_dir("env");
  const fs::path cfg_dir = fresh_dir("env_cfg");
  std::ofstream(cfg_dir / "c.ini") << "[run]\noutput_dir = " << (cfg_dir / "ignored").string()
                                   << "\n[data]\ntopics = 2\ndocs_per_topic = 6\n";
  ASSERT_EQ(run_cli("gen-data -c " + (cfg_dir / "c.ini").string(),
                    "EMBEDMATCH_OUTPUT_ROOT=" + dir.string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "manifests" / "gen-data.json"));
  EXPECT_FALSE(fs::exists(cfg_dir / "ignored"));
  const json m = json::parse(read_file(dir / "manifests" / "gen-data.json"));
  for (const char* k : {"schema_version", "stage", "config_sha256", "seed", "outputs"}) {
    EXPECT_TRUE(m.contains(k)) << k;
  }
  for (const auto& o : m.at("outputs")) {
    const std::string bytes = read_file(dir / o.at("path").get<std::string>());
    EXPECT_EQ(o.at("sha256"), sha256_hex(bytes));
    EXPECT_EQ(o.at("bytes"), bytes.size());
  }
}

TEST(Report, EmptyRootGivesHeaderOnly) {
  const fs::path dir = fresh_dir("report_empty");
  ExperimentConfig c;
  c.output_dir = dir.string();
  stage_report(c, {});
  EXPECT_EQ(read_file(dir / "report" / "report.csv"), std::string(kReportHeader) + "\n");
}

TEST(Report, MissingInputsAreListed) {
  try {
    build_report({"/nonexistent/a.json", "/nonexistent/b.json"});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("a.json"), std::string::npos);
    EXPECT_NE(msg.find("b.json"), std::string::npos);
  }
}

TEST(Report, ValuesRoundTrip) {
  const fs::path dir = fresh_dir("report_values");
  write_atomic(dir / "x" / "metrics.json",
               R"({"experiment": "e", "metrics": {"a": 0.30000000000000004, "b": 12}})");
  const std::string csv = build_report({dir / "x" / "metrics.json"});
  EXPECT_EQ(csv, std::string(kReportHeader) +
                     "\ne,metrics.json,a,0.30000000000000004\ne,metrics.json,b,12\n");
}

TEST(Pipeline, RerunIsByteIdentical) {
  const fs::path dir = fresh_dir("determinism");
  const ExperimentConfig c = emtest::tiny_config(dir.string(), 2);
  full_pipeline(c);
  const auto first = snapshot(dir);
  EXPECT_TRUE(first.count("report/report.csv"));
  EXPECT_TRUE(first.count("bounds/table1-row4/lemma4.json"));
  fs::remove_all(dir);
  full_pipeline(c);
  const auto second = snapshot(dir);
  ASSERT_EQ(first.size(), second.size());
  for (const auto& [path, bytes] : first) EXPECT_EQ(second.at(path), bytes) << path;
}

TEST(Pipeline, StageOrderingErrors) {
  const fs::path dir = fresh_dir("ordering");
  ExperimentConfig c = emtest::tiny_config(dir.string());
  stage_gen_data(c);
  stage_train_teacher(c);
  c.apply_preset("table1-row4");
  c.name = "row4";
  EXPECT_THROW(stage_distill(c), Error);  // no index yet
  stage_build_index(c);
  ExperimentConfig other = c;
  other.teacher_train.steps = 5;
  stage_train_teacher(other);  // replaces the checkpoint behind the index
  EXPECT_THROW(stage_distill(c), Error);
  c.apply_preset("table1-row5");
  EXPECT_THROW(stage_distill(c), Error);  // augment never ran
}

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

// Small end-to-end run through the library: corpus, teacher, index, and two
// students (score distillation vs. inherited docs + embedding matching).
//
//   ./quickstart [output_dir]

#include <iostream>

#include "embedmatch/pipeline.hpp"

namespace em = embedmatch;

int main(int argc, char** argv) {
  em::ExperimentConfig cfg = em::parse_config("", {"data.topics=4", "data.docs_per_topic=20",
                                                  "data.queries_per_topic=60", "data.eval_queries=40",
                                                  "data.pretrain_queries_per_topic=60",
                                                  "teacher_train.steps=800",
                                                  "student_train.steps=800"});
  cfg.output_dir = argc > 1 ? argv[1] : "quickstart-out";
  try {
    em::stage_gen_data(cfg);
    em::stage_train_teacher(cfg);
    em::stage_build_index(cfg);
    for (const char* row : {"table1-row2", "table1-row4"}) {
      em::ExperimentConfig c = cfg;
      c.apply_preset(row);
      c.name = row;
      em::stage_distill(c);
      const auto m = em::json::parse(em::read_file(em::output_root(c) / "students" / row /
                                                   "metrics.json"))["metrics"];
      std::cout << row << "  recall@5=" << m["full/recall@5"].get<double>()
                << "  r_emb_q=" << m["align/r_emb_q"].get<double>() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

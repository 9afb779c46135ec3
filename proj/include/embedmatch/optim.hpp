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
#include <vector>

#include "embedmatch/numerics.hpp"

namespace embedmatch {

struct ScheduleConfig {
  std::size_t total_steps = 1000;
  double peak_lr = 1e-3;
  double warmup_fraction = 0.05;
};

/// Linear warmup 0 -> peak over the warmup steps, then linear decay to 0 at
/// the final step.
inline double lr_at(std::size_t step, const ScheduleConfig& cfg) {
  if (step > cfg.total_steps) {
    throw Error("lr_at: step " + std::to_string(step) + " outside [0, " +
                std::to_string(cfg.total_steps) + "]");
  }
  if (!(cfg.warmup_fraction >= 0.0 && cfg.warmup_fraction < 1.0)) {
    throw Error("warmup fraction must be in [0, 1)");
  }
  const auto warmup = static_cast<std::size_t>(
      std::floor(cfg.warmup_fraction * static_cast<double>(cfg.total_steps)));
  if (cfg.total_steps == 0) return 0.0;
  if (step < warmup) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const std::size_t decay = cfg.total_steps - warmup;
  return cfg.peak_lr * static_cast<double>(cfg.total_steps - step) / static_cast<double>(decay);
}

/// A trainable tensor and its gradient buffer.
struct ParamRef {
  Mat* value;
  Mat* grad;
  bool decay;  // apply decoupled weight decay
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Options o) : opt_(o) {}

  void step(const std::vector<ParamRef>& params, double lr) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value->size(), 0.0);
        v_.emplace_back(p.value->size(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw Error("AdamW: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& w = params[i].value->data();
      const auto& g = params[i].grad->data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g[j];
        v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g[j] * g[j];
        const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt_.eps);
        if (params[i].decay) w[j] -= lr * opt_.weight_decay * w[j];
        w[j] -= lr * update;
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  Options opt_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace embedmatch

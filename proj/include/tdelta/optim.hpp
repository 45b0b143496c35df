// Copyright 2026 The tdelta Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>

#include "tdelta/error.hpp"
#include "tdelta/model.hpp"

namespace tdelta {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 256;
  double base_lr = 0.001;
  double warmup_fraction = 0.10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  // Worker threads for per-page forward/backward inside a batch. Results
  // are bitwise reproducible for a fixed thread count; 1 is strict serial.
  std::size_t threads = 1;

  void validate() const {
    const auto bad = [](const std::string& what) { fail(ErrorKind::kInvalidConfig, what); };
    if (epochs < 1) bad("epochs must be >= 1");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) bad("base_lr must be finite and >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) bad("warmup_fraction must be in [0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) bad("epsilon must be positive");
    if (threads < 1) bad("threads must be >= 1");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Linear warmup from 0 to base_lr over round(warmup_fraction * total)
/// steps, then half-cosine decay to 0 at `total_steps`.
inline double lr_at_step(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (total_steps == 0) fail(ErrorKind::kInvalidSchedule, "schedule needs total_steps > 0");
  if (step > total_steps) {
    fail(ErrorKind::kInvalidSchedule, "step " + std::to_string(step) + " exceeds total_steps " +
                                          std::to_string(total_steps));
  }
  const auto warmup = static_cast<std::size_t>(
      std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) {
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps == warmup) return cfg.base_lr;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct OptimizerState {
  ModelWeights m;
  ModelWeights v;
  std::uint64_t step = 0;
};

inline OptimizerState make_optimizer_state(const ModelConfig& cfg) {
  return {zero_weights(cfg), zero_weights(cfg), 0};
}

/// Throws kNanGradient naming the first non-finite gradient coordinate.
inline void check_finite_gradients(const ModelWeights& grad, const ModelConfig& cfg) {
  for_each_tensor(grad, cfg, [&](const TensorId& id, const auto& g) {
    const double* data = g.data();
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (!std::isfinite(data[i])) {
        fail(ErrorKind::kNanGradient, "non-finite gradient in " + id.name + " at flat index " +
                                          std::to_string(i) + " (value " +
                                          std::to_string(data[i]) + ")");
      }
    }
  });
}

/// One bias-corrected Adam update: the step counter is advanced before the
/// corrections are computed.
inline void adam_step(ModelWeights& weights, const ModelWeights& grad, OptimizerState& state,
                      double lr, const TrainConfig& tc, const ModelConfig& cfg) {
  check_finite_gradients(grad, cfg);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(tc.beta1, t);
  const double c2 = 1.0 - std::pow(tc.beta2, t);

  std::vector<double*> m_ptrs;
  std::vector<double*> v_ptrs;
  std::vector<const double*> g_ptrs;
  for_each_tensor(state.m, cfg, [&](const TensorId&, auto& x) { m_ptrs.push_back(x.data()); });
  for_each_tensor(state.v, cfg, [&](const TensorId&, auto& x) { v_ptrs.push_back(x.data()); });
  for_each_tensor(grad, cfg, [&](const TensorId&, const auto& x) { g_ptrs.push_back(x.data()); });
  std::size_t k = 0;
  for_each_tensor(weights, cfg, [&](const TensorId&, auto& x) {
    double* w = x.data();
    double* m = m_ptrs[k];
    double* v = v_ptrs[k];
    const double* g = g_ptrs[k];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * g[i];
      v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + tc.epsilon);
    }
    ++k;
  });
}

}  // namespace tdelta

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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdelta/gradients.hpp"
#include "tdelta/model.hpp"
#include "tdelta/rng.hpp"
#include "tdelta/trainer.hpp"

namespace tdelta {

struct GradCheckEntry {
  std::string name;
  std::string kind;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

struct GradCheckOptions {
  std::size_t num_blocks = 4;
  // Weights are drawn i.i.d. U(-weight_range, weight_range). At the
  // training init the tiny check models have near-uniform attention and
  // gradients near the finite-difference rounding floor.
  double weight_range = 1.0;
  // Floor of the relative-error denominator.
  double denominator_floor = 1e-8;
  // Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  // Applied to the analytic gradient before comparison (harness self-test).
  std::function<void(ModelWeights&)> corrupt_gradient;
};

/// Random labeled sequence for gradient checking: boxes on a 1000x1000 page.
inline Sample random_check_sample(std::size_t num_blocks, std::uint64_t seed) {
  CounterRng rng(seed, 0x6772616468ULL);
  Page page{"gradcheck", 1000.0, 1000.0, {}, {}};
  for (std::size_t i = 0; i < num_blocks; ++i) {
    const double x1 = rng.uniform(0.0, 800.0);
    const double y1 = rng.uniform(0.0, 900.0);
    const double x2 = x1 + rng.uniform(20.0, 200.0);
    const double y2 = y1 + rng.uniform(5.0, 100.0);
    const auto label = static_cast<BlockLabel>(rng.uniform_int(0, kNumClasses - 1));
    page.blocks.push_back({{x1, y1, x2, y2}, label});
  }
  return make_sample(page);
}

inline ModelWeights check_weights(const ModelConfig& cfg, std::uint64_t seed, double range) {
  ModelWeights w = zero_weights(cfg);
  std::uint64_t stream = 0;
  for_each_tensor(w, cfg, [&](const TensorId&, auto& t) {
    CounterRng rng(seed, 0x636865636BULL + stream++);
    double* data = t.data();
    for (Eigen::Index i = 0; i < t.size(); ++i) data[i] = rng.uniform(-range, range);
  });
  return w;
}

/// Compares analytic gradients to central differences for every tensor.
/// Relative error is |a - fd| / max(|a|, |fd|, floor), floor 1e-8 by default.
inline GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed, double eps,
                                  double tol, const GradCheckOptions& opts = {}) {
  cfg.validate();
  const Sample sample = random_check_sample(opts.num_blocks, seed);
  const Mask mask(sample.length(), 1);
  ModelWeights weights = check_weights(cfg, seed, opts.weight_range);

  const ForwardTrace tr = forward(sample.features, sample.length(), weights, cfg);
  ModelWeights analytic = backward(tr, sample.labels, mask, weights, cfg);
  if (opts.corrupt_gradient) opts.corrupt_gradient(analytic);

  const auto loss_at = [&](const ModelWeights& w) {
    return trace_loss(forward(sample.features, sample.length(), w, cfg), sample.labels, mask);
  };

  std::vector<const double*> analytic_ptrs;
  for_each_tensor(analytic, cfg,
                  [&](const TensorId&, const auto& t) { analytic_ptrs.push_back(t.data()); });

  GradCheckReport report;
  report.tolerance = tol;
  std::size_t tensor_index = 0;
  for_each_tensor(weights, cfg, [&](const TensorId& id, auto& t) {
    GradCheckEntry entry{id.name, std::string(id.kind), 0, 0.0, 0.0, true};
    const double* a = analytic_ptrs[tensor_index];
    const auto size = static_cast<std::size_t>(t.size());
    std::vector<std::size_t> coords;
    if (opts.max_coords_per_tensor == 0 || size <= opts.max_coords_per_tensor) {
      for (std::size_t i = 0; i < size; ++i) coords.push_back(i);
    } else {
      CounterRng pick(seed, 0x1000 + tensor_index);
      for (std::size_t k = 0; k < opts.max_coords_per_tensor; ++k) {
        coords.push_back(static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(size) - 1)));
      }
    }
    double* data = t.data();
    for (const std::size_t i : coords) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = loss_at(weights);
      data[i] = saved - eps;
      const double down = loss_at(weights);
      data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double err = std::abs(a[i] - fd);
      const double denom = std::max({std::abs(a[i]), std::abs(fd), opts.denominator_floor});
      entry.max_rel_error = std::max(entry.max_rel_error, err / denom);
      entry.max_abs_error = std::max(entry.max_abs_error, err);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error < tol;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
    ++tensor_index;
  });
  return report;
}

}  // namespace tdelta

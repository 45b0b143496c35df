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
#include <bit>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tdelta/error.hpp"
#include "tdelta/geometry.hpp"
#include "tdelta/gradients.hpp"
#include "tdelta/model.hpp"
#include "tdelta/optim.hpp"
#include "tdelta/rng.hpp"

namespace tdelta {

/// A page ready for the model: blocks in raster order, features and gold
/// labels aligned row by row.
struct Sample {
  std::string page_id;
  Matrix features;
  std::vector<BlockLabel> labels;

  std::size_t length() const noexcept { return labels.size(); }
};

inline Sample make_sample(const Page& raw) {
  const Page page = order_blocks(raw);
  Sample s;
  s.page_id = page.page_id;
  s.features = page_features(page);
  s.labels.reserve(page.blocks.size());
  for (std::size_t i = 0; i < page.blocks.size(); ++i) {
    if (!page.blocks[i].label) {
      fail(ErrorKind::kValidation, "page '" + page.page_id + "' block " + std::to_string(i) +
                                       " has no gold label");
    }
    s.labels.push_back(*page.blocks[i].label);
  }
  return s;
}

/// Samples for every page with at least one block.
inline std::vector<Sample> make_samples(std::span<const Page> pages) {
  std::vector<Sample> out;
  out.reserve(pages.size());
  for (const Page& p : pages) {
    if (!p.blocks.empty()) out.push_back(make_sample(p));
  }
  return out;
}

/// Right-padded batch. Rows past `lengths[b]` are zero features with
/// mask 0; the attention mask and the loss mask both derive from `lengths`.
struct PaddedBatch {
  std::size_t max_length = 0;
  std::vector<Matrix> features;
  std::vector<std::size_t> lengths;
  std::vector<std::vector<BlockLabel>> labels;
  std::vector<Mask> masks;

  std::size_t size() const noexcept { return lengths.size(); }
};

inline PaddedBatch make_batch(std::span<const Sample* const> samples) {
  PaddedBatch batch;
  for (const Sample* s : samples) batch.max_length = std::max(batch.max_length, s->length());
  const auto rows = static_cast<Eigen::Index>(batch.max_length);
  for (const Sample* s : samples) {
    Matrix x = Matrix::Zero(rows, static_cast<Eigen::Index>(kFeatureDim));
    x.topRows(s->features.rows()) = s->features;
    batch.features.push_back(std::move(x));
    batch.lengths.push_back(s->length());
    std::vector<BlockLabel> labels(batch.max_length, BlockLabel::kOutside);
    std::copy(s->labels.begin(), s->labels.end(), labels.begin());
    batch.labels.push_back(std::move(labels));
    Mask mask(batch.max_length, 0);
    std::fill_n(mask.begin(), s->length(), std::uint8_t{1});
    batch.masks.push_back(std::move(mask));
  }
  return batch;
}

namespace detail {

/// Runs fn(i) for i in [0, n) over `threads` contiguous chunks.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi, t] { fn(lo, hi, t); });
  }
  for (auto& th : pool) th.join();
}

inline void add_into(ModelWeights& dst, const ModelWeights& src, const ModelConfig& cfg) {
  std::vector<const double*> ptrs;
  for_each_tensor(src, cfg, [&](const TensorId&, const auto& x) { ptrs.push_back(x.data()); });
  std::size_t k = 0;
  for_each_tensor(dst, cfg, [&](const TensorId&, auto& x) {
    double* d = x.data();
    const double* s = ptrs[k++];
    for (Eigen::Index i = 0; i < x.size(); ++i) d[i] += s[i];
  });
}

}  // namespace detail

/// Per-page forward passes over a padded batch.
inline std::vector<ForwardTrace> forward_batch(const PaddedBatch& batch, const ModelWeights& w,
                                               const ModelConfig& cfg, std::size_t threads = 1) {
  std::vector<ForwardTrace> out(batch.size());
  detail::parallel_chunks(batch.size(), threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t b = lo; b < hi; ++b) {
      out[b] = forward(batch.features[b], batch.lengths[b], w, cfg);
    }
  });
  return out;
}

/// Batch loss: the mean over pages of each page's mean block cross entropy.
/// Adds its gradient into `grad` and returns the loss.
inline double batch_gradients(const PaddedBatch& batch, const ModelWeights& w,
                              const ModelConfig& cfg, std::size_t threads, ModelWeights& grad) {
  std::size_t live = 0;
  for (std::size_t L : batch.lengths) live += L > 0;
  if (live == 0) fail(ErrorKind::kUndefinedLoss, "batch has no real blocks");
  const double scale = 1.0 / static_cast<double>(live);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch.size()));
  std::vector<ModelWeights> partial;
  std::vector<double> loss(batch.size(), 0.0);
  if (workers > 1) {
    for (std::size_t t = 0; t < workers; ++t) partial.push_back(zero_weights(cfg));
  }
  detail::parallel_chunks(batch.size(), workers, [&](std::size_t lo, std::size_t hi, std::size_t t) {
    ModelWeights& acc = workers > 1 ? partial[t] : grad;
    for (std::size_t b = lo; b < hi; ++b) {
      if (batch.lengths[b] == 0) continue;
      const ForwardTrace tr = forward(batch.features[b], batch.lengths[b], w, cfg);
      loss[b] = accumulate_gradients(tr, batch.labels[b], batch.masks[b], w, cfg, scale, acc);
    }
  });
  for (auto& p : partial) detail::add_into(grad, p, cfg);
  double total = 0.0;
  for (double l : loss) total += l;
  return total * scale;
}

inline double batch_loss(const PaddedBatch& batch, const ModelWeights& w, const ModelConfig& cfg) {
  double total = 0.0;
  std::size_t live = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch.lengths[b] == 0) continue;
    const ForwardTrace tr = forward(batch.features[b], batch.lengths[b], w, cfg);
    total += trace_loss(tr, batch.labels[b], batch.masks[b]);
    ++live;
  }
  if (live == 0) fail(ErrorKind::kUndefinedLoss, "batch has no real blocks");
  return total / static_cast<double>(live);
}

struct DatasetScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean per-page loss and pooled block accuracy.
inline DatasetScore score_samples(std::span<const Sample> samples, const ModelWeights& w,
                                  const ModelConfig& cfg, std::size_t threads = 1) {
  std::vector<double> loss(samples.size(), 0.0);
  std::vector<std::size_t> correct(samples.size(), 0);
  detail::parallel_chunks(samples.size(), threads, [&](std::size_t lo, std::size_t hi, std::size_t) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Sample& s = samples[i];
      const ForwardTrace tr = forward(s.features, s.length(), w, cfg);
      const Mask mask(s.length(), 1);
      loss[i] = trace_loss(tr, s.labels, mask);
      for (std::size_t r = 0; r < s.length(); ++r) {
        correct[i] += argmax_label(tr.probs.row(static_cast<Eigen::Index>(r))) == s.labels[r];
      }
    }
  });
  DatasetScore out;
  std::size_t blocks = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.loss += loss[i];
    hits += correct[i];
    blocks += samples[i].length();
  }
  if (!samples.empty()) out.loss /= static_cast<double>(samples.size());
  out.accuracy = blocks ? static_cast<double>(hits) / static_cast<double>(blocks) : 0.0;
  return out;
}

/// Length buckets keyed by the next power of two of the sequence length.
inline std::map<std::size_t, std::vector<std::size_t>> length_buckets(
    std::span<const Sample> samples, std::span<const std::size_t> order) {
  std::map<std::size_t, std::vector<std::size_t>> buckets;
  for (const std::size_t i : order) buckets[std::bit_ceil(samples[i].length())].push_back(i);
  return buckets;
}

inline std::size_t steps_per_epoch(std::span<const Sample> samples, std::size_t batch_size) {
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t steps = 0;
  for (const auto& [key, members] : length_buckets(samples, order)) {
    steps += (members.size() + batch_size - 1) / batch_size;
  }
  return steps;
}

/// Batches for one epoch: seeded shuffle, bucket by length, chunk, then
/// shuffle the batch order.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::span<const Sample> samples,
                                                           std::size_t batch_size,
                                                           std::uint64_t seed, std::size_t epoch) {
  CounterRng rng(seed, 0x7261696EULL + epoch);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (const auto& [key, members] : length_buckets(samples, order)) {
    for (std::size_t lo = 0; lo < members.size(); lo += batch_size) {
      const std::size_t hi = std::min(members.size(), lo + batch_size);
      batches.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(lo),
                           members.begin() + static_cast<std::ptrdiff_t>(hi));
    }
  }
  rng.shuffle(std::span<std::vector<std::size_t>>(batches));
  return batches;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
  double lr = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainResult {
  ModelWeights weights;
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Adam + warmup/cosine training. Returns the weights of the epoch with the
/// lowest validation loss (lowest training loss when `val` is empty).
inline TrainResult train(std::span<const Page> train_pages, std::span<const Page> val_pages,
                         const ModelConfig& cfg, const TrainConfig& tc,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  tc.validate();
  const std::vector<Sample> train_set = make_samples(train_pages);
  const std::vector<Sample> val_set = make_samples(val_pages);
  if (train_set.empty()) fail(ErrorKind::kEmptyDataset, "training set has no non-empty pages");

  ModelWeights weights = init_weights(cfg, tc.seed);
  OptimizerState state = make_optimizer_state(cfg);
  const std::size_t total_steps = steps_per_epoch(train_set, tc.batch_size) * tc.epochs;

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_pages = 0;
    double lr = 0.0;
    for (const auto& members : epoch_batches(train_set, tc.batch_size, tc.seed, epoch)) {
      std::vector<const Sample*> ptrs;
      for (std::size_t i : members) ptrs.push_back(&train_set[i]);
      const PaddedBatch batch = make_batch(ptrs);
      ModelWeights grad = zero_weights(cfg);
      const double loss = batch_gradients(batch, weights, cfg, tc.threads, grad);
      epoch_loss += loss * static_cast<double>(batch.size());
      epoch_pages += batch.size();
      ++step;
      lr = lr_at_step(step, total_steps, tc);
      adam_step(weights, grad, state, lr, tc, cfg);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / static_cast<double>(epoch_pages);
    m.lr = lr;
    double key = m.train_loss;
    if (!val_set.empty()) {
      const DatasetScore vs = score_samples(val_set, weights, cfg, tc.threads);
      m.val_loss = vs.loss;
      m.val_acc = vs.accuracy;
      key = vs.loss;
    }
    if (key < best) {
      best = key;
      result.weights = weights;
      result.best_epoch = epoch;
    }
    result.log.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  if (result.best_epoch == 0) {
    result.weights = weights;
    result.best_epoch = tc.epochs;
  }
  return result;
}

}  // namespace tdelta

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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdelta/error.hpp"
#include "tdelta/geometry.hpp"
#include "tdelta/rng.hpp"

namespace tdelta {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Architecture hyperparameters. `embed_dim` is kept equal to
/// `hidden_size` by the defaults and the config loader.
struct ModelConfig {
  std::size_t hidden_size = 128;
  std::size_t num_layers = 8;
  std::size_t num_heads = 4;
  std::size_t attention_out = 128;
  std::size_t embed_dim = 128;
  std::size_t input_dim = kFeatureDim;
  std::size_t num_classes = kNumClasses;

  std::size_t head_dim() const noexcept { return attention_out / num_heads; }

  void validate() const {
    const auto bad = [](const std::string& what) { fail(ErrorKind::kInvalidConfig, what); };
    if (hidden_size == 0) bad("hidden_size must be positive");
    if (num_layers == 0) bad("num_layers must be positive");
    if (num_heads == 0) bad("num_heads must be positive");
    if (attention_out == 0) bad("attention_out must be positive");
    if (embed_dim == 0) bad("embed_dim must be positive");
    if (attention_out % num_heads != 0) bad("attention_out must be divisible by num_heads");
    if (input_dim != kFeatureDim) bad("input_dim is fixed at 8");
    if (num_classes != kNumClasses) bad("num_classes is fixed at 4");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline ModelConfig make_config(std::size_t hidden, std::size_t layers, std::size_t heads,
                               std::size_t attention_out) {
  ModelConfig cfg;
  cfg.hidden_size = hidden;
  cfg.num_layers = layers;
  cfg.num_heads = heads;
  cfg.attention_out = attention_out;
  cfg.embed_dim = hidden;
  return cfg;
}

/// One LSTM direction. Gate blocks are stacked [input, forget, cell, output]
/// along the rows; a single bias vector per direction.
struct LstmDirection {
  Matrix w_ih;
  Matrix w_hh;
  RowVector bias;
};

struct LstmLayer {
  LstmDirection fwd;
  LstmDirection bwd;
};

struct ModelWeights {
  Matrix w_embed;
  RowVector b_embed;
  std::vector<LstmLayer> lstm;
  Matrix w_q;
  RowVector b_q;
  Matrix w_k;
  RowVector b_k;
  Matrix w_v;
  RowVector b_v;
  Matrix w_o;
  RowVector b_o;
  Matrix w_cls;
  RowVector b_cls;
};

/// Identifies a tensor in canonical order. `kind` is the role shared by all
/// tensors of the same type across layers (e.g. every recurrent matrix is
/// "w_hh").
struct TensorId {
  std::string name;
  std::string_view kind;
  std::size_t fan_in;
};

/// Visits every tensor in the canonical checkpoint order:
/// embedding, then per layer fwd/bwd (w_ih, w_hh, bias), then attention
/// q, k, v, o (weight, bias), then the classifier.
template <typename Weights, typename Fn>
void for_each_tensor(Weights& w, const ModelConfig& cfg, Fn&& fn) {
  const std::size_t h = cfg.hidden_size;
  fn(TensorId{"embed.weight", "w_embed", cfg.input_dim}, w.w_embed);
  fn(TensorId{"embed.bias", "b_embed", cfg.input_dim}, w.b_embed);
  for (std::size_t l = 0; l < w.lstm.size(); ++l) {
    const std::size_t in = l == 0 ? cfg.embed_dim : 2 * h;
    auto& layer = w.lstm[l];
    for (int d = 0; d < 2; ++d) {
      auto& dir = d == 0 ? layer.fwd : layer.bwd;
      const std::string prefix =
          "lstm." + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
      fn(TensorId{prefix + "w_ih", "w_ih", in}, dir.w_ih);
      fn(TensorId{prefix + "w_hh", "w_hh", h}, dir.w_hh);
      fn(TensorId{prefix + "bias", "b_lstm", h}, dir.bias);
    }
  }
  fn(TensorId{"attn.w_q", "w_q", 2 * h}, w.w_q);
  fn(TensorId{"attn.b_q", "b_q", 2 * h}, w.b_q);
  fn(TensorId{"attn.w_k", "w_k", 2 * h}, w.w_k);
  fn(TensorId{"attn.b_k", "b_k", 2 * h}, w.b_k);
  fn(TensorId{"attn.w_v", "w_v", 2 * h}, w.w_v);
  fn(TensorId{"attn.b_v", "b_v", 2 * h}, w.b_v);
  fn(TensorId{"attn.w_o", "w_o", cfg.attention_out}, w.w_o);
  fn(TensorId{"attn.b_o", "b_o", cfg.attention_out}, w.b_o);
  fn(TensorId{"cls.weight", "w_cls", cfg.attention_out}, w.w_cls);
  fn(TensorId{"cls.bias", "b_cls", cfg.attention_out}, w.b_cls);
}

/// Exact scalar count of ModelWeights for `cfg`.
inline std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.hidden_size;
  const std::size_t a = cfg.attention_out;
  std::size_t total = cfg.embed_dim * cfg.input_dim + cfg.embed_dim;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.embed_dim : 2 * h;
    total += 2 * (4 * h * in + 4 * h * h + 4 * h);
  }
  total += 3 * (a * 2 * h + a);
  total += a * a + a;
  total += cfg.num_classes * a + cfg.num_classes;
  return total;
}

/// All-zero weights with the canonical shapes.
inline ModelWeights zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  const auto h = static_cast<Eigen::Index>(cfg.hidden_size);
  const auto a = static_cast<Eigen::Index>(cfg.attention_out);
  const auto e = static_cast<Eigen::Index>(cfg.embed_dim);
  ModelWeights w;
  w.w_embed = Matrix::Zero(e, static_cast<Eigen::Index>(cfg.input_dim));
  w.b_embed = RowVector::Zero(e);
  w.lstm.resize(cfg.num_layers);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const Eigen::Index in = l == 0 ? e : 2 * h;
    for (LstmDirection* dir : {&w.lstm[l].fwd, &w.lstm[l].bwd}) {
      dir->w_ih = Matrix::Zero(4 * h, in);
      dir->w_hh = Matrix::Zero(4 * h, h);
      dir->bias = RowVector::Zero(4 * h);
    }
  }
  for (Matrix* m : {&w.w_q, &w.w_k, &w.w_v}) *m = Matrix::Zero(a, 2 * h);
  for (RowVector* b : {&w.b_q, &w.b_k, &w.b_v, &w.b_o}) *b = RowVector::Zero(a);
  w.w_o = Matrix::Zero(a, a);
  w.w_cls = Matrix::Zero(static_cast<Eigen::Index>(cfg.num_classes), a);
  w.b_cls = RowVector::Zero(static_cast<Eigen::Index>(cfg.num_classes));
  return w;
}

/// Every tensor i.i.d. U(-1/sqrt(fan_in), 1/sqrt(fan_in)); tensor k draws
/// from its own RNG stream so the result depends only on (cfg, seed).
inline ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  ModelWeights w = zero_weights(cfg);
  std::uint64_t stream = 0;
  for_each_tensor(w, cfg, [&](const TensorId& id, auto& t) {
    CounterRng rng(seed, stream++);
    const double bound = 1.0 / std::sqrt(static_cast<double>(id.fan_in));
    double* data = t.data();
    for (Eigen::Index i = 0; i < t.size(); ++i) data[i] = rng.uniform(-bound, bound);
  });
  return w;
}

inline std::size_t allocated_scalars(const ModelWeights& w, const ModelConfig& cfg) {
  std::size_t n = 0;
  for_each_tensor(w, cfg, [&](const TensorId&, const auto& t) {
    n += static_cast<std::size_t>(t.size());
  });
  return n;
}

inline bool all_finite(const ModelWeights& w, const ModelConfig& cfg) {
  bool ok = true;
  for_each_tensor(w, cfg, [&](const TensorId&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Per-direction recurrence record, indexed by sequence position (not by
/// processing step). `gates` holds the activated [i, f, g, o] blocks.
struct DirectionTrace {
  Matrix gates;
  Matrix cell;
  Matrix cell_tanh;
  Matrix hidden;
};

struct LayerTrace {
  Matrix input;
  DirectionTrace fwd;
  DirectionTrace bwd;
};

/// Everything the backward pass and attention export need. Matrices have one
/// row per (possibly padded) position; only the first `length` rows are real.
struct ForwardTrace {
  std::size_t length = 0;
  Matrix features;
  Matrix embedding;
  std::vector<LayerTrace> layers;
  Matrix encoded;
  Matrix query;
  Matrix key;
  Matrix value;
  std::vector<Matrix> attention;
  Matrix heads;
  Matrix attended;
  Matrix logits;
  Matrix log_probs;
  Matrix probs;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
};

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

/// Features of an already-ordered page, one row per block.
inline Matrix page_features(const Page& page) {
  check_page_dims(page);
  Matrix x(static_cast<Eigen::Index>(page.blocks.size()), static_cast<Eigen::Index>(kFeatureDim));
  for (std::size_t i = 0; i < page.blocks.size(); ++i) {
    const FeatureVector f = featurize(page.blocks[i], page);
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = f[k];
    }
  }
  return x;
}

inline Matrix embed(const Matrix& x, const ModelWeights& w) {
  Matrix e = x * w.w_embed.transpose();
  e.rowwise() += w.b_embed;
  return e;
}

namespace detail {

inline void run_direction(const Matrix& input, std::size_t length, const LstmDirection& dir,
                          bool reverse, DirectionTrace& out) {
  const Eigen::Index n = static_cast<Eigen::Index>(length);
  const Eigen::Index h = dir.w_hh.cols();
  Matrix pre = input.topRows(n) * dir.w_ih.transpose();
  pre.rowwise() += dir.bias;
  out.gates.resize(n, 4 * h);
  out.cell.resize(n, h);
  out.cell_tanh.resize(n, h);
  out.hidden.resize(n, h);
  RowVector h_prev = RowVector::Zero(h);
  RowVector c_prev = RowVector::Zero(h);
  RowVector z(4 * h);
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::Index t = reverse ? n - 1 - s : s;
    z.noalias() = pre.row(t);
    z.noalias() += h_prev * dir.w_hh.transpose();
    auto g = out.gates.row(t);
    for (Eigen::Index k = 0; k < h; ++k) {
      g(k) = sigmoid(z(k));
      g(h + k) = sigmoid(z(h + k));
      g(2 * h + k) = std::tanh(z(2 * h + k));
      g(3 * h + k) = sigmoid(z(3 * h + k));
      const double c = g(h + k) * c_prev(k) + g(k) * g(2 * h + k);
      const double tc = std::tanh(c);
      out.cell(t, k) = c;
      out.cell_tanh(t, k) = tc;
      out.hidden(t, k) = g(3 * h + k) * tc;
    }
    h_prev = out.hidden.row(t);
    c_prev = out.cell.row(t);
  }
}

}  // namespace detail

/// Stacked bidirectional LSTM over the first `length` rows of `input`.
/// Output rows past `length` are zero. Layer traces are appended to `trace`
/// when non-null.
inline Matrix bilstm_forward(const Matrix& input, std::size_t length, const ModelWeights& w,
                             const ModelConfig& cfg, std::vector<LayerTrace>* trace = nullptr) {
  const Eigen::Index rows = input.rows();
  const Eigen::Index h = static_cast<Eigen::Index>(cfg.hidden_size);
  const Eigen::Index n = static_cast<Eigen::Index>(length);
  Matrix current = input;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerTrace lt;
    detail::run_direction(current, length, w.lstm[l].fwd, false, lt.fwd);
    detail::run_direction(current, length, w.lstm[l].bwd, true, lt.bwd);
    Matrix next = Matrix::Zero(rows, 2 * h);
    next.topLeftCorner(n, h) = lt.fwd.hidden;
    next.block(0, h, n, h) = lt.bwd.hidden;
    if (trace != nullptr) {
      lt.input = std::move(current);
      trace->push_back(std::move(lt));
    }
    current = std::move(next);
  }
  return current;
}

/// Row-wise softmax over the first `valid` columns; masked columns get
/// probability exactly 0 (their logit is treated as -inf).
inline void masked_softmax_rows(Matrix& scores, std::size_t valid) {
  const Eigen::Index v = static_cast<Eigen::Index>(valid);
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    const double mx = row.head(v).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < v; ++c) {
      row(c) = std::exp(row(c) - mx);
      sum += row(c);
    }
    row.head(v) /= sum;
    row.tail(scores.cols() - v).setZero();
  }
}

struct AttentionOutput {
  Matrix query;
  Matrix key;
  Matrix value;
  std::vector<Matrix> scores;
  Matrix heads;
  Matrix attended;
};

/// Scaled dot-product multi-head attention, keys restricted to the first
/// `length` positions. No residual, normalization or positional term.
inline AttentionOutput mha_forward(const Matrix& encoded, std::size_t length,
                                   const ModelWeights& w, const ModelConfig& cfg) {
  AttentionOutput out;
  const Eigen::Index rows = encoded.rows();
  const Eigen::Index d = static_cast<Eigen::Index>(cfg.head_dim());
  const Eigen::Index n = static_cast<Eigen::Index>(length);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  out.query = encoded * w.w_q.transpose();
  out.query.rowwise() += w.b_q;
  // The key bias adds q.b_k to every logit of a row and cancels in the
  // softmax, so it is left out of the product. Its gradient is exactly zero.
  out.key = encoded * w.w_k.transpose();
  out.value = encoded * w.w_v.transpose();
  out.value.rowwise() += w.b_v;
  out.heads.resize(rows, static_cast<Eigen::Index>(cfg.attention_out));
  out.scores.reserve(cfg.num_heads);
  for (std::size_t hd = 0; hd < cfg.num_heads; ++hd) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(hd) * d;
    Matrix s = Matrix::Zero(rows, rows);
    if (n > 0) {
      s.leftCols(n).noalias() =
          out.query.middleCols(c0, d) * out.key.block(0, c0, n, d).transpose();
      s.leftCols(n) *= scale;
      masked_softmax_rows(s, length);
      out.heads.middleCols(c0, d).noalias() = s.leftCols(n) * out.value.block(0, c0, n, d);
    } else {
      out.heads.middleCols(c0, d).setZero();
    }
    out.scores.push_back(std::move(s));
  }
  out.attended = out.heads * w.w_o.transpose();
  out.attended.rowwise() += w.b_o;
  return out;
}

/// Full forward pass over a (possibly right-padded) feature matrix whose
/// first `length` rows are real blocks.
inline ForwardTrace forward(const Matrix& features, std::size_t length, const ModelWeights& w,
                            const ModelConfig& cfg) {
  if (length > static_cast<std::size_t>(features.rows())) {
    fail(ErrorKind::kInvalidConfig, "sequence length exceeds padded row count");
  }
  ForwardTrace tr;
  tr.length = length;
  tr.features = features;
  if (features.rows() == 0) return tr;
  tr.embedding = embed(features, w);
  tr.encoded = bilstm_forward(tr.embedding, length, w, cfg, &tr.layers);
  AttentionOutput att = mha_forward(tr.encoded, length, w, cfg);
  tr.query = std::move(att.query);
  tr.key = std::move(att.key);
  tr.value = std::move(att.value);
  tr.attention = std::move(att.scores);
  tr.heads = std::move(att.heads);
  tr.attended = std::move(att.attended);
  tr.logits = tr.attended * w.w_cls.transpose();
  tr.logits.rowwise() += w.b_cls;
  tr.log_probs.resize(tr.logits.rows(), tr.logits.cols());
  tr.probs.resize(tr.logits.rows(), tr.logits.cols());
  for (Eigen::Index r = 0; r < tr.logits.rows(); ++r) {
    const double mx = tr.logits.row(r).maxCoeff();
    const double lse = mx + std::log((tr.logits.row(r).array() - mx).exp().sum());
    tr.log_probs.row(r) = tr.logits.row(r).array() - lse;
    tr.probs.row(r) = tr.log_probs.row(r).array().exp();
  }
  return tr;
}

/// Forward pass over an ordered page.
inline ForwardTrace forward(const Page& page, const ModelWeights& w, const ModelConfig& cfg) {
  const Matrix x = page_features(page);
  return forward(x, page.blocks.size(), w, cfg);
}

inline BlockLabel argmax_label(const Eigen::Ref<const RowVector>& probs) {
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  return static_cast<BlockLabel>(best);
}

}  // namespace tdelta

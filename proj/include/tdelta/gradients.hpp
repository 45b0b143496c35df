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
#include <cstdint>
#include <span>
#include <vector>

#include "tdelta/error.hpp"
#include "tdelta/geometry.hpp"
#include "tdelta/model.hpp"

namespace tdelta {

using Mask = std::vector<std::uint8_t>;

namespace detail {

inline std::size_t count_active(std::size_t length, std::span<const std::uint8_t> mask) {
  std::size_t active = 0;
  for (std::size_t i = 0; i < length && i < mask.size(); ++i) active += mask[i] != 0;
  return active;
}

}  // namespace detail

/// Mean of -log p[y] over positions where `mask` is set.
inline double cross_entropy(const Matrix& probs, std::span<const BlockLabel> labels,
                            std::span<const std::uint8_t> mask) {
  double sum = 0.0;
  std::size_t active = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) continue;
    const auto r = static_cast<Eigen::Index>(i);
    sum -= std::log(probs(r, static_cast<Eigen::Index>(label_index(labels[i]))));
    ++active;
  }
  if (active == 0) fail(ErrorKind::kUndefinedLoss, "cross entropy over an all-masked batch");
  return sum / static_cast<double>(active);
}

/// Same loss as cross_entropy, read from the trace's log-softmax so that a
/// saturated probability does not overflow the logarithm.
inline double trace_loss(const ForwardTrace& tr, std::span<const BlockLabel> labels,
                         std::span<const std::uint8_t> mask) {
  double sum = 0.0;
  std::size_t active = 0;
  for (std::size_t i = 0; i < tr.length && i < mask.size(); ++i) {
    if (mask[i] == 0) continue;
    sum -= tr.log_probs(static_cast<Eigen::Index>(i),
                        static_cast<Eigen::Index>(label_index(labels[i])));
    ++active;
  }
  if (active == 0) fail(ErrorKind::kUndefinedLoss, "cross entropy over an all-masked batch");
  return sum / static_cast<double>(active);
}

/// Adds `scale` times the gradient of this trace's cross entropy into `grad`
/// and returns the (unscaled) loss.
inline double accumulate_gradients(const ForwardTrace& tr, std::span<const BlockLabel> labels,
                                   std::span<const std::uint8_t> mask, const ModelWeights& w,
                                   const ModelConfig& cfg, double scale, ModelWeights& grad) {
  const std::size_t length = tr.length;
  if (length > 0 && (tr.layers.size() != cfg.num_layers || tr.attention.size() != cfg.num_heads)) {
    fail(ErrorKind::kMissingTrace, "backward needs a forward trace with retained activations");
  }
  if (labels.size() < length || mask.size() < length) {
    fail(ErrorKind::kMissingTrace, "labels and mask must cover every real position");
  }
  const double loss = trace_loss(tr, labels, mask);
  const std::size_t active = detail::count_active(length, mask);

  const Eigen::Index n = static_cast<Eigen::Index>(length);
  const Eigen::Index h = static_cast<Eigen::Index>(cfg.hidden_size);
  const Eigen::Index d = static_cast<Eigen::Index>(cfg.head_dim());

  // Fused softmax + cross-entropy at the logits.
  Matrix d_logits = Matrix::Zero(n, static_cast<Eigen::Index>(cfg.num_classes));
  const double unit = scale / static_cast<double>(active);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask[static_cast<std::size_t>(i)] == 0) continue;
    d_logits.row(i) = tr.probs.row(i) * unit;
    d_logits(i, static_cast<Eigen::Index>(label_index(labels[static_cast<std::size_t>(i)]))) -= unit;
  }

  const auto attended = tr.attended.topRows(n);
  grad.w_cls.noalias() += d_logits.transpose() * attended;
  grad.b_cls += d_logits.colwise().sum();
  const Matrix d_attended = d_logits * w.w_cls;

  const auto heads = tr.heads.topRows(n);
  grad.w_o.noalias() += d_attended.transpose() * heads;
  grad.b_o += d_attended.colwise().sum();
  const Matrix d_heads = d_attended * w.w_o;

  // Attention. Only the first n rows carry gradient; padded queries have
  // zero upstream gradient and padded keys have zero attention weight.
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix d_query = Matrix::Zero(n, static_cast<Eigen::Index>(cfg.attention_out));
  Matrix d_key = Matrix::Zero(n, static_cast<Eigen::Index>(cfg.attention_out));
  Matrix d_value = Matrix::Zero(n, static_cast<Eigen::Index>(cfg.attention_out));
  for (std::size_t hd = 0; hd < cfg.num_heads; ++hd) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(hd) * d;
    const auto p = tr.attention[hd].topLeftCorner(n, n);
    const auto q = tr.query.block(0, c0, n, d);
    const auto k = tr.key.block(0, c0, n, d);
    const auto v = tr.value.block(0, c0, n, d);
    const auto d_out = d_heads.middleCols(c0, d);
    const Matrix d_p = d_out * v.transpose();
    d_value.middleCols(c0, d).noalias() += p.transpose() * d_out;
    Matrix d_s = p.cwiseProduct(d_p);
    const Eigen::VectorXd row_dot = d_s.rowwise().sum();
    d_s = p.cwiseProduct(d_p.colwise() - row_dot) * inv_sqrt_d;
    d_query.middleCols(c0, d).noalias() += d_s * k;
    d_key.middleCols(c0, d).noalias() += d_s.transpose() * q;
  }
  const auto encoded = tr.encoded.topRows(n);
  grad.w_q.noalias() += d_query.transpose() * encoded;
  grad.w_k.noalias() += d_key.transpose() * encoded;
  grad.w_v.noalias() += d_value.transpose() * encoded;
  grad.b_q += d_query.colwise().sum();
  grad.b_v += d_value.colwise().sum();
  Matrix d_layer_out = d_query * w.w_q;
  d_layer_out.noalias() += d_key * w.w_k;
  d_layer_out.noalias() += d_value * w.w_v;

  // BiLSTM, top layer first; backprop through time in each direction.
  for (std::size_t li = cfg.num_layers; li-- > 0;) {
    const LayerTrace& lt = tr.layers[li];
    const auto input = lt.input.topRows(n);
    Matrix d_input = Matrix::Zero(n, input.cols());
    for (int dir_idx = 0; dir_idx < 2; ++dir_idx) {
      const bool reverse = dir_idx == 1;
      const DirectionTrace& dt = reverse ? lt.bwd : lt.fwd;
      const LstmDirection& wd = reverse ? w.lstm[li].bwd : w.lstm[li].fwd;
      LstmDirection& gd = reverse ? grad.lstm[li].bwd : grad.lstm[li].fwd;
      const auto d_hidden = d_layer_out.middleCols(reverse ? h : 0, h);

      Matrix d_pre(n, 4 * h);
      Matrix h_prev = Matrix::Zero(n, h);
      RowVector dh_next = RowVector::Zero(h);
      RowVector dc_next = RowVector::Zero(h);
      for (Eigen::Index s = n; s-- > 0;) {
        const Eigen::Index t = reverse ? n - 1 - s : s;
        const Eigen::Index tp = reverse ? t + 1 : t - 1;
        const bool has_prev = s > 0;
        const auto g = dt.gates.row(t);
        auto dz = d_pre.row(t);
        for (Eigen::Index j = 0; j < h; ++j) {
          const double gi = g(j), gf = g(h + j), gg = g(2 * h + j), go = g(3 * h + j);
          const double tc = dt.cell_tanh(t, j);
          const double c_prev = has_prev ? dt.cell(tp, j) : 0.0;
          const double dh = d_hidden(t, j) + dh_next(j);
          const double dc = dh * go * (1.0 - tc * tc) + dc_next(j);
          dz(j) = dc * gg * gi * (1.0 - gi);
          dz(h + j) = dc * c_prev * gf * (1.0 - gf);
          dz(2 * h + j) = dc * gi * (1.0 - gg * gg);
          dz(3 * h + j) = dh * tc * go * (1.0 - go);
          dc_next(j) = dc * gf;
        }
        if (has_prev) {
          h_prev.row(t) = dt.hidden.row(tp);
          dh_next.noalias() = dz * wd.w_hh;
        }
      }
      gd.w_hh.noalias() += d_pre.transpose() * h_prev;
      gd.w_ih.noalias() += d_pre.transpose() * input;
      gd.bias += d_pre.colwise().sum();
      d_input.noalias() += d_pre * wd.w_ih;
    }
    d_layer_out = std::move(d_input);
  }

  grad.w_embed.noalias() += d_layer_out.transpose() * tr.features.topRows(n);
  grad.b_embed += d_layer_out.colwise().sum();
  return loss;
}

/// Gradient of the cross entropy of one trace with respect to every weight.
inline ModelWeights backward(const ForwardTrace& tr, std::span<const BlockLabel> labels,
                             std::span<const std::uint8_t> mask, const ModelWeights& w,
                             const ModelConfig& cfg) {
  ModelWeights grad = zero_weights(cfg);
  if (tr.length == 0) fail(ErrorKind::kUndefinedLoss, "backward over an empty sequence");
  accumulate_gradients(tr, labels, mask, w, cfg, 1.0, grad);
  return grad;
}

}  // namespace tdelta

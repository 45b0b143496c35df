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
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "tdelta/gradcheck.hpp"
#include "tdelta/gradients.hpp"

namespace tdelta {
namespace {

TEST(CrossEntropy, PerfectPredictionsGiveZero) {
  Matrix p = Matrix::Zero(3, 4);
  p(0, 0) = p(1, 2) = p(2, 3) = 1.0;
  const std::vector<BlockLabel> y{BlockLabel::kRowHeader, BlockLabel::kContentCell,
                                  BlockLabel::kOutside};
  EXPECT_EQ(cross_entropy(p, y, Mask(3, 1)), 0.0);
}

TEST(CrossEntropy, UniformIsLogFour) {
  const Matrix p = Matrix::Constant(5, 4, 0.25);
  const std::vector<BlockLabel> y(5, BlockLabel::kColumnHeader);
  EXPECT_NEAR(cross_entropy(p, y, Mask(5, 1)), 1.386294, 1e-6);
  EXPECT_NEAR(cross_entropy(p, y, Mask(5, 1)), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, TwoBlockMean) {
  Matrix p(2, 4);
  p << 0.5, 0.2, 0.2, 0.1,
       0.25, 0.25, 0.25, 0.25;
  const std::vector<BlockLabel> y{BlockLabel::kRowHeader, BlockLabel::kOutside};
  EXPECT_NEAR(cross_entropy(p, y, Mask(2, 1)), 1.039721, 1e-6);
}

TEST(CrossEntropy, MaskSkipsPaddedRows) {
  Matrix p(2, 4);
  p << 0.5, 0.2, 0.2, 0.1,
       0.0, 0.0, 0.0, 1.0;
  const std::vector<BlockLabel> y{BlockLabel::kRowHeader, BlockLabel::kRowHeader};
  EXPECT_NEAR(cross_entropy(p, y, Mask{1, 0}), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, AllMaskedIsAnError) {
  const Matrix p = Matrix::Constant(2, 4, 0.25);
  const std::vector<BlockLabel> y(2, BlockLabel::kOutside);
  try {
    cross_entropy(p, y, Mask(2, 0));
    FAIL() << "expected undefined-loss error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUndefinedLoss);
  }
}

TEST(Backward, ClassifierBiasIsProbMinusOneHot) {
  const ModelConfig cfg = make_config(3, 1, 1, 4);
  const ModelWeights w = init_weights(cfg, 7);
  Matrix x(1, 8);
  x << 0.1, 0.2, 0.3, 0.4, 0.2, 0.3, 0.2, 0.2;
  const ForwardTrace tr = forward(x, 1, w, cfg);
  const std::vector<BlockLabel> y{BlockLabel::kContentCell};
  const ModelWeights g = backward(tr, y, Mask{1}, w, cfg);
  for (Eigen::Index k = 0; k < 4; ++k) {
    const double expected = tr.probs(0, k) - (k == 2 ? 1.0 : 0.0);
    EXPECT_NEAR(g.b_cls(k), expected, 1e-15);
  }
}

TEST(Backward, ZeroLossGivesZeroGradients) {
  // Zero weights except a classifier bias that saturates class 3, so every
  // probability is one-hot to machine precision.
  const ModelConfig cfg = make_config(3, 2, 1, 4);
  ModelWeights w = zero_weights(cfg);
  w.b_cls << -800.0, -800.0, -800.0, 0.0;
  Matrix x = Matrix::Constant(3, 8, 0.3);
  const ForwardTrace tr = forward(x, 3, w, cfg);
  ASSERT_EQ(tr.probs(0, 3), 1.0);
  const std::vector<BlockLabel> y(3, BlockLabel::kOutside);
  const ModelWeights g = backward(tr, y, Mask(3, 1), w, cfg);
  for_each_tensor(g, cfg, [&](const TensorId& id, const auto& t) {
    EXPECT_LE(t.cwiseAbs().maxCoeff(), 1e-12) << id.name;
  });
}

TEST(Backward, MissingTraceIsAnError) {
  const ModelConfig cfg = make_config(3, 1, 1, 4);
  const ModelWeights w = init_weights(cfg, 1);
  ForwardTrace tr = forward(Matrix::Constant(2, 8, 0.5), 2, w, cfg);
  tr.layers.clear();
  const std::vector<BlockLabel> y(2, BlockLabel::kOutside);
  try {
    backward(tr, y, Mask(2, 1), w, cfg);
    FAIL() << "expected missing-trace error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingTrace);
  }
}

TEST(GradCheck, AllGroupsAgreeAcrossSeeds) {
  // Central differences at eps 1e-5 resolve about 1e-11 absolute, so the
  // sweep uses a 1e-6 denominator floor; coordinates above it must agree to
  // 1e-4 relative.
  const ModelConfig cfg = make_config(3, 2, 1, 4);
  GradCheckOptions opts;
  opts.denominator_floor = 1e-6;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const GradCheckReport r = grad_check(cfg, seed, 1e-5, 1e-4, opts);
    for (const auto& e : r.entries) {
      EXPECT_TRUE(e.pass) << "seed " << seed << " " << e.name << " rel " << e.max_rel_error;
      EXPECT_LT(e.max_abs_error, 1e-9) << "seed " << seed << " " << e.name;
    }
  }
}

TEST(GradCheck, TrainingInitAlsoAgrees) {
  const ModelConfig cfg = make_config(3, 2, 1, 4);
  const Sample s = random_check_sample(4, 9);
  const Mask mask(4, 1);
  ModelWeights w = init_weights(cfg, 9);
  const ModelWeights g = backward(forward(s.features, 4, w, cfg), s.labels, mask, w, cfg);
  std::vector<const double*> gp;
  for_each_tensor(g, cfg, [&](const TensorId&, const auto& t) { gp.push_back(t.data()); });
  std::size_t k = 0;
  for_each_tensor(w, cfg, [&](const TensorId& id, auto& t) {
    const double* a = gp[k++];
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double saved = t.data()[i];
      t.data()[i] = saved + 1e-5;
      const double up = trace_loss(forward(s.features, 4, w, cfg), s.labels, mask);
      t.data()[i] = saved - 1e-5;
      const double down = trace_loss(forward(s.features, 4, w, cfg), s.labels, mask);
      t.data()[i] = saved;
      const double fd = (up - down) / 2e-5;
      EXPECT_NEAR(a[i], fd, 1e-9 + 1e-4 * std::abs(fd)) << id.name << "[" << i << "]";
    }
  });
}

TEST(GradCheck, KeyBiasGradientIsExactlyZero) {
  const ModelConfig cfg = make_config(3, 1, 2, 4);
  const Sample s = random_check_sample(5, 2);
  const ModelWeights w = init_weights(cfg, 2);
  const ModelWeights g = backward(forward(s.features, 5, w, cfg), s.labels, Mask(5, 1), w, cfg);
  EXPECT_EQ(g.b_k.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradCheck, ClassifierGroupIsTight) {
  const ModelConfig cfg = make_config(3, 2, 1, 4);
  for (std::uint64_t seed : {3u, 4u, 5u, 6u}) {
    const GradCheckReport r = grad_check(cfg, seed, 1e-5, 1e-4);
    for (const auto& e : r.entries) {
      if (e.kind == "w_cls" || e.kind == "b_cls") {
        EXPECT_LT(e.max_rel_error, 1e-6) << e.name;
      }
    }
  }
}

TEST(GradCheck, MultiHeadAndPaddedConfigs) {
  for (const ModelConfig& cfg : {make_config(2, 1, 2, 4), make_config(4, 3, 2, 6)}) {
    GradCheckOptions opts;
    opts.num_blocks = 5;
    opts.denominator_floor = 1e-6;
    const GradCheckReport r = grad_check(cfg, 11, 1e-5, 1e-4, opts);
    EXPECT_TRUE(r.pass) << "max rel " << r.max_rel_error;
  }
}

TEST(GradCheck, DetectsCorruptedRecurrentGradient) {
  const ModelConfig cfg = make_config(3, 2, 1, 4);
  GradCheckOptions opts;
  opts.denominator_floor = 1e-6;
  opts.corrupt_gradient = [](ModelWeights& g) { g.lstm[1].fwd.w_hh *= 1.01; };
  const GradCheckReport r = grad_check(cfg, 0, 1e-5, 1e-4, opts);
  EXPECT_FALSE(r.pass);
  for (const auto& e : r.entries) {
    if (e.name == "lstm.1.fwd.w_hh") {
      EXPECT_FALSE(e.pass);
      EXPECT_EQ(e.kind, "w_hh");
    } else {
      EXPECT_TRUE(e.pass) << e.name;
    }
  }
}

}  // namespace
}  // namespace tdelta

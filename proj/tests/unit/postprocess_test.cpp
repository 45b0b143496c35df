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
#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "tdelta/datagen.hpp"
#include "tdelta/postprocess.hpp"

namespace {

using namespace tdelta;

Page blank(double w = 1000, double h = 1000) {
  Page p;
  p.page_id = "t";
  p.width = w;
  p.height = h;
  return p;
}

LabeledBlock lb(Box b, BlockLabel l, double conf = 0.9) {
  LabeledBlock x;
  x.box = b;
  x.label = l;
  x.probs.fill((1.0 - conf) / 3.0);
  x.probs[label_index(l)] = conf;
  return x;
}

// rows x cols grid of cells 40 x 10 with 5-unit gaps (margin on a
// 1000-high page is 10, so every neighbour pair connects).
std::vector<LabeledBlock> grid(double x0, double y0, int rows, int cols, int header_rows = 0) {
  std::vector<LabeledBlock> out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double x = x0 + c * 45.0, y = y0 + r * 15.0;
      out.push_back(lb({x, y, x + 40, y + 10}, r < header_rows ? BlockLabel::kColumnHeader : BlockLabel::kContentCell));
    }
  }
  return out;
}

TEST(Cluster, GridIsOneRegion) {
  const auto blocks = grid(100, 100, 3, 3);
  const auto regions = cluster_regions(blocks, blank());
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_EQ(regions[0].box, (Box{100, 100, 230, 140}));
  EXPECT_EQ(regions[0].members.size(), 9u);
  EXPECT_NEAR(regions[0].confidence, 0.9, 1e-12);
}

TEST(Cluster, HorizontallySeparatedClusters) {
  auto blocks = grid(100, 100, 3, 2);
  // 10% of page width to the right of the first cluster's right edge.
  const auto more = grid(100 + 85 + 100, 100, 3, 2);
  blocks.insert(blocks.end(), more.begin(), more.end());
  EXPECT_EQ(cluster_regions(blocks, blank()).size(), 2u);
}

TEST(Cluster, ConnectsExactlyAtTwiceTheMargin) {
  const Page p = blank();  // m = 10
  std::vector<LabeledBlock> b{lb({0, 0, 10, 10}, BlockLabel::kContentCell),
                              lb({30, 0, 40, 10}, BlockLabel::kContentCell)};
  EXPECT_EQ(cluster_regions(b, p).size(), 1u);
  b[1].box = {30.5, 0, 40, 10};
  EXPECT_EQ(cluster_regions(b, p).size(), 2u);
}

TEST(Cluster, OutsideBlocksNeverJoin) {
  auto blocks = grid(100, 100, 2, 2);
  for (auto& b : blocks) b.label = BlockLabel::kOutside;
  EXPECT_TRUE(cluster_regions(blocks, blank()).empty());
  // An Outside block bridging two clusters does not merge them.
  auto two = grid(100, 100, 2, 1);
  const auto right = grid(200, 100, 2, 1);
  two.insert(two.end(), right.begin(), right.end());
  two.push_back(lb({140, 100, 200, 110}, BlockLabel::kOutside));
  EXPECT_EQ(cluster_regions(two, blank()).size(), 2u);
}

TEST(Cluster, InvariantToInputOrder) {
  const Page page = generate_page(sparse_financial_style(), 12);
  std::vector<LabeledBlock> blocks;
  for (const auto& b : page.blocks) blocks.push_back(lb(b.box, *b.label, 1.0));
  std::vector<Box> want;
  for (const auto& r : cluster_regions(blocks, page)) want.push_back(r.box);
  CounterRng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    rng.shuffle(std::span<LabeledBlock>(blocks));
    std::vector<Box> got;
    for (const auto& r : cluster_regions(blocks, page)) got.push_back(r.box);
    EXPECT_EQ(got, want);
  }
}

TEST(Split, HeaderOnTopKeepsOneBox) {
  const auto blocks = grid(100, 100, 5, 3, 1);
  const auto regions = cluster_regions(blocks, blank());
  ASSERT_EQ(regions.size(), 1u);
  const auto parts = split_by_headers(regions[0], blocks, blank());
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0].box, regions[0].box);
}

TEST(Split, NoHeadersKeepsOneBox) {
  const auto blocks = grid(100, 100, 4, 3);
  const auto regions = cluster_regions(blocks, blank());
  EXPECT_EQ(split_by_headers(regions[0], blocks, blank()).size(), 1u);
}

TEST(Split, SecondHeaderLineStartsNewTable) {
  // header, 2 content, header, 3 content; last content line ends at y=140,
  // second header starts at y=145.
  auto blocks = grid(100, 100, 3, 3, 1);
  const auto lower = grid(100, 145, 4, 3, 1);
  blocks.insert(blocks.end(), lower.begin(), lower.end());
  const auto regions = cluster_regions(blocks, blank());
  ASSERT_EQ(regions.size(), 1u);
  const auto parts = split_by_headers(regions[0], blocks, blank());
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].box, (Box{100, 100, 230, 140}));
  EXPECT_EQ(parts[1].box, (Box{100, 145, 230, 200}));
  EXPECT_LT(parts[0].box.y2, parts[1].box.y1);
}

TEST(Split, StackedHeaderRowsDoNotSplit) {
  // Two header lines on top: the second is not preceded by content.
  const auto blocks = grid(100, 100, 5, 3, 2);
  const auto regions = cluster_regions(blocks, blank());
  EXPECT_EQ(split_by_headers(regions[0], blocks, blank()).size(), 1u);
}

TEST(Split, RowHeaderLinesCount) {
  // A line made of RowHeader blocks only also marks a new top boundary.
  auto blocks = grid(100, 100, 3, 2);
  blocks.push_back(lb({100, 145, 140, 155}, BlockLabel::kRowHeader));
  blocks.push_back(lb({145, 145, 185, 155}, BlockLabel::kColumnHeader));
  const auto tail = grid(100, 160, 2, 2);
  blocks.insert(blocks.end(), tail.begin(), tail.end());
  const auto regions = cluster_regions(blocks, blank());
  EXPECT_EQ(split_by_headers(regions[0], blocks, blank()).size(), 2u);
}

TEST(Detect, EmptyPage) {
  const ModelConfig cfg = make_config(4, 1, 1, 4);
  const DetectionResult r = detect_tables(blank(), init_weights(cfg, 0), cfg);
  EXPECT_TRUE(r.detections.empty());
  EXPECT_TRUE(detect_tables_oracle(blank()).detections.empty());
}

TEST(Detect, OracleSingleAndStackedTables) {
  StyleProfile single = dense_scientific_style();
  single.table_count = {1, 1};
  single.stack_prob = 0.0;
  StyleProfile stacked = single;
  stacked.stack_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Page a = generate_page(single, seed);
    const DetectionResult ra = detect_tables_oracle(a);
    ASSERT_EQ(ra.detections.size(), 1u);
    EXPECT_GE(iou(ra.detections[0].box, a.tables[0]), 0.9);
    EXPECT_DOUBLE_EQ(ra.detections[0].confidence, 1.0);
    const Page b = generate_page(stacked, seed);
    ASSERT_EQ(b.tables.size(), 2u);
    EXPECT_EQ(detect_tables_oracle(b).detections.size(), 2u) << seed;
  }
}

TEST(Detect, FinalBoxesNestAndStayDisjoint) {
  for (const auto& style : {dense_scientific_style(), sparse_financial_style()}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Page page = generate_page(style, seed);
      std::vector<LabeledBlock> blocks;
      // Perturb labels so that regions and splits are not trivially clean.
      CounterRng rng(seed, 5);
      for (const auto& b : page.blocks) {
        BlockLabel l = *b.label;
        if (rng.bernoulli(0.1)) l = static_cast<BlockLabel>(rng.uniform_int(0, 3));
        blocks.push_back(lb(b.box, l, 0.7));
      }
      for (const auto& region : cluster_regions(blocks, page)) {
        const auto parts = split_by_headers(region, blocks, page);
        std::size_t members = 0;
        for (std::size_t i = 0; i < parts.size(); ++i) {
          members += parts[i].members.size();
          EXPECT_TRUE(contains(region.box, parts[i].box));
          for (std::size_t m : parts[i].members) EXPECT_TRUE(in_table(blocks[m].label));
          for (std::size_t j = i + 1; j < parts.size(); ++j) {
            EXPECT_TRUE(parts[i].box.y2 < parts[j].box.y1 || parts[j].box.y2 < parts[i].box.y1);
          }
        }
        EXPECT_EQ(members, region.members.size());
      }
    }
  }
}

TEST(Detect, ModelPathReportsInputOrderAndAttention) {
  const ModelConfig cfg = make_config(4, 1, 2, 4);
  const ModelWeights w = init_weights(cfg, 1);
  Page page = generate_page(dense_scientific_style(), 3);
  std::reverse(page.blocks.begin(), page.blocks.end());
  const DetectionResult r = detect_tables(page, w, cfg, true);
  ASSERT_EQ(r.block_labels.size(), page.blocks.size());
  ASSERT_TRUE(r.attention.has_value());
  EXPECT_EQ(r.attention->size(), 2u);
  EXPECT_EQ((*r.attention)[0].rows(), static_cast<Eigen::Index>(page.blocks.size()));
  const ForwardTrace tr = forward(order_blocks(page), w, cfg);
  for (std::size_t k = 0; k < r.order.size(); ++k) {
    const std::size_t i = r.order[k];
    EXPECT_EQ(r.block_labels[i], argmax_label(tr.probs.row(static_cast<Eigen::Index>(k))));
    EXPECT_EQ(r.block_probs[i][2], tr.probs(static_cast<Eigen::Index>(k), 2));
  }
  EXPECT_FALSE(detect_tables(page, w, cfg).attention.has_value());
}

}  // namespace

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
#include <array>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "tdelta/geometry.hpp"
#include "tdelta/model.hpp"

namespace tdelta {

using ClassProbs = std::array<double, kNumClasses>;

/// A text block together with its predicted class.
struct LabeledBlock {
  Box box;
  BlockLabel label = BlockLabel::kOutside;
  ClassProbs probs{};

  double confidence() const noexcept { return probs[label_index(label)]; }
};

/// A group of in-table blocks. `members` index the block span the region
/// was built from; `box` is their exact union.
struct TableRegion {
  Box box;
  std::vector<std::size_t> members;
  double confidence = 0.0;
};

struct Detection {
  Box box;
  double confidence = 0.0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Per-page output of the detection pipeline. Block labels and
/// probabilities follow the input block order; `order` is the raster
/// permutation fed to the model and `attention` (rows and columns in raster
/// order) is filled on request.
struct DetectionResult {
  std::string page_id;
  std::vector<Detection> detections;
  std::vector<BlockLabel> block_labels;
  std::vector<ClassProbs> block_probs;
  std::vector<std::size_t> order;
  std::optional<std::vector<Matrix>> attention;
};

/// Expansion margin for the neighbourhood graph: 1% of page height.
inline double cluster_margin(double page_height) noexcept { return 0.01 * page_height; }

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

inline TableRegion make_region(std::span<const LabeledBlock> blocks, std::vector<std::size_t> members) {
  std::sort(members.begin(), members.end());
  TableRegion r;
  r.box = blocks[members.front()].box;
  double conf = 0.0;
  for (const std::size_t i : members) {
    r.box = union_box(r.box, blocks[i].box);
    conf += *std::max_element(blocks[i].probs.begin(), blocks[i].probs.end());
  }
  r.confidence = conf / static_cast<double>(members.size());
  r.members = std::move(members);
  return r;
}

inline bool region_less(const TableRegion& a, const TableRegion& b) {
  const auto key = [](const TableRegion& r) {
    return std::tuple(r.box.y1, r.box.x1, r.box.y2, r.box.x2);
  };
  return key(a) < key(b);
}

}  // namespace detail

/// Connected components of in-table blocks, two blocks being adjacent when
/// their boxes intersect after each is grown by the cluster margin.
/// Regions come out sorted top to bottom, then left to right.
inline std::vector<TableRegion> cluster_regions(std::span<const LabeledBlock> blocks,
                                                const Page& page) {
  check_page_dims(page);
  const double m = cluster_margin(page.height);
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (in_table(blocks[i].label)) inside.push_back(i);
  }
  detail::DisjointSets sets(blocks.size());
  for (std::size_t a = 0; a < inside.size(); ++a) {
    const Box ea = expand(blocks[inside[a]].box, m);
    for (std::size_t b = a + 1; b < inside.size(); ++b) {
      if (intersects(ea, expand(blocks[inside[b]].box, m))) sets.unite(inside[a], inside[b]);
    }
  }
  std::vector<std::vector<std::size_t>> groups(blocks.size());
  for (const std::size_t i : inside) groups[sets.find(i)].push_back(i);

  std::vector<TableRegion> regions;
  for (auto& g : groups) {
    if (!g.empty()) regions.push_back(detail::make_region(blocks, std::move(g)));
  }
  std::sort(regions.begin(), regions.end(), detail::region_less);
  return regions;
}

/// Splits a region where an all-header text line follows a line holding a
/// content cell. A cut is made only when everything above the header line
/// ends strictly above everything from that line down, so the resulting
/// boxes never share a y-range.
inline std::vector<TableRegion> split_by_headers(const TableRegion& region,
                                                 std::span<const LabeledBlock> blocks,
                                                 const Page& page) {
  std::vector<std::size_t> sorted = region.members;
  std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
    const Box& x = blocks[a].box;
    const Box& y = blocks[b].box;
    return std::tuple(x.y1, x.x1, x.y2, x.x2, a) < std::tuple(y.y1, y.x1, y.y2, y.x2, b);
  });
  const auto lines = group_lines(std::span<const std::size_t>(sorted), line_tie_band(page.height),
                                 [&](std::size_t i) { return blocks[i].box.y1; });

  // Smallest top edge from each line downward.
  std::vector<double> top_below(lines.size() + 1, std::numeric_limits<double>::infinity());
  for (std::size_t k = lines.size(); k-- > 0;) {
    double t = top_below[k + 1];
    for (const std::size_t i : lines[k]) t = std::min(t, blocks[i].box.y1);
    top_below[k] = t;
  }

  std::vector<std::vector<std::size_t>> parts(1);
  bool seen_content = false;
  double bottom_above = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const bool all_header = std::all_of(lines[k].begin(), lines[k].end(),
                                        [&](std::size_t i) { return is_header(blocks[i].label); });
    if (all_header && seen_content && bottom_above < top_below[k]) {
      parts.emplace_back();
      seen_content = false;
    }
    for (const std::size_t i : lines[k]) {
      parts.back().push_back(i);
      bottom_above = std::max(bottom_above, blocks[i].box.y2);
      if (blocks[i].label == BlockLabel::kContentCell) seen_content = true;
    }
  }

  std::vector<TableRegion> out;
  out.reserve(parts.size());
  for (auto& p : parts) out.push_back(detail::make_region(blocks, std::move(p)));
  return out;
}

/// Both post-processing steps over labeled blocks.
inline std::vector<TableRegion> locate_tables(std::span<const LabeledBlock> blocks, const Page& page) {
  std::vector<TableRegion> tables;
  for (const TableRegion& r : cluster_regions(blocks, page)) {
    for (TableRegion& t : split_by_headers(r, blocks, page)) tables.push_back(std::move(t));
  }
  return tables;
}

namespace detail {

inline DetectionResult finish_detection(const Page& page, std::span<const std::size_t> order,
                                        const std::vector<LabeledBlock>& ordered) {
  DetectionResult res;
  res.page_id = page.page_id;
  res.order.assign(order.begin(), order.end());
  res.block_labels.resize(ordered.size());
  res.block_probs.resize(ordered.size());
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    res.block_labels[order[k]] = ordered[k].label;
    res.block_probs[order[k]] = ordered[k].probs;
  }
  for (const TableRegion& t : locate_tables(ordered, page)) {
    res.detections.push_back({t.box, t.confidence});
  }
  return res;
}

}  // namespace detail

/// Model-driven detection: raster order, features, forward pass, argmax
/// labels, then clustering and header splitting.
inline DetectionResult detect_tables(const Page& page, const ModelWeights& w, const ModelConfig& cfg,
                                     bool keep_attention = false) {
  check_page_dims(page);
  const std::vector<std::size_t> order = raster_order(page.blocks, page.height);
  std::vector<LabeledBlock> ordered(order.size());
  Matrix x(static_cast<Eigen::Index>(order.size()), static_cast<Eigen::Index>(kFeatureDim));
  for (std::size_t k = 0; k < order.size(); ++k) {
    const FeatureVector f = featurize(page.blocks[order[k]], page);
    for (std::size_t j = 0; j < kFeatureDim; ++j) x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = f[j];
    ordered[k].box = clip_to_page(page.blocks[order[k]].box, page.width, page.height);
  }
  if (order.empty()) return detail::finish_detection(page, order, ordered);

  ForwardTrace tr = forward(x, order.size(), w, cfg);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto row = tr.probs.row(static_cast<Eigen::Index>(k));
    for (std::size_t c = 0; c < kNumClasses; ++c) ordered[k].probs[c] = row(static_cast<Eigen::Index>(c));
    ordered[k].label = argmax_label(row);
  }
  DetectionResult res = detail::finish_detection(page, order, ordered);
  if (keep_attention) res.attention = std::move(tr.attention);
  return res;
}

/// Post-processing fed with gold labels (one-hot probabilities); no model
/// involved. Throws kValidation when a block has no gold label.
inline DetectionResult detect_tables_oracle(const Page& page) {
  check_page_dims(page);
  const std::vector<std::size_t> order = raster_order(page.blocks, page.height);
  std::vector<LabeledBlock> ordered(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const TextBlock& b = page.blocks[order[k]];
    if (!b.label) {
      fail(ErrorKind::kValidation, "page '" + page.page_id + "' block " + std::to_string(order[k]) +
                                       " has no gold label");
    }
    ordered[k].box = clip_to_page(b.box, page.width, page.height);
    ordered[k].label = *b.label;
    ordered[k].probs[label_index(*b.label)] = 1.0;
  }
  return detail::finish_detection(page, order, ordered);
}

}  // namespace tdelta

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
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "tdelta/error.hpp"

namespace tdelta {

/// Semantic role of a text block. The first three mean "inside a table".
enum class BlockLabel : std::uint8_t {
  kRowHeader = 0,
  kColumnHeader = 1,
  kContentCell = 2,
  kOutside = 3,
};

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kFeatureDim = 8;

constexpr bool in_table(BlockLabel label) noexcept {
  return label != BlockLabel::kOutside;
}

constexpr bool is_header(BlockLabel label) noexcept {
  return label == BlockLabel::kRowHeader || label == BlockLabel::kColumnHeader;
}

constexpr std::string_view to_string(BlockLabel label) noexcept {
  switch (label) {
    case BlockLabel::kRowHeader: return "RowHeader";
    case BlockLabel::kColumnHeader: return "ColumnHeader";
    case BlockLabel::kContentCell: return "ContentCell";
    case BlockLabel::kOutside: return "Outside";
  }
  return "Outside";
}

inline BlockLabel parse_label(std::string_view text) {
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const auto label = static_cast<BlockLabel>(k);
    if (text == to_string(label)) return label;
  }
  fail(ErrorKind::kInvalidLabel, "unknown block label '" + std::string(text) +
                                     "' (expected RowHeader, ColumnHeader, ContentCell or Outside)");
}

constexpr std::size_t label_index(BlockLabel label) noexcept {
  return static_cast<std::size_t>(label);
}

/// Axis-aligned box, origin top-left, y grows downward.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  constexpr double width() const noexcept { return x2 - x1; }
  constexpr double height() const noexcept { return y2 - y1; }
  constexpr double area() const noexcept { return width() * height(); }
  constexpr bool valid() const noexcept {
    return x1 < x2 && y1 < y2;
  }

  friend constexpr bool operator==(const Box&, const Box&) = default;
};

constexpr Box union_box(const Box& a, const Box& b) noexcept {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

constexpr bool contains(const Box& outer, const Box& inner) noexcept {
  return inner.x1 >= outer.x1 && inner.y1 >= outer.y1 && inner.x2 <= outer.x2 &&
         inner.y2 <= outer.y2;
}

/// Closed-interval overlap test: touching edges count as intersecting.
constexpr bool intersects(const Box& a, const Box& b) noexcept {
  return a.x1 <= b.x2 && b.x1 <= a.x2 && a.y1 <= b.y2 && b.y1 <= a.y2;
}

constexpr Box expand(const Box& b, double margin) noexcept {
  return {b.x1 - margin, b.y1 - margin, b.x2 + margin, b.y2 + margin};
}

/// Intersection over union. Throws kInvalidBox for zero-area input.
inline double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) {
    fail(ErrorKind::kInvalidBox, "iou requires boxes with positive width and height");
  }
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

struct TextBlock {
  Box box;
  std::optional<BlockLabel> label;

  friend bool operator==(const TextBlock&, const TextBlock&) = default;
};

struct Page {
  std::string page_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<TextBlock> blocks;
  std::vector<Box> tables;

  friend bool operator==(const Page&, const Page&) = default;
};

using FeatureVector = std::array<double, kFeatureDim>;

inline void check_page_dims(const Page& page) {
  if (!(page.width > 0.0) || !(page.height > 0.0)) {
    fail(ErrorKind::kInvalidPage, "page '" + page.page_id +
                                      "' has non-positive dimensions");
  }
}

constexpr Box clip_to_page(const Box& b, double width, double height) noexcept {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
          std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

/// 8-dim normalized geometry: corners, midpoint, then width and height, all
/// divided by the page extent along the matching axis.
inline FeatureVector featurize(const Box& raw, double page_width, double page_height) {
  if (!(page_width > 0.0) || !(page_height > 0.0)) {
    fail(ErrorKind::kInvalidPage, "page dimensions must be positive");
  }
  const Box b = clip_to_page(raw, page_width, page_height);
  if (!b.valid()) {
    fail(ErrorKind::kInvalidBlock, "text block has zero area after clipping to the page");
  }
  const double xc = 0.5 * (b.x1 + b.x2);
  const double yc = 0.5 * (b.y1 + b.y2);
  const auto nx = [&](double v) { return std::clamp(v / page_width, 0.0, 1.0); };
  const auto ny = [&](double v) { return std::clamp(v / page_height, 0.0, 1.0); };
  return {nx(b.x1), ny(b.y1), nx(b.x2), ny(b.y2), nx(xc), ny(yc),
          nx(b.x2 - b.x1), ny(b.y2 - b.y1)};
}

inline FeatureVector featurize(const TextBlock& block, const Page& page) {
  check_page_dims(page);
  return featurize(block.box, page.width, page.height);
}

/// Blocks whose top edges differ by less than this share a text line.
inline double line_tie_band(double page_height) noexcept { return 0.005 * page_height; }

namespace detail {

inline bool raster_less(const TextBlock& a, const TextBlock& b) {
  const auto key = [](const TextBlock& t) {
    const int lab = t.label ? static_cast<int>(*t.label) : -1;
    return std::tuple(t.box.y1, t.box.x1, t.box.y2, t.box.x2, lab);
  };
  return key(a) < key(b);
}

}  // namespace detail

/// Groups indices (already sorted by y1) into lines. A line is anchored at
/// its first block; a block joins while its y1 is within `band` of the anchor.
template <typename TopOf>
std::vector<std::vector<std::size_t>> group_lines(std::span<const std::size_t> sorted,
                                                  double band, TopOf top_of) {
  std::vector<std::vector<std::size_t>> lines;
  double anchor = 0.0;
  for (const std::size_t idx : sorted) {
    const double top = top_of(idx);
    if (lines.empty() || !(top - anchor < band)) {
      lines.emplace_back();
      anchor = top;
    }
    lines.back().push_back(idx);
  }
  return lines;
}

/// Canonical raster permutation of `blocks`: lines top to bottom, then
/// left to right within a line. Returns indices into the input.
inline std::vector<std::size_t> raster_order(std::span<const TextBlock> blocks,
                                             double page_height) {
  std::vector<std::size_t> idx(blocks.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return detail::raster_less(blocks[a], blocks[b]);
  });
  auto lines = group_lines(std::span<const std::size_t>(idx), line_tie_band(page_height),
                           [&](std::size_t i) { return blocks[i].box.y1; });
  std::vector<std::size_t> out;
  out.reserve(blocks.size());
  for (auto& line : lines) {
    std::stable_sort(line.begin(), line.end(), [&](std::size_t a, std::size_t b) {
      if (blocks[a].box.x1 != blocks[b].box.x1) return blocks[a].box.x1 < blocks[b].box.x1;
      return detail::raster_less(blocks[a], blocks[b]);
    });
    out.insert(out.end(), line.begin(), line.end());
  }
  return out;
}

inline Page order_blocks(Page page) {
  const auto perm = raster_order(page.blocks, page.height);
  std::vector<TextBlock> sorted;
  sorted.reserve(perm.size());
  for (const std::size_t i : perm) sorted.push_back(page.blocks[i]);
  page.blocks = std::move(sorted);
  return page;
}

/// Checks page-level invariants; used by the dataset reader.
inline void validate_page(const Page& page) {
  check_page_dims(page);
  for (std::size_t i = 0; i < page.blocks.size(); ++i) {
    if (!page.blocks[i].box.valid()) {
      fail(ErrorKind::kValidation, "block " + std::to_string(i) +
                                       " must satisfy x1 < x2 and y1 < y2");
    }
  }
  for (std::size_t i = 0; i < page.tables.size(); ++i) {
    const Box& t = page.tables[i];
    if (!t.valid()) {
      fail(ErrorKind::kValidation, "table " + std::to_string(i) +
                                       " must satisfy x1 < x2 and y1 < y2");
    }
    if (!contains(Box{0.0, 0.0, page.width, page.height}, t)) {
      fail(ErrorKind::kValidation, "table " + std::to_string(i) + " lies outside the page");
    }
  }
}

}  // namespace tdelta

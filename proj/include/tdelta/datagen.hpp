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

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tdelta/error.hpp"
#include "tdelta/geometry.hpp"
#include "tdelta/io.hpp"
#include "tdelta/postprocess.hpp"
#include "tdelta/rng.hpp"

namespace tdelta {

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const RealRange&, const RealRange&) = default;
};

/// Layout parameters of one synthetic document style. Horizontal sizes are
/// fractions of page width, vertical sizes fractions of page height.
struct StyleProfile {
  std::string name = "custom";
  double page_width = 612.0;
  double page_height = 792.0;
  double margin = 0.07;

  IntRange table_count{1, 2};
  IntRange rows{3, 10};         // content rows
  IntRange cols{3, 7};          // content columns, row-header column excluded
  IntRange header_rows{1, 2};
  double left_header_prob = 0.3;
  double stack_prob = 0.1;

  RealRange row_gap{0.003, 0.006};
  RealRange col_gap{0.004, 0.007};
  double col_gap_multiplier = 1.0;
  RealRange cell_height{0.010, 0.013};
  RealRange col_width{0.06, 0.10};
  RealRange row_header_width{0.12, 0.20};
  RealRange content_fill{0.45, 1.0};

  IntRange paragraphs{2, 5};
  IntRange paragraph_lines{1, 7};
  RealRange line_gap{0.002, 0.004};
  RealRange element_gap{0.025, 0.05};
  double jitter = 0.0003;

  friend bool operator==(const StyleProfile&, const StyleProfile&) = default;

  void validate() const {
    const auto bad = [&](const std::string& what) {
      fail(ErrorKind::kInvalidConfig, "style '" + name + "': " + what);
    };
    const auto int_ok = [&](const IntRange& r, std::int64_t min, const char* what) {
      if (r.lo < min || r.hi < r.lo) bad(std::string(what) + " range is empty or below " + std::to_string(min));
    };
    const auto real_ok = [&](const RealRange& r, const char* what) {
      if (!(r.lo >= 0.0) || !(r.hi >= r.lo) || !std::isfinite(r.hi)) bad(std::string(what) + " range is invalid");
    };
    if (!(page_width > 0.0) || !(page_height > 0.0)) bad("page size must be positive");
    if (!(margin >= 0.0 && margin < 0.4)) bad("margin must be in [0, 0.4)");
    int_ok(table_count, 0, "table_count");
    int_ok(rows, 1, "rows");
    int_ok(cols, 1, "cols");
    int_ok(header_rows, 1, "header_rows");
    int_ok(paragraphs, 0, "paragraphs");
    int_ok(paragraph_lines, 1, "paragraph_lines");
    for (const double p : {left_header_prob, stack_prob}) {
      if (!(p >= 0.0 && p <= 1.0)) bad("probabilities must lie in [0, 1]");
    }
    real_ok(row_gap, "row_gap");
    real_ok(col_gap, "col_gap");
    real_ok(cell_height, "cell_height");
    real_ok(col_width, "col_width");
    real_ok(row_header_width, "row_header_width");
    real_ok(content_fill, "content_fill");
    real_ok(line_gap, "line_gap");
    real_ok(element_gap, "element_gap");
    if (!(col_gap_multiplier > 0.0)) bad("col_gap_multiplier must be positive");
    if (!(jitter >= 0.0)) bad("jitter must be non-negative");
    if (cell_height.lo <= 0.0 || col_width.lo <= 0.0 || row_header_width.lo <= 0.0) {
      bad("cell sizes must be positive");
    }
    if (content_fill.lo <= 0.0 || content_fill.hi > 1.0) bad("content_fill must lie in (0, 1]");
    if (cell_height.lo <= 2.0 * jitter) bad("jitter must be well below cell_height");

    // Table cells must chain under the clustering margin; separate elements
    // must not.
    const double two_m = 2.0 * cluster_margin(page_height);
    const double slack = 2.0 * jitter * page_height;
    if (row_gap.hi * page_height + slack >= two_m) bad("row_gap must stay below twice the cluster margin");
    if (col_gap.hi * col_gap_multiplier * page_width + slack >= two_m) {
      bad("col_gap (after multiplier) must stay below twice the cluster margin");
    }
    if (1.2 * row_gap.hi * page_height >= 0.9 * two_m) bad("row_gap leaves no room for stacked-table gaps");
    if (element_gap.lo * page_height <= two_m + slack) bad("element_gap must exceed twice the cluster margin");
    if (row_gap.lo * page_height <= line_tie_band(page_height) - cell_height.lo * page_height) {
      // Rows are one cell height apart; this only guards absurd settings.
      bad("rows would share a text line");
    }
    if (cell_height.lo * page_height <= line_tie_band(page_height) + slack) {
      bad("cell_height must exceed the line tie band");
    }
  }
};

/// Narrow gaps, tight grids, few left header columns.
inline StyleProfile dense_scientific_style() {
  StyleProfile s;
  s.name = "dense-scientific";
  s.table_count = {1, 2};
  s.rows = {3, 10};
  s.cols = {3, 7};
  s.header_rows = {1, 2};
  s.left_header_prob = 0.3;
  s.stack_prob = 0.1;
  s.row_gap = {0.003, 0.006};
  s.col_gap = {0.004, 0.007};
  s.col_gap_multiplier = 1.0;
  s.col_width = {0.06, 0.10};
  s.row_header_width = {0.12, 0.20};
  s.content_fill = {0.45, 1.0};
  s.paragraphs = {2, 5};
  s.paragraph_lines = {1, 7};
  return s;
}

/// Wide column gaps, long row labels, frequent stacked tables.
inline StyleProfile sparse_financial_style() {
  StyleProfile s;
  s.name = "sparse-financial";
  s.table_count = {1, 2};
  s.rows = {4, 12};
  s.cols = {2, 5};
  s.header_rows = {1, 2};
  s.left_header_prob = 0.9;
  s.stack_prob = 0.5;
  s.row_gap = {0.005, 0.009};
  s.col_gap = {0.005, 0.007};
  s.col_gap_multiplier = 3.2;
  s.col_width = {0.07, 0.10};
  s.row_header_width = {0.18, 0.30};
  s.content_fill = {0.4, 0.9};
  s.paragraphs = {1, 3};
  s.paragraph_lines = {1, 5};
  return s;
}

inline StyleProfile builtin_style(const std::string& name) {
  if (name == "dense-scientific") return dense_scientific_style();
  if (name == "sparse-financial") return sparse_financial_style();
  fail(ErrorKind::kInvalidConfig, "unknown style '" + name + "'");
}

// ---------------------------------------------------------------------------
// Profile JSON. Ranges are [lo, hi] arrays; fields left out keep the
// defaults of StyleProfile; unknown fields are rejected.

namespace detail {

template <typename Fn>
void for_each_style_field(StyleProfile& s, Fn&& fn) {
  fn("page_width", s.page_width);
  fn("page_height", s.page_height);
  fn("margin", s.margin);
  fn("table_count", s.table_count);
  fn("rows", s.rows);
  fn("cols", s.cols);
  fn("header_rows", s.header_rows);
  fn("left_header_prob", s.left_header_prob);
  fn("stack_prob", s.stack_prob);
  fn("row_gap", s.row_gap);
  fn("col_gap", s.col_gap);
  fn("col_gap_multiplier", s.col_gap_multiplier);
  fn("cell_height", s.cell_height);
  fn("col_width", s.col_width);
  fn("row_header_width", s.row_header_width);
  fn("content_fill", s.content_fill);
  fn("paragraphs", s.paragraphs);
  fn("paragraph_lines", s.paragraph_lines);
  fn("line_gap", s.line_gap);
  fn("element_gap", s.element_gap);
  fn("jitter", s.jitter);
}

inline void read_style_value(const Json& v, const std::string& key, double& out) {
  if (!v.is_number()) fail(ErrorKind::kInvalidConfig, "style field '" + key + "' must be a number");
  out = v.get<double>();
}

inline void read_style_value(const Json& v, const std::string& key, IntRange& out) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    fail(ErrorKind::kInvalidConfig, "style field '" + key + "' must be [lo, hi] integers");
  }
  out = {v[0].get<std::int64_t>(), v[1].get<std::int64_t>()};
}

inline void read_style_value(const Json& v, const std::string& key, RealRange& out) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    fail(ErrorKind::kInvalidConfig, "style field '" + key + "' must be [lo, hi] numbers");
  }
  out = {v[0].get<double>(), v[1].get<double>()};
}

inline Json style_value(double v) { return v; }
inline Json style_value(const IntRange& r) { return Json::array({r.lo, r.hi}); }
inline Json style_value(const RealRange& r) { return Json::array({r.lo, r.hi}); }

}  // namespace detail

inline Json style_to_json(StyleProfile s) {
  Json j = {{"name", s.name}};
  detail::for_each_style_field(s, [&](const char* key, const auto& v) { j[key] = detail::style_value(v); });
  return j;
}

inline StyleProfile style_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorKind::kInvalidConfig, "style profile must be a JSON object");
  StyleProfile s;
  for (const auto& [key, v] : j.items()) {
    if (key == "name") {
      if (!v.is_string()) fail(ErrorKind::kInvalidConfig, "style field 'name' must be a string");
      s.name = v.get<std::string>();
      continue;
    }
    bool known = false;
    detail::for_each_style_field(s, [&](const char* k, auto& field) {
      if (key == k) {
        detail::read_style_value(v, key, field);
        known = true;
      }
    });
    if (!known) fail(ErrorKind::kInvalidConfig, "unknown style field '" + key + "'");
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Page layout

namespace detail {

/// A laid-out element in local coordinates (top at y = 0).
struct Element {
  std::vector<TextBlock> blocks;
  std::vector<Box> tables;
  double height = 0.0;
};

struct TableFormat {
  std::vector<double> slot_x;   // left edge of each slot, relative
  std::vector<double> slot_w;
  bool row_header = false;
  std::int64_t header_rows = 1;
  double cell_h = 0.0;
  double row_gap = 0.0;
};

class Layout {
 public:
  Layout(const StyleProfile& s, CounterRng& rng) : s_(s), rng_(rng) {
    content_w_ = s.page_width * (1.0 - 2.0 * s.margin);
    content_h_ = s.page_height * (1.0 - 2.0 * s.margin);
  }

  double content_w() const noexcept { return content_w_; }
  double content_h() const noexcept { return content_h_; }

  double h_frac(const RealRange& r) { return rng_.uniform(r.lo, r.hi) * s_.page_height; }
  double w_frac(const RealRange& r) { return rng_.uniform(r.lo, r.hi) * s_.page_width; }

  TableFormat sample_format() {
    TableFormat f;
    f.row_header = rng_.bernoulli(s_.left_header_prob);
    f.header_rows = rng_.uniform_int(s_.header_rows.lo, s_.header_rows.hi);
    f.cell_h = h_frac(s_.cell_height);
    f.row_gap = h_frac(s_.row_gap);
    auto ncols = rng_.uniform_int(s_.cols.lo, s_.cols.hi);
    const double gap = w_frac(s_.col_gap) * s_.col_gap_multiplier;
    std::vector<double> widths;
    if (f.row_header) widths.push_back(w_frac(s_.row_header_width));
    for (std::int64_t c = 0; c < ncols; ++c) widths.push_back(w_frac(s_.col_width));
    const auto total = [&] {
      double t = 0.0;
      for (double w : widths) t += w;
      return t + gap * static_cast<double>(widths.size() - 1);
    };
    // Drop trailing columns until the grid fits the text width.
    while (total() > content_w_ && widths.size() > (f.row_header ? 2u : 1u)) widths.pop_back();
    if (total() > content_w_) {
      fail(ErrorKind::kGeneration, "table width: a single column does not fit the page");
    }
    const double x0 = rng_.uniform(0.0, content_w_ - total());
    double x = x0;
    for (double w : widths) {
      f.slot_x.push_back(x);
      f.slot_w.push_back(w);
      x += w + gap;
    }
    return f;
  }

  /// One table grid with its top at `top`.
  void emit_table(const TableFormat& f, std::int64_t content_rows, double top, Element& e) {
    const std::size_t first_content = f.row_header ? 1 : 0;
    const std::int64_t total_rows = f.header_rows + content_rows;
    const std::int64_t full_row = rng_.uniform_int(0, content_rows - 1);
    const std::size_t begin = e.blocks.size();
    for (std::int64_t r = 0; r < total_rows; ++r) {
      const double y1 = top + static_cast<double>(r) * (f.cell_h + f.row_gap);
      const bool header = r < f.header_rows;
      const bool full = r - f.header_rows == full_row;
      for (std::size_t c = 0; c < f.slot_x.size(); ++c) {
        const double sx = f.slot_x[c];
        const double sw = f.slot_w[c];
        TextBlock b;
        if (header) {
          if (c < first_content) continue;  // empty corner above the row labels
          b.box = {sx, y1, sx + sw, y1 + f.cell_h};
          b.label = BlockLabel::kColumnHeader;
        } else {
          const double w = full ? sw : sw * rng_.uniform(s_.content_fill.lo, s_.content_fill.hi);
          if (c < first_content) {
            b.box = {sx, y1, sx + w, y1 + f.cell_h};
            b.label = BlockLabel::kRowHeader;
          } else {
            b.box = {sx + sw - w, y1, sx + sw, y1 + f.cell_h};
            b.label = BlockLabel::kContentCell;
          }
        }
        e.blocks.push_back(b);
      }
    }
    e.tables.push_back(Box{});  // filled in once blocks are final
    table_ranges_.push_back({begin, e.blocks.size()});
  }

  Element table_element() {
    Element e;
    const TableFormat f = sample_format();
    const auto rows1 = rng_.uniform_int(s_.rows.lo, s_.rows.hi);
    emit_table(f, rows1, 0.0, e);
    double bottom = static_cast<double>(f.header_rows + rows1) * (f.cell_h + f.row_gap) - f.row_gap;
    if (rng_.bernoulli(s_.stack_prob)) {
      const double two_m = 2.0 * cluster_margin(s_.page_height);
      const double gap = rng_.uniform(1.2 * f.row_gap, 0.9 * two_m);
      const auto rows2 = rng_.uniform_int(s_.rows.lo, s_.rows.hi);
      emit_table(f, rows2, bottom + gap, e);
      bottom += gap + static_cast<double>(f.header_rows + rows2) * (f.cell_h + f.row_gap) - f.row_gap;
    }
    e.height = bottom;
    return e;
  }

  Element paragraph_element() {
    Element e;
    const auto lines = rng_.uniform_int(s_.paragraph_lines.lo, s_.paragraph_lines.hi);
    const double lh = h_frac(s_.cell_height);
    const double gap = h_frac(s_.line_gap);
    const double last_w = rng_.uniform(0.2, 0.9) * content_w_;
    for (std::int64_t k = 0; k < lines; ++k) {
      const double y1 = static_cast<double>(k) * (lh + gap);
      const double w = k + 1 == lines ? last_w : content_w_ * rng_.uniform(0.95, 1.0);
      e.blocks.push_back({{0.0, y1, w, y1 + lh}, BlockLabel::kOutside});
    }
    e.height = static_cast<double>(lines) * (lh + gap) - gap;
    return e;
  }

  /// Block index ranges of the tables emitted since the last call.
  std::vector<std::pair<std::size_t, std::size_t>> take_table_ranges() {
    return std::exchange(table_ranges_, {});
  }

 private:
  const StyleProfile& s_;
  CounterRng& rng_;
  double content_w_ = 0.0;
  double content_h_ = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> table_ranges_;
};

inline double round_coord(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace detail

inline constexpr int kLayoutAttempts = 64;

/// Checks the labelled-page contract: labels agree with table containment,
/// nothing outside a table touches its interior, tables are disjoint, and
/// the in-table blocks of each table span at least 90% of its width and
/// height.
inline void validate_synthetic(const Page& page) {
  validate_page(page);
  const auto overlap_area = [](const Box& a, const Box& b) {
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    return w > 0.0 && h > 0.0 ? w * h : 0.0;
  };
  for (std::size_t a = 0; a < page.tables.size(); ++a) {
    for (std::size_t b = a + 1; b < page.tables.size(); ++b) {
      if (overlap_area(page.tables[a], page.tables[b]) > 0.0) {
        fail(ErrorKind::kValidation, "tables " + std::to_string(a) + " and " + std::to_string(b) + " overlap");
      }
    }
  }
  std::vector<std::optional<Box>> span(page.tables.size());
  for (std::size_t i = 0; i < page.blocks.size(); ++i) {
    const TextBlock& b = page.blocks[i];
    if (!b.label) fail(ErrorKind::kValidation, "block " + std::to_string(i) + " has no label");
    std::optional<std::size_t> owner;
    for (std::size_t t = 0; t < page.tables.size(); ++t) {
      if (contains(page.tables[t], b.box)) owner = t;
      else if (overlap_area(page.tables[t], b.box) > 0.0) {
        fail(ErrorKind::kValidation, "block " + std::to_string(i) + " straddles table " + std::to_string(t));
      }
    }
    if (owner.has_value() != in_table(*b.label)) {
      fail(ErrorKind::kValidation, "block " + std::to_string(i) + " label " + std::string(to_string(*b.label)) +
                                       " disagrees with table containment");
    }
    if (owner) span[*owner] = span[*owner] ? union_box(*span[*owner], b.box) : b.box;
  }
  for (std::size_t t = 0; t < page.tables.size(); ++t) {
    const Box& tb = page.tables[t];
    if (!span[t] || span[t]->width() < 0.9 * tb.width() || span[t]->height() < 0.9 * tb.height()) {
      fail(ErrorKind::kValidation, "table " + std::to_string(t) + " is covered by less than 90% in some axis");
    }
  }
}

/// Deterministic synthetic page for (style, seed). Elements are stacked
/// top to bottom with gaps wider than twice the cluster margin; a stacked
/// pair of tables counts as one element.
inline Page generate_page(const StyleProfile& style, std::uint64_t seed) {
  style.validate();
  CounterRng rng(seed, 0x70616765);
  detail::Layout layout(style, rng);
  for (int attempt = 0; attempt < kLayoutAttempts; ++attempt) {
    std::vector<detail::Element> elems;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> ranges;
    const auto ntab = rng.uniform_int(style.table_count.lo, style.table_count.hi);
    const auto npar = rng.uniform_int(style.paragraphs.lo, style.paragraphs.hi);
    for (std::int64_t k = 0; k < ntab; ++k) {
      elems.push_back(layout.table_element());
      ranges.push_back(layout.take_table_ranges());
    }
    for (std::int64_t k = 0; k < npar; ++k) {
      elems.push_back(layout.paragraph_element());
      ranges.emplace_back();
    }
    std::vector<std::size_t> order(elems.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<double> gaps;
    double used = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k > 0) {
        gaps.push_back(layout.h_frac(style.element_gap));
        used += gaps.back();
      }
      used += elems[order[k]].height;
    }
    if (used > layout.content_h()) continue;

    Page page;
    page.page_id = style.name + "-" + std::to_string(seed);
    page.width = style.page_width;
    page.height = style.page_height;
    const double left = style.margin * style.page_width;
    double y = style.margin * style.page_height + rng.uniform(0.0, layout.content_h() - used);
    const double jit = style.jitter * style.page_height;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k > 0) y += gaps[k - 1];
      const detail::Element& e = elems[order[k]];
      const std::size_t base = page.blocks.size();
      for (const TextBlock& b : e.blocks) {
        TextBlock out = b;
        out.box = {detail::round_coord(left + b.box.x1 + rng.uniform(-jit, jit)),
                   detail::round_coord(y + b.box.y1 + rng.uniform(-jit, jit)),
                   detail::round_coord(left + b.box.x2 + rng.uniform(-jit, jit)),
                   detail::round_coord(y + b.box.y2 + rng.uniform(-jit, jit))};
        page.blocks.push_back(out);
      }
      for (const auto& [lo, hi] : ranges[order[k]]) {
        Box t = page.blocks[base + lo].box;
        for (std::size_t i = base + lo; i < base + hi; ++i) t = union_box(t, page.blocks[i].box);
        page.tables.push_back(t);
      }
      y += e.height;
    }
    validate_synthetic(page);
    return page;
  }
  fail(ErrorKind::kGeneration, "style '" + style.name + "': page layout overflow, elements exceed the page "
                               "content height after " + std::to_string(kLayoutAttempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Corpora

struct SplitInfo {
  std::string file;
  std::uint64_t first_seed = 0;
  std::size_t count = 0;
};

struct CorpusManifest {
  StyleProfile style;
  std::uint64_t base_seed = 0;
  std::size_t count = 0;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::array<SplitInfo, 3> splits;  // train, val, test
};

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

/// Split sizes: val and test are rounded, train takes the remainder.
inline std::array<std::size_t, 3> split_counts(std::size_t count, const std::array<double, 3>& fr) {
  double sum = 0.0;
  for (const double f : fr) {
    if (!(f >= 0.0 && f <= 1.0)) fail(ErrorKind::kInvalidConfig, "split fractions must lie in [0, 1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::kInvalidConfig, "split fractions must sum to 1");
  const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(count) * fr[1]));
  const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(count) * fr[2]));
  if (val + test > count) fail(ErrorKind::kInvalidConfig, "split fractions leave no room for training pages");
  return {count - val - test, val, test};
}

inline Json manifest_to_json(const CorpusManifest& m) {
  Json splits = Json::object();
  for (std::size_t k = 0; k < 3; ++k) {
    splits[kSplitNames[k]] = {{"file", m.splits[k].file},
                              {"first_seed", m.splits[k].first_seed},
                              {"count", m.splits[k].count}};
  }
  return {{"style", style_to_json(m.style)}, {"base_seed", m.base_seed}, {"count", m.count},
          {"fractions", Json(std::vector<double>(m.fractions.begin(), m.fractions.end()))},
          {"splits", std::move(splits)}};
}

inline CorpusManifest manifest_from_json(const Json& j) {
  try {
    CorpusManifest m;
    m.style = style_from_json(j.at("style"));
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    m.count = j.at("count").get<std::size_t>();
    const auto fr = j.at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) fail(ErrorKind::kParse, "manifest 'fractions' needs 3 values");
    std::copy(fr.begin(), fr.end(), m.fractions.begin());
    for (std::size_t k = 0; k < 3; ++k) {
      const Json& s = j.at("splits").at(kSplitNames[k]);
      m.splits[k] = {s.at("file").get<std::string>(), s.at("first_seed").get<std::uint64_t>(),
                     s.at("count").get<std::size_t>()};
    }
    return m;
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, std::string("manifest: ") + e.what());
  }
}

/// Writes train/val/test JSONL files and manifest.json into `dir`. Page k
/// uses seed base_seed + k; splits are consecutive seed ranges.
inline CorpusManifest generate_corpus(const StyleProfile& style, std::size_t count, std::uint64_t base_seed,
                                      const std::array<double, 3>& fractions, const std::string& dir) {
  if (count < 1) fail(ErrorKind::kInvalidConfig, "corpus count must be >= 1");
  style.validate();
  const auto sizes = split_counts(count, fractions);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create directory '" + dir + "': " + ec.message());

  CorpusManifest m;
  m.style = style;
  m.base_seed = base_seed;
  m.count = count;
  m.fractions = fractions;
  std::uint64_t seed = base_seed;
  for (std::size_t k = 0; k < 3; ++k) {
    m.splits[k] = {std::string(kSplitNames[k]) + ".jsonl", seed, sizes[k]};
    std::vector<Page> pages;
    pages.reserve(sizes[k]);
    for (std::size_t i = 0; i < sizes[k]; ++i) pages.push_back(generate_page(style, seed++));
    write_pages(pages, (std::filesystem::path(dir) / m.splits[k].file).string());
  }
  write_file((std::filesystem::path(dir) / "manifest.json").string(), manifest_to_json(m).dump(2) + "\n");
  return m;
}

inline CorpusManifest regenerate_corpus(const std::string& manifest_path, const std::string& dir) {
  const CorpusManifest m = manifest_from_json(parse_json(read_file(manifest_path), manifest_path));
  return generate_corpus(m.style, m.count, m.base_seed, m.fractions, dir);
}

}  // namespace tdelta

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
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tdelta/error.hpp"
#include "tdelta/geometry.hpp"
#include "tdelta/postprocess.hpp"

namespace tdelta {

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

/// Greedy one-to-one matching. Detections are visited by descending
/// confidence (stable on index); each takes the unmatched ground truth with the
/// highest IoU, provided that IoU is at least `tau`.
inline MatchCounts match_at_threshold(std::span<const Detection> dets, std::span<const Box> gts,
                                      double tau) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<bool> taken(gts.size(), false);
  MatchCounts c;
  for (const std::size_t d : order) {
    std::size_t best = gts.size();
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(dets[d].box, gts[g]);
      if (v >= tau && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < gts.size()) {
      taken[best] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = gts.size() - c.tp;
  return c;
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision is 1 on a page with nothing to find and nothing found, 0 when
/// nothing was found but something should have been. Recall is 1 when there
/// is nothing to find.
inline Prf compute_prf(std::size_t tp, std::size_t fp, std::size_t fn) noexcept {
  Prf r;
  if (tp + fp == 0) {
    r.precision = fn == 0 ? 1.0 : 0.0;
  } else {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  r.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double s = r.precision + r.recall;
  r.f1 = s > 0.0 ? 2.0 * r.precision * r.recall / s : 0.0;
  return r;
}

inline Prf compute_prf(const MatchCounts& c) noexcept { return compute_prf(c.tp, c.fp, c.fn); }

/// 0.50, 0.55, ..., 0.95, each the double nearest its decimal value.
inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int k = 50; k <= 95; k += 5) t.push_back(k / 100.0);
  return t;
}

/// Parses "start:step:stop" (inclusive). Values are snapped to the nearest
/// multiple of 1e-6 so 0.5:0.05:0.95 yields exactly the default grid.
inline std::vector<double> parse_thresholds(const std::string& text) {
  double start = 0.0, step = 0.0, stop = 0.0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &start, &step, &stop, &tail) != 3 ||
      !(step > 0.0) || !(start > 0.0) || !(stop < 1.0) || stop < start) {
    fail(ErrorKind::kParse, "thresholds must look like start:step:stop with 0 < start <= stop < 1 "
                            "and step > 0, got '" + text + "'");
  }
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long k = 0; k <= n; ++k) {
    const long micro = std::lround((start + static_cast<double>(k) * step) * 1e6);
    out.push_back(static_cast<double>(micro) / 1e6);
  }
  return out;
}

/// One page's predictions and ground truth.
struct PageEval {
  std::string page_id;
  std::vector<Detection> detections;
  std::vector<Box> ground_truth;
};

struct ThresholdMetrics {
  double threshold = 0.0;
  MatchCounts counts;
  Prf prf;
};

struct MetricsReport {
  std::vector<ThresholdMetrics> per_threshold;
  Prf average;
  std::size_t pages = 0;

  const ThresholdMetrics* at(double tau) const noexcept {
    for (const auto& t : per_threshold) {
      if (std::abs(t.threshold - tau) < 1e-9) return &t;
    }
    return nullptr;
  }
};

/// Micro-averaged detection metrics: counts are pooled over pages at each
/// threshold before computing P/R/F1. The average row is the mean of the
/// per-threshold values.
inline MetricsReport evaluate_counts(std::span<const std::vector<MatchCounts>> per_page,
                                     std::span<const double> thresholds) {
  MetricsReport rep;
  rep.pages = per_page.size();
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    ThresholdMetrics tm;
    tm.threshold = thresholds[k];
    for (const auto& page : per_page) tm.counts += page[k];
    tm.prf = compute_prf(tm.counts);
    rep.per_threshold.push_back(tm);
  }
  if (!thresholds.empty()) {
    for (const auto& t : rep.per_threshold) {
      rep.average.precision += t.prf.precision;
      rep.average.recall += t.prf.recall;
      rep.average.f1 += t.prf.f1;
    }
    const double n = static_cast<double>(thresholds.size());
    rep.average.precision /= n;
    rep.average.recall /= n;
    rep.average.f1 /= n;
  }
  return rep;
}

inline MetricsReport evaluate_dataset(std::span<const PageEval> pages,
                                      std::span<const double> thresholds) {
  std::unordered_set<std::string> seen;
  std::vector<std::vector<MatchCounts>> counts;
  counts.reserve(pages.size());
  for (const PageEval& p : pages) {
    if (!seen.insert(p.page_id).second) {
      fail(ErrorKind::kDuplicatePageId, "page id '" + p.page_id + "' appears more than once");
    }
    auto& row = counts.emplace_back();
    for (const double tau : thresholds) row.push_back(match_at_threshold(p.detections, p.ground_truth, tau));
  }
  return evaluate_counts(counts, thresholds);
}

inline MetricsReport evaluate_dataset(std::span<const PageEval> pages) {
  const std::vector<double> t = default_thresholds();
  return evaluate_dataset(pages, t);
}

/// Plain-text table with P, R and F1 at IoU 0.5, IoU 0.6 and the average.
/// A column is skipped when its threshold was not evaluated.
inline std::string format_metrics_table(const MetricsReport& rep) {
  struct Column {
    std::string title;
    Prf prf;
  };
  std::vector<Column> cols;
  if (const auto* t = rep.at(0.5)) cols.push_back({"IoU@0.5", t->prf});
  if (const auto* t = rep.at(0.6)) cols.push_back({"IoU@0.6", t->prf});
  if (!rep.per_threshold.empty()) {
    char title[64];
    std::snprintf(title, sizeof title, "Avg. (IoU@%.2g-%.2g)", rep.per_threshold.front().threshold,
                  rep.per_threshold.back().threshold);
    cols.push_back({title, rep.average});
  }
  std::string head, sub, vals;
  char buf[128];
  for (const auto& c : cols) {
    std::snprintf(buf, sizeof buf, "| %-26s ", c.title.c_str());
    head += buf;
    std::snprintf(buf, sizeof buf, "| %8s %8s %8s ", "P", "R", "F1");
    sub += buf;
    std::snprintf(buf, sizeof buf, "| %8.2f %8.2f %8.2f ", 100.0 * c.prf.precision,
                  100.0 * c.prf.recall, 100.0 * c.prf.f1);
    vals += buf;
  }
  return head + "|\n" + sub + "|\n" + vals + "|\n";
}

}  // namespace tdelta

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
// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tdelta/datagen.hpp"
#include "tdelta/eval.hpp"
#include "tdelta/gradcheck.hpp"
#include "tdelta/io.hpp"
#include "tdelta/postprocess.hpp"
#include "tdelta/trainer.hpp"

namespace {

using namespace tdelta;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& line) {
  std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Page> pages_of(const StyleProfile& style, std::uint64_t base, std::size_t n) {
  std::vector<Page> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_page(style, base + i));
  return out;
}

ModelWeights uniform_weights(const ModelConfig& cfg, std::uint64_t seed, double range) {
  ModelWeights w = zero_weights(cfg);
  std::uint64_t stream = 0;
  for_each_tensor(w, cfg, [&](const TensorId&, auto& t) {
    CounterRng rng(seed, stream++);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-range, range);
  });
  return w;
}

double max_diff(const Matrix& m, const oracle::Mat& o) {
  double d = 0.0;
  for (std::size_t r = 0; r < o.size(); ++r) {
    for (std::size_t c = 0; c < o[r].size(); ++c) {
      d = std::max(d, std::abs(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) - o[r][c]));
    }
  }
  return d;
}

void params_counts() {
  struct Row {
    ModelConfig cfg;
    double target;
    double tol;
  };
  const std::vector<Row> rows{
      {make_config(128, 8, 4, 128), 3.1e6, 0.03},
      {make_config(128, 2, 4, 128), 0.7e6, 0.12},  {make_config(128, 4, 4, 128), 1.5e6, 0.05},
      {make_config(128, 6, 4, 128), 2.3e6, 0.05},  {make_config(128, 12, 4, 128), 4.7e6, 0.05},
      {make_config(16, 8, 4, 16), 0.051e6, 0.05},   {make_config(32, 8, 4, 32), 0.199e6, 0.05},
      {make_config(64, 8, 4, 64), 0.783e6, 0.05},
  };
  bool ok = param_count(rows[0].cfg) == 3139716;
  std::string detail = fmt("(128,8,4,128)=%zu", param_count(rows[0].cfg));
  for (const Row& r : rows) {
    const double p = static_cast<double>(param_count(r.cfg));
    const double rel = std::abs(p - r.target) / r.target;
    ok = ok && rel <= r.tol;
    info(fmt("l_h=%zu N_L=%zu: %.0f vs %.3gM (%.1f%%, tol %.0f%%)", r.cfg.hidden_size, r.cfg.num_layers, p,
             r.target / 1e6, 100.0 * rel, 100.0 * r.tol));
  }
  report(1, "parameter counts", ok, detail);
}

void gradient_check() {
  const ModelConfig cfg = make_config(3, 2, 1, 4);
  const GradCheckReport rep = grad_check(cfg, 0, 1e-5, 1e-4);
  for (const GradCheckEntry& e : rep.entries) {
    info(fmt("%-22s %-8s n=%-3zu rel %.2e abs %.2e%s", e.name.c_str(), e.kind.c_str(), e.checked, e.max_rel_error,
             e.max_abs_error, e.pass ? "" : "  <-"));
  }
  std::size_t seeds_ok = 0;
  double worst_abs = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const GradCheckReport r = grad_check(cfg, s, 1e-5, 1e-4);
    seeds_ok += r.pass ? 1 : 0;
    for (const GradCheckEntry& e : r.entries) worst_abs = std::max(worst_abs, e.max_abs_error);
  }
  info(fmt("seeds 0-199: %zu/200 pass at tol 1e-4; worst absolute error %.2e", seeds_ok, worst_abs));
  report(2, "gradient check (3,2,1,4), 4 blocks, seed 0", rep.pass,
         fmt("max relative error %.3e (tol 1e-4)", rep.max_rel_error));
}

void forward_oracles() {
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    CounterRng rng(k, 0xF0);
    const std::size_t heads = static_cast<std::size_t>(rng.uniform_int(1, 2));
    const ModelConfig cfg = make_config(static_cast<std::size_t>(rng.uniform_int(1, 4)),
                                        static_cast<std::size_t>(rng.uniform_int(1, 3)), heads,
                                        heads * static_cast<std::size_t>(rng.uniform_int(1, 3)));
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const ModelWeights w = uniform_weights(cfg, 1000 + k, 1.5);
    Matrix x(static_cast<Eigen::Index>(n), 8);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
    const Matrix e = embed(x, w);
    const Matrix h = bilstm_forward(e, n, w, cfg);
    worst = std::max(worst, max_diff(h, oracle::bilstm(oracle::to_mat(e, n), w, cfg)));
    const AttentionOutput a = mha_forward(h, n, w, cfg);
    const oracle::Attention o = oracle::mha(oracle::to_mat(h, n), w, cfg);
    worst = std::max(worst, max_diff(a.attended, o.out));
    for (std::size_t hd = 0; hd < cfg.num_heads; ++hd) worst = std::max(worst, max_diff(a.scores[hd], o.scores[hd]));
  }
  report(3, "forward oracles (20 instances)", worst < 1e-10, fmt("max |diff| %.2e (tol 1e-10)", worst));
}

void padding() {
  const ModelConfig cfg = make_config(8, 2, 2, 8);
  const ModelWeights w = init_weights(cfg, 5);
  std::vector<Page> pages = pages_of(dense_scientific_style(), 900, 3);
  pages.push_back(pages_of(sparse_financial_style(), 900, 1)[0]);
  pages[0].blocks.resize(3);  // force uneven lengths
  const std::vector<Sample> samples = make_samples(pages);
  std::vector<const Sample*> ptrs;
  for (const Sample& s : samples) ptrs.push_back(&s);
  const PaddedBatch batch = make_batch(ptrs);
  const std::vector<ForwardTrace> padded = forward_batch(batch, w, cfg);
  double worst = 0.0;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const ForwardTrace alone = forward(samples[b].features, samples[b].length(), w, cfg);
    const auto n = static_cast<Eigen::Index>(samples[b].length());
    worst = std::max(worst, (padded[b].probs.topRows(n) - alone.probs).cwiseAbs().maxCoeff());
  }
  report(4, "padding invisibility", worst <= 1e-6,
         fmt("max |diff| %.2e over %zu pages padded to %zu (tol 1e-6)", worst, samples.size(), batch.max_length));
}

void oracle_pipeline() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (const auto& style : {dense_scientific_style(), sparse_financial_style()}) {
    std::size_t wrong_count = 0, tables = 0;
    double min_iou = 1.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const Page p = generate_page(style, 500000 + s);
      const DetectionResult r = detect_tables_oracle(p);
      tables += p.tables.size();
      if (r.detections.size() != p.tables.size()) {
        ++wrong_count;
        continue;
      }
      // Best one-to-one pairing; counts agree so every table is paired.
      for (const Box& g : p.tables) {
        double best = 0.0;
        for (const Detection& d : r.detections) best = std::max(best, iou(d.box, g));
        min_iou = std::min(min_iou, best);
      }
      if (match_at_threshold(r.detections, p.tables, 0.9).tp != p.tables.size()) ++wrong_count;
    }
    ok = ok && wrong_count == 0 && min_iou >= 0.9;
    detail += fmt("%s: %zu tables, %zu bad pages, min IoU %.4f; ", style.name.c_str(), tables, wrong_count, min_iou);
  }
  const double secs = seconds_since(t0);
  report(5, "oracle-label pipeline (1000 pages/style)", ok && secs < 60.0, detail + fmt("%.1fs", secs));
}

void matcher_oracle() {
  CounterRng rng(2024, 6);
  const auto box = [&] {
    const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
    return Box{x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40)};
  };
  const std::vector<double> taus = default_thresholds();
  std::size_t disagreements = 0, violations = 0;
  for (int page = 0; page < 500; ++page) {
    std::vector<Box> gts;
    std::vector<Detection> dets;
    const auto ng = rng.uniform_int(0, 2), nd = rng.uniform_int(0, 2);
    for (std::int64_t k = 0; k < ng; ++k) gts.push_back(box());
    for (std::int64_t k = 0; k < nd; ++k) {
      Box b = box();
      if (!gts.empty() && rng.bernoulli(0.6)) {
        const Box& g = gts[static_cast<std::size_t>(rng.uniform_int(0, ng - 1))];
        const double j = rng.uniform(0, 6);
        b = {g.x1 + rng.uniform(-j, j), g.y1 + rng.uniform(-j, j), g.x2 + rng.uniform(-j, j),
             g.y2 + rng.uniform(-j, j)};
      }
      dets.push_back({b, rng.uniform()});
    }
    std::size_t prev = dets.size();
    for (const double t : taus) {
      const MatchCounts c = match_at_threshold(dets, gts, t);
      if (c.tp != oracle::best_assignment(dets, gts, t)) ++disagreements;
      if (c.tp > prev || c.tp + c.fp != dets.size() || c.tp + c.fn != gts.size()) ++violations;
      prev = c.tp;
    }
  }
  report(6, "matcher vs exhaustive oracle (500 pages x 10 thresholds)", disagreements == 0 && violations == 0,
         fmt("%zu disagreements, %zu invariant violations", disagreements, violations));
}

double f1_at_half(std::span<const Page> pages, const ModelWeights& w, const ModelConfig& cfg) {
  std::vector<PageEval> evals;
  for (const Page& p : pages) evals.push_back({p.page_id, detect_tables(p, w, cfg).detections, p.tables});
  const std::vector<double> half{0.5};
  return evaluate_dataset(evals, half).per_threshold[0].prf.f1;
}

void end_to_end() {
  const ModelConfig cfg = make_config(32, 2, 4, 32);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 32;
  tc.base_lr = 0.003;
  tc.seed = 1;
  tc.threads = 1;
  const auto dense = dense_scientific_style();
  const std::vector<Page> train_pages = pages_of(dense, 0, 2000);
  const std::vector<Page> val_pages = pages_of(dense, 100000, 200);
  const std::vector<Page> test_pages = pages_of(dense, 200000, 500);
  const std::vector<Page> sparse_pages = pages_of(sparse_financial_style(), 300000, 500);
  const auto t0 = Clock::now();
  const TrainResult r = train(train_pages, val_pages, cfg, tc, [&](const EpochMetrics& m) {
    if (m.epoch % 5 == 0) {
      info(fmt("epoch %zu train %.4f val %.4f acc %.4f (%.0fs)", m.epoch, m.train_loss, *m.val_loss, *m.val_acc,
               seconds_since(t0)));
    }
  });
  const double train_secs = seconds_since(t0);
  const double dense_f1 = f1_at_half(test_pages, r.weights, cfg);
  const double sparse_f1 = f1_at_half(sparse_pages, r.weights, cfg);
  const double secs = seconds_since(t0);
  info(fmt("best epoch %zu, training %.0fs", r.best_epoch, train_secs));
  report(7, "desk-scale train (32,2,4,32), 30 epochs, 2000 dense pages",
         dense_f1 >= 0.80 && sparse_f1 >= 0.50 && secs <= 1800.0,
         fmt("dense F1@0.5 %.4f (>= 0.80), 0-shot sparse F1@0.5 %.4f (>= 0.50), %.0fs (<= 1800)", dense_f1,
             sparse_f1, secs));
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / "tdelta_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const ModelConfig cfg = make_config(16, 2, 4, 16);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 16;
  tc.base_lr = 0.003;
  tc.seed = 7;
  tc.threads = 1;
  const std::vector<Page> train_pages = pages_of(dense_scientific_style(), 40000, 150);
  const std::vector<Page> val_pages = pages_of(dense_scientific_style(), 41000, 30);
  const TrainResult a = train(train_pages, val_pages, cfg, tc);
  const TrainResult b = train(train_pages, val_pages, cfg, tc);
  const bool logs_equal = training_log_jsonl(a.log) == training_log_jsonl(b.log) &&
                          encode_checkpoint(a.weights, cfg) == encode_checkpoint(b.weights, cfg);

  const std::string ck_path = (dir / "model.ckpt").string();
  save_checkpoint(a.weights, cfg, ck_path);
  const Checkpoint ck = load_checkpoint(ck_path);
  const bool ck_equal = ck.config == cfg && encode_checkpoint(ck.weights, ck.config) == read_file(ck_path) &&
                        fs::file_size(ck_path) == checkpoint_size(cfg);

  const fs::path c1 = dir / "c1", c2 = dir / "c2";
  generate_corpus(sparse_financial_style(), 60, 777, {0.8, 0.1, 0.1}, c1.string());
  regenerate_corpus((c1 / "manifest.json").string(), c2.string());
  bool corpus_equal = true;
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"}) {
    corpus_equal = corpus_equal && read_file((c1 / f).string()) == read_file((c2 / f).string());
  }
  const std::vector<Page> round = read_pages((c1 / "train.jsonl").string());
  corpus_equal = corpus_equal && round == pages_of(sparse_financial_style(), 777, round.size());
  fs::remove_all(dir);

  report(8, "determinism and round-trips", logs_equal && ck_equal && corpus_equal,
         fmt("training logs %s, checkpoint %s, corpus %s", logs_equal ? "identical" : "DIFFER",
             ck_equal ? "round-trips" : "MISMATCH", corpus_equal ? "regenerates byte-identical" : "MISMATCH"));
}

}  // namespace

int main() {
  try {
    params_counts();
    gradient_check();
    forward_oracles();
    padding();
    oracle_pipeline();
    matcher_oracle();
    end_to_end();
    determinism();
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}

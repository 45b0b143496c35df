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
// Command-line front end: gen, train, predict, eval, gradcheck, params.
// Failures print {"error": <kind>, "message": <text>} on stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdelta/datagen.hpp"
#include "tdelta/eval.hpp"
#include "tdelta/gradcheck.hpp"
#include "tdelta/io.hpp"
#include "tdelta/postprocess.hpp"
#include "tdelta/trainer.hpp"

namespace {

using namespace tdelta;

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << "\n";
}

std::array<double, 3> parse_split(const std::string& text) {
  std::array<double, 3> fr{};
  char c1 = 0, c2 = 0, tail = 0;
  if (std::sscanf(text.c_str(), "%lf%c%lf%c%lf%c", &fr[0], &c1, &fr[1], &c2, &fr[2], &tail) != 5 ||
      c1 != ',' || c2 != ',') {
    fail(ErrorKind::kParse, "split must look like train,val,test fractions, got '" + text + "'");
  }
  return fr;
}

StyleProfile resolve_style(const std::string& style) {
  if (style == "dense-scientific" || style == "sparse-financial") return builtin_style(style);
  return style_from_json(parse_json(read_file(style), style));
}

int cmd_gen(const std::string& style, std::size_t count, std::uint64_t seed, const std::string& out,
            const std::string& split) {
  const CorpusManifest m = generate_corpus(resolve_style(style), count, seed, parse_split(split), out);
  std::cout << manifest_to_json(m).dump() << "\n";
  return 0;
}

int cmd_train(const std::string& train_path, const std::string& val_path, const std::string& config_path,
              const std::string& ckpt, const std::string& log_path) {
  const RunConfig rc = load_run_config(config_path);
  const std::vector<Page> train_pages = read_pages(train_path);
  const std::vector<Page> val_pages = val_path.empty() ? std::vector<Page>{} : read_pages(val_path);
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) fail(ErrorKind::kIo, "cannot open '" + log_path + "' for writing");
  const TrainResult res = train(train_pages, val_pages, rc.model, rc.train, [&](const EpochMetrics& m) {
    log << epoch_to_json(m).dump() << "\n";
    log.flush();
  });
  if (!log) fail(ErrorKind::kIo, "write failed on '" + log_path + "'");
  save_checkpoint(res.weights, rc.model, ckpt);
  std::cout << Json{{"checkpoint", ckpt},
                    {"params", param_count(rc.model)},
                    {"epochs", res.log.size()},
                    {"best_epoch", res.best_epoch}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& pages_path, const std::string& out,
                bool attention) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  const std::vector<Page> pages = read_pages(pages_path);
  std::string text;
  std::size_t boxes = 0;
  for (const Page& p : pages) {
    const DetectionResult r = detect_tables(p, ck.weights, ck.config, attention);
    boxes += r.detections.size();
    text += detection_to_json(r).dump();
    text += '\n';
  }
  write_file(out, text);
  std::cout << Json{{"pages", pages.size()}, {"detections", boxes}, {"out", out}}.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& thresholds,
             const std::string& out, bool oracle) {
  const std::vector<double> taus = parse_thresholds(thresholds);
  const std::vector<Page> gt = read_pages(gt_path);
  std::map<std::string, std::vector<Detection>> preds;
  if (!oracle) {
    if (pred_path.empty()) fail(ErrorKind::kParse, "--pred is required unless --oracle-labels is given");
    for (PageEval& p : predictions_from_jsonl(read_file(pred_path), pred_path)) {
      if (!preds.emplace(p.page_id, std::move(p.detections)).second) {
        fail(ErrorKind::kDuplicatePageId, pred_path + ": page id '" + p.page_id + "' appears more than once");
      }
    }
  }
  std::vector<PageEval> pages;
  pages.reserve(gt.size());
  for (const Page& g : gt) {
    PageEval pe{g.page_id, {}, g.tables};
    if (oracle) {
      pe.detections = detect_tables_oracle(g).detections;
    } else if (auto it = preds.find(g.page_id); it != preds.end()) {
      pe.detections = std::move(it->second);
      preds.erase(it);
    }
    pages.push_back(std::move(pe));
  }
  if (!preds.empty()) {
    fail(ErrorKind::kValidation, "prediction for page '" + preds.begin()->first + "' has no ground truth");
  }
  const MetricsReport rep = evaluate_dataset(pages, taus);
  write_file(out, metrics_to_json(rep).dump(2) + "\n");
  std::cout << format_metrics_table(rep);
  return 0;
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed, double tol, double eps) {
  const RunConfig rc = load_run_config(config_path);
  const GradCheckReport r = grad_check(rc.model, seed, eps, tol);
  Json groups = Json::array();
  for (const auto& e : r.entries) {
    groups.push_back({{"name", e.name}, {"kind", e.kind}, {"checked", e.checked},
                      {"max_rel_error", e.max_rel_error}, {"max_abs_error", e.max_abs_error},
                      {"pass", e.pass}});
  }
  std::cout << Json{{"pass", r.pass}, {"tolerance", r.tolerance}, {"eps", eps}, {"seed", seed},
                    {"max_rel_error", r.max_rel_error}, {"groups", std::move(groups)}}
                   .dump(2)
            << "\n";
  if (!r.pass) {
    char msg[128];
    std::snprintf(msg, sizeof msg, "max relative error %.3e exceeds tolerance %.1e", r.max_rel_error, tol);
    fail(ErrorKind::kGradCheckFailed, msg);
  }
  return 0;
}

int cmd_params(const std::string& config_path) {
  std::cout << param_count(load_run_config(config_path).model) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table detection from text-block geometry"};
  app.require_subcommand(1);

  std::string style, out_dir, split = "0.8,0.1,0.1";
  std::size_t count = 0;
  std::uint64_t seed = 0;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen->add_option("--style", style, "dense-scientific, sparse-financial or a profile JSON file")->required();
  gen->add_option("--count", count, "Number of pages")->required();
  gen->add_option("--seed", seed, "Base seed")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--split", split, "train,val,test fractions");

  std::string train_path, val_path, config_path, ckpt, log_path;
  auto* tr = app.add_subcommand("train", "Train a block classifier");
  tr->add_option("--train", train_path, "Training pages (JSONL)")->required();
  tr->add_option("--val", val_path, "Validation pages (JSONL)");
  tr->add_option("--config", config_path, "Config JSON")->required();
  tr->add_option("--out", ckpt, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Per-epoch metrics (JSONL)")->required();

  std::string pages_path, pred_out;
  bool attention = false;
  auto* pr = app.add_subcommand("predict", "Detect tables with a checkpoint");
  pr->add_option("--ckpt", ckpt, "Checkpoint")->required();
  pr->add_option("--pages", pages_path, "Pages (JSONL)")->required();
  pr->add_option("--out", pred_out, "Detections (JSONL)")->required();
  pr->add_flag("--dump-attention", attention, "Include per-head attention maps");

  std::string pred_path, gt_path, thresholds = "0.5:0.05:0.95", metrics_out;
  bool oracle = false;
  auto* ev = app.add_subcommand("eval", "Score detections against ground truth");
  ev->add_option("--pred", pred_path, "Detections (JSONL)");
  ev->add_option("--gt", gt_path, "Ground-truth pages (JSONL)")->required();
  ev->add_option("--thresholds", thresholds, "IoU thresholds start:step:stop");
  ev->add_option("--out", metrics_out, "Metrics JSON")->required();
  ev->add_flag("--oracle-labels", oracle, "Detect from gold block labels instead of --pred");

  double tol = 1e-4, eps = 1e-5;
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gc->add_option("--config", config_path, "Config JSON")->required();
  gc->add_option("--seed", seed, "Seed for the check page and weights");
  gc->add_option("--tol", tol, "Relative-error tolerance");
  gc->add_option("--eps", eps, "Finite-difference step");

  auto* pa = app.add_subcommand("params", "Print the exact parameter count");
  pa->add_option("--config", config_path, "Config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen(style, count, seed, out_dir, split);
    if (*tr) return cmd_train(train_path, val_path, config_path, ckpt, log_path);
    if (*pr) return cmd_predict(ckpt, pages_path, pred_out, attention);
    if (*ev) return cmd_eval(pred_path, gt_path, thresholds, metrics_out, oracle);
    if (*gc) return cmd_gradcheck(config_path, seed, tol, eps);
    if (*pa) return cmd_params(config_path);
  } catch (const Error& e) {
    print_error(std::string(to_string(e.kind())), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}

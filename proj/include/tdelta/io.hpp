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

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tdelta/error.hpp"
#include "tdelta/eval.hpp"
#include "tdelta/geometry.hpp"
#include "tdelta/model.hpp"
#include "tdelta/optim.hpp"
#include "tdelta/postprocess.hpp"
#include "tdelta/trainer.hpp"

namespace tdelta {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::kIo, "read failed on '" + path + "'");
  return data;
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) fail(ErrorKind::kIo, "write failed on '" + path + "'");
}

inline Json parse_json(std::string_view text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    fail(ErrorKind::kParse, where + ": " + e.what());
  }
}

/// Calls `fn(line_number, text)` for every non-blank line.
template <typename Fn>
void for_each_line(const std::string& data, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < data.size()) {
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    ++line_no;
    std::string_view line(data.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line_no, line);
    pos = end + 1;
  }
}

// ---------------------------------------------------------------------------
// Pages

namespace detail {

inline double number_field(const Json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorKind::kParse, std::string("missing field '") + key + "'");
  if (!it->is_number()) fail(ErrorKind::kParse, std::string("field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) fail(ErrorKind::kValidation, std::string("field '") + key + "' is not finite");
  return v;
}

inline Box box_from_array(const Json& a) {
  if (!a.is_array() || a.size() != 4) fail(ErrorKind::kParse, "box must be an array [x1, y1, x2, y2]");
  double v[4];
  for (std::size_t k = 0; k < 4; ++k) {
    if (!a[k].is_number()) fail(ErrorKind::kParse, "box coordinates must be numbers");
    v[k] = a[k].get<double>();
    if (!std::isfinite(v[k])) fail(ErrorKind::kValidation, "box coordinate is not finite");
  }
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace detail

inline Json box_to_json(const Box& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

inline Json page_to_json(const Page& page) {
  Json blocks = Json::array();
  for (const TextBlock& b : page.blocks) {
    Json jb = {{"x1", b.box.x1}, {"y1", b.box.y1}, {"x2", b.box.x2}, {"y2", b.box.y2}};
    if (b.label) jb["label"] = std::string(to_string(*b.label));
    blocks.push_back(std::move(jb));
  }
  Json tables = Json::array();
  for (const Box& t : page.tables) tables.push_back(box_to_json(t));
  return {{"page_id", page.page_id}, {"width", page.width},   {"height", page.height},
          {"blocks", std::move(blocks)}, {"tables", std::move(tables)}};
}

/// Parses and validates one dataset record.
inline Page page_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorKind::kParse, "record must be a JSON object");
  Page p;
  const auto id = j.find("page_id");
  if (id == j.end() || !id->is_string()) fail(ErrorKind::kParse, "field 'page_id' must be a string");
  p.page_id = id->get<std::string>();
  p.width = detail::number_field(j, "width");
  p.height = detail::number_field(j, "height");
  const auto blocks = j.find("blocks");
  if (blocks == j.end() || !blocks->is_array()) fail(ErrorKind::kParse, "field 'blocks' must be an array");
  for (const Json& jb : *blocks) {
    if (!jb.is_object()) fail(ErrorKind::kParse, "each block must be an object");
    TextBlock b;
    b.box = {detail::number_field(jb, "x1"), detail::number_field(jb, "y1"),
             detail::number_field(jb, "x2"), detail::number_field(jb, "y2")};
    if (const auto lab = jb.find("label"); lab != jb.end() && !lab->is_null()) {
      if (!lab->is_string()) fail(ErrorKind::kInvalidLabel, "block label must be a string");
      b.label = parse_label(lab->get<std::string>());
    }
    p.blocks.push_back(b);
  }
  if (const auto tables = j.find("tables"); tables != j.end()) {
    if (!tables->is_array()) fail(ErrorKind::kParse, "field 'tables' must be an array");
    for (const Json& t : *tables) p.tables.push_back(detail::box_from_array(t));
  }
  validate_page(p);
  return p;
}

inline std::string pages_to_jsonl(std::span<const Page> pages) {
  std::string out;
  for (const Page& p : pages) {
    out += page_to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Page> pages_from_jsonl(const std::string& data, const std::string& name) {
  std::vector<Page> pages;
  for_each_line(data, [&](std::size_t line_no, std::string_view line) {
    const std::string where = name + ":" + std::to_string(line_no);
    try {
      pages.push_back(page_from_json(parse_json(line, where)));
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with(where)) throw;
      fail(e.kind(), where + ": " + e.what());
    }
  });
  return pages;
}

inline void write_pages(std::span<const Page> pages, const std::string& path) {
  write_file(path, pages_to_jsonl(pages));
}

inline std::vector<Page> read_pages(const std::string& path) {
  return pages_from_jsonl(read_file(path), path);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// "TDLT", u32 version, seven u32 config fields, every tensor as LE float32
// in canonical order, then CRC-32 of all preceding bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 4 + 4 + 7 * 4;

inline std::size_t checkpoint_size(const ModelConfig& cfg) {
  return kCheckpointHeaderBytes + 4 * param_count(cfg) + 4;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(k)]))
         << (8 * k);
  }
  return v;
}

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::array<std::size_t, 7> config_fields(const ModelConfig& c) {
  return {c.hidden_size, c.num_layers, c.num_heads, c.attention_out,
          c.embed_dim,   c.input_dim,  c.num_classes};
}

}  // namespace detail

inline std::string encode_checkpoint(const ModelWeights& w, const ModelConfig& cfg) {
  cfg.validate();
  std::string out;
  out.reserve(checkpoint_size(cfg));
  out += "TDLT";
  detail::put_u32(out, kCheckpointVersion);
  for (const std::size_t f : detail::config_fields(cfg)) detail::put_u32(out, static_cast<std::uint32_t>(f));
  for_each_tensor(w, cfg, [&](const TensorId&, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.data()[i])));
    }
  });
  detail::put_u32(out, detail::crc32_of(out));
  return out;
}

struct Checkpoint {
  ModelConfig config;
  ModelWeights weights;
};

inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& name = "checkpoint") {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "TDLT") {
    fail(ErrorKind::kBadMagic, name + ": missing TDLT magic");
  }
  if (bytes.size() < kCheckpointHeaderBytes) {
    fail(ErrorKind::kLengthMismatch, name + ": truncated header (" + std::to_string(bytes.size()) + " bytes)");
  }
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kVersionMismatch, name + ": format version " + std::to_string(version) +
                                          ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  std::size_t at = 8;
  const auto next = [&] { const std::uint32_t v = detail::get_u32(bytes, at); at += 4; return std::size_t{v}; };
  ck.config.hidden_size = next();
  ck.config.num_layers = next();
  ck.config.num_heads = next();
  ck.config.attention_out = next();
  ck.config.embed_dim = next();
  ck.config.input_dim = next();
  ck.config.num_classes = next();
  ck.config.validate();
  const std::size_t expect = checkpoint_size(ck.config);
  if (bytes.size() != expect) {
    fail(ErrorKind::kLengthMismatch, name + ": " + std::to_string(bytes.size()) + " bytes, config implies " +
                                         std::to_string(expect));
  }
  const std::uint32_t stored = detail::get_u32(bytes, expect - 4);
  if (detail::crc32_of(bytes.substr(0, expect - 4)) != stored) {
    fail(ErrorKind::kCrcMismatch, name + ": CRC-32 does not match contents");
  }
  ck.weights = zero_weights(ck.config);
  for_each_tensor(ck.weights, ck.config, [&](const TensorId&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes, at)));
      at += 4;
    }
  });
  return ck;
}

inline void save_checkpoint(const ModelWeights& w, const ModelConfig& cfg, const std::string& path) {
  write_file(path, encode_checkpoint(w, cfg));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path), path);
}

// ---------------------------------------------------------------------------
// Run configuration: one flat object holding ModelConfig and TrainConfig
// fields. Missing fields keep their defaults; embed_dim defaults to
// hidden_size. Unknown fields are rejected.

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

namespace detail {

inline std::size_t size_field(const Json& v, const std::string& key) {
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
    fail(ErrorKind::kInvalidConfig, "field '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline double real_field(const Json& v, const std::string& key) {
  if (!v.is_number()) fail(ErrorKind::kInvalidConfig, "field '" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorKind::kInvalidConfig, "config must be a JSON object");
  RunConfig rc;
  bool embed_given = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "hidden_size") rc.model.hidden_size = detail::size_field(v, key);
    else if (key == "num_layers") rc.model.num_layers = detail::size_field(v, key);
    else if (key == "num_heads") rc.model.num_heads = detail::size_field(v, key);
    else if (key == "attention_out") rc.model.attention_out = detail::size_field(v, key);
    else if (key == "embed_dim") { rc.model.embed_dim = detail::size_field(v, key); embed_given = true; }
    else if (key == "input_dim") rc.model.input_dim = detail::size_field(v, key);
    else if (key == "num_classes") rc.model.num_classes = detail::size_field(v, key);
    else if (key == "epochs") rc.train.epochs = detail::size_field(v, key);
    else if (key == "batch_size") rc.train.batch_size = detail::size_field(v, key);
    else if (key == "base_lr") rc.train.base_lr = detail::real_field(v, key);
    else if (key == "warmup_fraction") rc.train.warmup_fraction = detail::real_field(v, key);
    else if (key == "beta1") rc.train.beta1 = detail::real_field(v, key);
    else if (key == "beta2") rc.train.beta2 = detail::real_field(v, key);
    else if (key == "epsilon") rc.train.epsilon = detail::real_field(v, key);
    else if (key == "seed") rc.train.seed = detail::size_field(v, key);
    else if (key == "threads") rc.train.threads = detail::size_field(v, key);
    else fail(ErrorKind::kInvalidConfig, "unknown config field '" + key + "'");
  }
  if (!embed_given) rc.model.embed_dim = rc.model.hidden_size;
  rc.model.validate();
  rc.train.validate();
  return rc;
}

inline Json run_config_to_json(const RunConfig& rc) {
  const ModelConfig& m = rc.model;
  const TrainConfig& t = rc.train;
  return {{"hidden_size", m.hidden_size}, {"num_layers", m.num_layers},
          {"num_heads", m.num_heads},     {"attention_out", m.attention_out},
          {"embed_dim", m.embed_dim},     {"input_dim", m.input_dim},
          {"num_classes", m.num_classes}, {"epochs", t.epochs},
          {"batch_size", t.batch_size},   {"base_lr", t.base_lr},
          {"warmup_fraction", t.warmup_fraction}, {"beta1", t.beta1},
          {"beta2", t.beta2},             {"epsilon", t.epsilon},
          {"seed", t.seed},               {"threads", t.threads}};
}

inline RunConfig load_run_config(const std::string& path) {
  try {
    return run_config_from_json(parse_json(read_file(path), path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo || std::string_view(e.what()).starts_with(path)) throw;
    fail(e.kind(), path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Detections, metrics, training log

inline Json detection_to_json(const DetectionResult& r) {
  Json dets = Json::array();
  for (const Detection& d : r.detections) {
    dets.push_back({{"box", box_to_json(d.box)}, {"confidence", d.confidence}});
  }
  Json labels = Json::array();
  for (const BlockLabel l : r.block_labels) labels.push_back(std::string(to_string(l)));
  Json probs = Json::array();
  for (const ClassProbs& p : r.block_probs) probs.push_back(Json(std::vector<double>(p.begin(), p.end())));
  Json j = {{"page_id", r.page_id}, {"detections", std::move(dets)},
            {"block_labels", std::move(labels)}, {"block_probs", std::move(probs)}};
  if (r.attention) {
    Json heads = Json::array();
    for (const Matrix& a : *r.attention) {
      Json rows = Json::array();
      for (Eigen::Index i = 0; i < a.rows(); ++i) {
        rows.push_back(Json(std::vector<double>(a.row(i).data(), a.row(i).data() + a.cols())));
      }
      heads.push_back(std::move(rows));
    }
    j["attention"] = std::move(heads);
  }
  return j;
}

/// Reads the fields evaluation needs from one prediction record.
inline PageEval page_eval_from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorKind::kParse, "prediction record must be a JSON object");
  PageEval p;
  const auto id = j.find("page_id");
  if (id == j.end() || !id->is_string()) fail(ErrorKind::kParse, "field 'page_id' must be a string");
  p.page_id = id->get<std::string>();
  const auto dets = j.find("detections");
  if (dets == j.end() || !dets->is_array()) fail(ErrorKind::kParse, "field 'detections' must be an array");
  for (const Json& d : *dets) {
    if (!d.is_object() || !d.contains("box")) fail(ErrorKind::kParse, "detection needs a 'box'");
    Detection det;
    det.box = detail::box_from_array(d["box"]);
    if (!det.box.valid()) fail(ErrorKind::kValidation, "detection box must satisfy x1 < x2 and y1 < y2");
    det.confidence = detail::number_field(d, "confidence");
    p.detections.push_back(det);
  }
  return p;
}

inline std::vector<PageEval> predictions_from_jsonl(const std::string& data, const std::string& name) {
  std::vector<PageEval> out;
  for_each_line(data, [&](std::size_t line_no, std::string_view line) {
    const std::string where = name + ":" + std::to_string(line_no);
    try {
      out.push_back(page_eval_from_json(parse_json(line, where)));
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with(where)) throw;
      fail(e.kind(), where + ": " + e.what());
    }
  });
  return out;
}

inline Json prf_to_json(const Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline Json metrics_to_json(const MetricsReport& rep) {
  Json rows = Json::array();
  for (const auto& t : rep.per_threshold) {
    Json r = prf_to_json(t.prf);
    r["threshold"] = t.threshold;
    r["tp"] = t.counts.tp;
    r["fp"] = t.counts.fp;
    r["fn"] = t.counts.fn;
    rows.push_back(std::move(r));
  }
  return {{"pages", rep.pages}, {"per_threshold", std::move(rows)}, {"average", prf_to_json(rep.average)}};
}

inline Json epoch_to_json(const EpochMetrics& m) {
  Json j = {{"epoch", m.epoch}, {"train_loss", m.train_loss}};
  j["val_loss"] = m.val_loss ? Json(*m.val_loss) : Json(nullptr);
  j["val_acc"] = m.val_acc ? Json(*m.val_acc) : Json(nullptr);
  j["lr"] = m.lr;
  return j;
}

inline std::string training_log_jsonl(std::span<const EpochMetrics> log) {
  std::string out;
  for (const auto& m : log) {
    out += epoch_to_json(m).dump();
    out += '\n';
  }
  return out;
}

}  // namespace tdelta

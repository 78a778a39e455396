// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fedproj/bench.hpp"
#include "fedproj/datasets.hpp"
#include "fedproj/error.hpp"

namespace fedproj::bench {

namespace {

using json = nlohmann::json;

// Maps byte offsets and keys back to origin:line:column.
class Locator {
 public:
  Locator(const std::string& text, std::string origin)
      : text_(text), origin_(std::move(origin)) {}

  std::string at_offset(std::size_t offset) const {
    offset = std::min(offset, text_.size());
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return origin_ + ":" + std::to_string(line) + ":" + std::to_string(col);
  }

  // First occurrence of the quoted key; the origin alone when not found.
  std::string at_key(const std::string& key) const {
    const auto pos = text_.find("\"" + key + "\"");
    if (pos == std::string::npos) return origin_;
    return at_offset(pos);
  }

  const std::string& origin() const { return origin_; }

 private:
  const std::string& text_;
  std::string origin_;
};

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kConfig, where + ": " + what);
}

// Reads the members of one JSON object, rejecting anything left unread.
class Fields {
 public:
  Fields(const json& obj, std::string path, const Locator& loc)
      : obj_(obj), path_(std::move(path)), loc_(loc) {}

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void size(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) bad(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) bad(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void seed(const std::string& key, RandomSeed& out) { u64(key, out.value); }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) bad(key, "a number");
      out = v->get<double>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) bad(key, "true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) bad(key, "a string");
      out = v->get<std::string>();
    }
  }

  // Parses a string key through `parse`, reporting its location on failure.
  template <typename T, typename Parse>
  void choice(const std::string& key, T& out, Parse parse) {
    std::string name;
    string(key, name);
    if (name.empty()) return;
    try {
      out = parse(name);
    } catch (const Error& e) {
      fail(loc_.at_key(key), e.what());
    }
  }

  const json* object(const std::string& key) {
    const json* v = find(key);
    if (v != nullptr && !v->is_object()) bad(key, "an object");
    return v;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) fail(loc_.at_key(key), "unknown key '" + qualified(key) + "'");
    }
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& expected) const {
    fail(loc_.at_key(key), "'" + qualified(key) + "' must be " + expected);
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& obj_;
  std::string path_;
  const Locator& loc_;
  std::set<std::string> seen_;
};

void read_local(Fields f, LocalConfig& local) {
  f.size("iters", local.iters);
  f.number("lr", local.lr);
  f.size("batch_size", local.batch_size);
  f.size("accum", local.accum);
  f.choice("optimizer", local.optimizer, parse_optimizer);
  f.number("momentum", local.momentum);
  f.number("beta1", local.beta1);
  f.number("beta2", local.beta2);
  f.number("adam_eps", local.adam_eps);
  f.finish();
}

void read_skew(Fields f, DataSkew& skew) {
  f.choice("kind", skew.kind, [](const std::string& name) {
    if (name == "iid") return DataSkew::Kind::kIid;
    if (name == "label-skew") return DataSkew::Kind::kLabelSkew;
    throw Error(ErrorCode::kConfig, "unknown skew kind '" + name + "'");
  });
  f.number("alpha", skew.alpha);
  f.finish();
}

void read_model(Fields f, ModelSpec& model) {
  f.choice("kind", model.kind, parse_model_kind);
  f.size("input_dim", model.input_dim);
  f.size("hidden_dim", model.hidden_dim);
  f.size("output_dim", model.output_dim);
  f.seed("init_seed", model.init_seed);
  f.finish();
}

void read_data(Fields f, DataSource& data) {
  f.string("kind", data.kind);
  f.string("path", data.path);
  f.string("eval_path", data.eval_path);
  f.size("examples", data.examples);
  f.size("eval_examples", data.eval_examples);
  f.number("noise", data.noise);
  f.size("classes", data.classes);
  f.number("separation", data.separation);
  f.u64("seed", data.seed);
  f.boolean("homogeneous", data.homogeneous);
  f.finish();
}

void read_output(Fields f, OutputPaths& out) {
  f.string("records_csv", out.records_csv);
  f.string("summary_json", out.summary_json);
  f.finish();
}

void validate(const ExperimentConfig& cfg, const std::string& origin) {
  try {
    cfg.fed.validate();
    cfg.model.validate();
  } catch (const Error& e) {
    fail(origin, e.what());
  }
  const auto& d = cfg.data;
  if (d.kind == "synthetic-linear") {
    if (cfg.model.kind != ModelKind::kLinearRegression) {
      fail(origin, "synthetic-linear data needs a linear-regression model");
    }
  } else if (d.kind == "synthetic-blobs") {
    if (!cfg.model.is_classifier()) fail(origin, "synthetic-blobs data needs a classifier");
    if (d.classes != cfg.model.output_dim) {
      fail(origin, "data.classes must equal model.output_dim");
    }
  } else if (d.kind == "file") {
    if (d.path.empty()) fail(origin, "data.path is required for file data");
  } else {
    fail(origin, "unknown data kind '" + d.kind + "'");
  }
  if (d.kind != "file" && d.examples < cfg.fed.num_clients && !d.homogeneous) {
    fail(origin, "data.examples must be >= num_clients");
  }
  if (cfg.transport != "in-process" && cfg.transport != "socket") {
    fail(origin, "transport must be 'in-process' or 'socket'");
  }
  if (cfg.transport == "socket" && cfg.workers == 0) fail(origin, "workers must be >= 1");
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::kConfig, what + " '" + path + "' does not exist");
  }
}

void require_parent(const std::string& path, const std::string& what) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw Error(ErrorCode::kConfig, what + " directory '" + parent.string() + "' does not exist");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& origin) {
  const Locator loc(text, origin);
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t offset = e.byte == 0 ? 0 : e.byte - 1;
    std::string what = e.what();
    const auto colon = what.rfind(": ");
    if (colon != std::string::npos) what = what.substr(colon + 2);
    fail(loc.at_offset(offset), "parse error: " + what);
  }
  if (!root.is_object()) fail(loc.at_offset(0), "config must be a JSON object");

  ExperimentConfig cfg;
  Fields f(root, "", loc);
  f.choice("method", cfg.fed.method, parse_method);
  f.size("num_clients", cfg.fed.num_clients);
  f.size("rounds", cfg.fed.rounds);
  f.size("total_bases", cfg.fed.total_bases);
  f.number("server_lr", cfg.fed.server_lr);
  f.number("participation", cfg.fed.participation);
  f.size("max_block_dim", cfg.fed.max_block_dim);
  f.choice("allocation", cfg.fed.allocation, parse_allocation);
  f.choice("seed_policy", cfg.fed.seed_policy, parse_seed_policy);
  f.seed("root_seed", cfg.fed.root_seed);
  f.boolean("exact_projection", cfg.fed.exact_projection);
  f.number("zo_epsilon", cfg.fed.zo_epsilon);
  f.size("threads", cfg.fed.threads);
  f.boolean("timing", cfg.fed.timing);
  f.string("transport", cfg.transport);
  f.size("workers", cfg.workers);
  if (const json* v = f.object("local")) read_local(Fields(*v, "local", loc), cfg.fed.local);
  if (const json* v = f.object("skew")) read_skew(Fields(*v, "skew", loc), cfg.fed.skew);
  if (const json* v = f.object("model")) read_model(Fields(*v, "model", loc), cfg.model);
  if (const json* v = f.object("data")) read_data(Fields(*v, "data", loc), cfg.data);
  if (const json* v = f.object("output")) read_output(Fields(*v, "output", loc), cfg.output);
  f.finish();
  validate(cfg, origin);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentConfig cfg = parse_experiment_config(text.str(), path);

  if (const char* env = std::getenv("FEDPROJ_RECORDS_CSV")) cfg.output.records_csv = env;
  if (const char* env = std::getenv("FEDPROJ_SUMMARY_JSON")) cfg.output.summary_json = env;

  // Relative data paths resolve against the config file's directory.
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
  };
  resolve(cfg.data.path);
  resolve(cfg.data.eval_path);
  if (cfg.data.kind == "file") require_file(cfg.data.path, "data.path");
  if (!cfg.data.eval_path.empty()) require_file(cfg.data.eval_path, "data.eval_path");
  if (!cfg.output.records_csv.empty()) require_parent(cfg.output.records_csv, "records_csv");
  if (!cfg.output.summary_json.empty()) require_parent(cfg.output.summary_json, "summary_json");
  return cfg;
}

ExperimentData build_data(const ExperimentConfig& cfg) {
  const auto& src = cfg.data;
  Dataset train;
  Dataset eval;
  if (src.kind == "file") {
    train = load_dataset(src.path);
    if (!src.eval_path.empty()) eval = load_dataset(src.eval_path);
  } else {
    const std::size_t total = src.examples + src.eval_examples;
    Dataset all = src.kind == "synthetic-linear"
                      ? make_linear_regression(total, cfg.model.input_dim, src.noise,
                                               RandomSeed{src.seed})
                      : make_blobs(total, cfg.model.input_dim, src.classes, src.separation,
                                   RandomSeed{src.seed});
    eval.assign(all.begin() + static_cast<std::ptrdiff_t>(src.examples), all.end());
    all.resize(src.examples);
    train = std::move(all);
  }
  for (const Dataset* set : {&train, &eval}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      if ((*set)[i].features.size() != cfg.model.input_dim) {
        throw Error(ErrorCode::kConfig,
                    "example " + std::to_string(i) + " has " +
                        std::to_string((*set)[i].features.size()) +
                        " features, model.input_dim is " +
                        std::to_string(cfg.model.input_dim));
      }
    }
  }

  ExperimentData data;
  if (src.homogeneous) {
    for (std::size_t c = 0; c < cfg.fed.num_clients; ++c) {
      data.clients.push_back({static_cast<std::uint32_t>(c), train, "homogeneous"});
    }
  } else {
    data.clients = partition_data(train, cfg.fed.num_clients, cfg.fed.skew, cfg.fed.root_seed);
  }
  data.eval = std::move(eval);
  return data;
}

}  // namespace fedproj::bench

// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "json.hpp"
#include "mpolstm/error.hpp"
#include "mpolstm/io.hpp"

namespace mpolstm {

namespace {

using nlohmann::json;

std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t p = 1;
  for (auto x : v) p *= x;
  return p;
}

// Rejects keys outside `allowed` so typos fail loudly instead of silently
// falling back to defaults.
void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

double read_snr(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!j.is_number()) throw ConfigError("task.snr_db must be a number or \"inf\"");
  return j.get<double>();
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.nx == 0 || c.nh == 0) throw ConfigError("nx and nh must be positive");
  if (c.x_factors.empty() || c.h_factors.empty()) throw ConfigError("factor lists must not be empty");
  if (c.x_factors.size() != c.h_factors.size()) {
    throw ConfigError("x_factors and h_factors must have the same length");
  }
  for (auto f : c.x_factors)
    if (f == 0) throw ConfigError("factors must be positive");
  for (auto f : c.h_factors)
    if (f == 0) throw ConfigError("factors must be positive");
  if (product(c.x_factors) != c.nx) {
    throw ConfigError("product of x_factors (" + std::to_string(product(c.x_factors)) + ") != nx (" +
                      std::to_string(c.nx) + ")");
  }
  if (product(c.h_factors) != c.nh) {
    throw ConfigError("product of h_factors (" + std::to_string(product(c.h_factors)) + ") != nh (" +
                      std::to_string(c.nh) + ")");
  }
  if (c.task.input_dim != c.nx) throw ConfigError("task input_dim must equal nx");
  if (c.train.hidden_dim != c.nh) throw ConfigError("hidden_dim must equal nh");
  if (c.train.x_factors != c.x_factors || c.train.h_factors != c.h_factors) {
    throw ConfigError("training factor lists disagree with the experiment's");
  }
  if (c.rates.empty()) throw ConfigError("rates must not be empty");
  for (double r : c.rates)
    if (!(r >= 1.0) || !std::isfinite(r)) throw ConfigError("rates must be finite and >= 1");
  if (c.methods.empty()) throw ConfigError("methods must not be empty");
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.task.seq_len == 0) throw ConfigError("task.seq_len must be positive");
  if (c.task.train_size == 0 || c.task.test_size == 0) throw ConfigError("train_size and test_size must be positive");
  if (!(c.task.noise_std >= 0.0)) throw ConfigError("task.noise_std must be >= 0");
  if (std::isnan(c.task.snr_db)) throw ConfigError("task.snr_db must not be NaN");
  const AdamConfig& a = c.train.adam;
  if (!(a.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (!(a.beta1 >= 0.0 && a.beta1 < 1.0) || !(a.beta2 >= 0.0 && a.beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(a.epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be positive");
  if (!(c.train.clip_norm > 0.0)) throw ConfigError("optimizer.clip_norm must be positive");
  if (c.train.batch_size == 0) throw ConfigError("optimizer.batch_size must be positive");
  if (!(c.train.bond_search.slack >= 0.0 && c.train.bond_search.slack < 1.0)) {
    throw ConfigError("bond_search.slack must lie in [0, 1)");
  }
  if (c.jobs == 0) throw ConfigError("jobs must be positive");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
  check_keys(doc,
             {"nx", "nh", "x_factors", "h_factors", "rates", "methods", "task", "seeds", "optimizer", "bond_search",
              "jobs", "record_wall_time"},
             "config");

  ExperimentConfig c;
  read(doc, "nx", c.nx);
  read(doc, "nh", c.nh);
  read(doc, "x_factors", c.x_factors);
  read(doc, "h_factors", c.h_factors);
  read(doc, "rates", c.rates);
  read(doc, "seeds", c.seeds);
  read(doc, "jobs", c.jobs);
  read(doc, "record_wall_time", c.record_wall_time);
  if (doc.contains("methods")) {
    std::vector<std::string> names;
    read(doc, "methods", names);
    c.methods.clear();
    for (const auto& n : names) c.methods.push_back(method_from_string(n));
  }
  if (doc.contains("task")) {
    const json& t = doc["task"];
    check_keys(t, {"kind", "seq_len", "seed", "train_size", "test_size", "noise_std", "snr_db"}, "task");
    std::string kind = to_string(c.task.kind);
    read(t, "kind", kind);
    c.task.kind = task_kind_from_string(kind);
    read(t, "seq_len", c.task.seq_len);
    read(t, "seed", c.task.seed);
    read(t, "train_size", c.task.train_size);
    read(t, "test_size", c.task.test_size);
    read(t, "noise_std", c.task.noise_std);
    if (t.contains("snr_db")) c.task.snr_db = read_snr(t["snr_db"]);
  }
  if (doc.contains("optimizer")) {
    const json& o = doc["optimizer"];
    check_keys(o, {"lr", "beta1", "beta2", "epsilon", "clip_norm", "batch_size", "epochs"}, "optimizer");
    read(o, "lr", c.train.adam.lr);
    read(o, "beta1", c.train.adam.beta1);
    read(o, "beta2", c.train.adam.beta2);
    read(o, "epsilon", c.train.adam.epsilon);
    read(o, "clip_norm", c.train.clip_norm);
    read(o, "batch_size", c.train.batch_size);
    read(o, "epochs", c.train.epochs);
  }
  if (doc.contains("bond_search")) {
    const json& b = doc["bond_search"];
    check_keys(b, {"slack", "max_spread"}, "bond_search");
    read(b, "slack", c.train.bond_search.slack);
    read(b, "max_spread", c.train.bond_search.max_spread);
  }
  c.task.input_dim = c.nx;
  c.train.hidden_dim = c.nh;
  c.train.x_factors = c.x_factors;
  c.train.h_factors = c.h_factors;
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_config(std::string(bytes.begin(), bytes.end()));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json doc;
  doc["nx"] = c.nx;
  doc["nh"] = c.nh;
  doc["x_factors"] = c.x_factors;
  doc["h_factors"] = c.h_factors;
  doc["rates"] = c.rates;
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.push_back(to_string(m));
  doc["methods"] = methods;
  nlohmann::ordered_json task;
  task["kind"] = to_string(c.task.kind);
  task["seq_len"] = c.task.seq_len;
  task["seed"] = c.task.seed;
  task["train_size"] = c.task.train_size;
  task["test_size"] = c.task.test_size;
  task["noise_std"] = c.task.noise_std;
  if (std::isinf(c.task.snr_db) && c.task.snr_db > 0) {
    task["snr_db"] = "inf";
  } else {
    task["snr_db"] = c.task.snr_db;
  }
  doc["task"] = task;
  doc["seeds"] = c.seeds;
  nlohmann::ordered_json opt;
  opt["lr"] = c.train.adam.lr;
  opt["beta1"] = c.train.adam.beta1;
  opt["beta2"] = c.train.adam.beta2;
  opt["epsilon"] = c.train.adam.epsilon;
  opt["clip_norm"] = c.train.clip_norm;
  opt["batch_size"] = c.train.batch_size;
  opt["epochs"] = c.train.epochs;
  doc["optimizer"] = opt;
  doc["bond_search"] = {{"slack", c.train.bond_search.slack}, {"max_spread", c.train.bond_search.max_spread}};
  doc["jobs"] = c.jobs;
  doc["record_wall_time"] = c.record_wall_time;
  return doc.dump(2) + "\n";
}

}  // namespace mpolstm

// Copyright 2026 The safe-dshb Authors
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
//
// Experiment configuration (INI), sweep expansion, dataset preparation and the
// on-disk outputs of a run. See docs/formats.md for the schemas.
#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "safedshb/aggregation.hpp"
#include "safedshb/attacks.hpp"
#include "safedshb/data.hpp"
#include "safedshb/engine.hpp"
#include "safedshb/privacy.hpp"

namespace safedshb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyDef {
  const char* key;
  const char* default_value;
};

// Every accepted key with its default. Defaults follow the Phishing setup.
inline const std::vector<KeyDef>& config_keys() {
  static const std::vector<KeyDef> keys = {
      {"run.n", "7"},
      {"run.f", "3"},
      {"run.T", "400"},
      {"run.seeds", "1-5"},
      {"run.metrics_every", "10"},
      {"data.source", "libsvm"},
      {"data.path", ""},
      {"data.bias", "true"},
      {"data.test_fraction", "0.2"},
      {"data.split_seed", "1"},
      {"data.synthetic_count", "2000"},
      {"data.synthetic_dim", "20"},
      {"data.synthetic_seed", "7"},
      {"data.case3_G", "1"},
      {"data.case3_d", "2"},
      {"data.case3_m", "1"},
      {"model.loss", "logistic"},
      {"model.l2_lambda", "1e-4"},
      {"aggregator.rule", "smea"},
      {"aggregator.filter_sigma0_sq", "0"},
      {"aggregator.filter_eta", "0"},
      {"attack.kind", "alie"},
      {"attack.message", "momentum"},
      {"attack.tau_min", "0.01"},
      {"attack.tau_max", "10"},
      {"attack.tau_points", "50"},
      {"schedule.kind", "constant"},
      {"schedule.gamma", "1"},
      {"schedule.beta", "0.99"},
      {"schedule.mu", "0"},
      {"schedule.L", "0"},
      {"schedule.sigma_sq", "0"},
      {"schedule.L0", "0"},
      {"privacy.clip", "1"},
      {"privacy.batch", "25"},
      {"privacy.sigma_nm", "1"},
      {"privacy.sigma_dp", ""},
      {"privacy.delta", "1e-4"},
      {"sweep.attack", ""},
      {"sweep.aggregator", ""},
      {"sweep.sigma_nm", ""},
  };
  return keys;
}

// Resolved configuration: every key present, ordered by name.
using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap default_config() {
  ConfigMap m;
  for (const auto& k : config_keys()) m[k.key] = k.default_value;
  return m;
}

inline void set_config_value(ConfigMap& cfg, const std::string& key, const std::string& value) {
  if (!cfg.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  cfg[key] = value;
}

inline ConfigMap parse_config(std::istream& in, const std::string& source = "<config>") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  ConfigMap cfg = default_config();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("unknown config key '" + section + "' (keys must sit inside a [section])");
    for (const auto& [key, value] : body) set_config_value(cfg, section + "." + key, value.data());
  }
  return cfg;
}

inline ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in, path);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double get_real(const ConfigMap& cfg, const std::string& key) {
  const std::string& v = cfg.at(key);
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::uint64_t get_count(const ConfigMap& cfg, const std::string& key) {
  const std::string& v = cfg.at(key);
  try {
    if (v.empty() || v.front() == '-') throw std::invalid_argument(v);
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

inline bool get_bool(const ConfigMap& cfg, const std::string& key) {
  const std::string& v = cfg.at(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true|false, got '" + v + "'");
}

template <class Fn>
auto get_enum(const ConfigMap& cfg, const std::string& key, Fn parse) {
  try {
    return parse(cfg.at(key));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

// "1-5", "1,2,7" or a mix such as "1-3,9".
inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : detail::split_list(text)) {
    try {
      const auto dash = item.find('-', 1);
      if (dash == std::string::npos) {
        std::size_t pos = 0;
        seeds.push_back(std::stoull(item, &pos));
        if (pos != item.size()) throw std::invalid_argument(item);
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw std::invalid_argument(item);
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
      }
    } catch (const std::exception&) {
      throw ConfigError("bad seed list '" + text + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

// FNV-1a over the canonical "key=value" lines of a resolved point config.
// run.seeds is excluded so every seed of a point shares one hash.
inline std::string config_hash(const ConfigMap& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : cfg) {
    if (k == "run.seeds" || k.starts_with("sweep.")) continue;
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct ExperimentMatrix {
  ConfigMap base;
  std::vector<std::uint64_t> seeds;
  std::vector<ConfigMap> points;  // cross product of the sweep lists over base
};

inline ExperimentMatrix expand_matrix(const ConfigMap& base) {
  ExperimentMatrix m;
  m.base = base;
  m.seeds = parse_seed_list(base.at("run.seeds"));
  const std::vector<std::pair<std::string, std::string>> axes = {
      {"sweep.attack", "attack.kind"},
      {"sweep.aggregator", "aggregator.rule"},
      {"sweep.sigma_nm", "privacy.sigma_nm"},
  };
  m.points = {base};
  for (const auto& [sweep_key, target] : axes) {
    const auto values = detail::split_list(base.at(sweep_key));
    if (values.empty()) continue;
    std::vector<ConfigMap> next;
    for (const auto& p : m.points)
      for (const auto& v : values) {
        ConfigMap q = p;
        q[target] = v;
        next.push_back(std::move(q));
      }
    m.points = std::move(next);
  }
  return m;
}

enum class DataSource { kLibsvm, kSynthetic, kCase3 };

// Typed view of one resolved point.
struct PointSettings {
  ConfigMap resolved;
  std::string hash;
  RunConfig run;  // seed filled per run
  DataSource source = DataSource::kLibsvm;
  std::string data_path;
  bool bias = true;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 1;
  std::size_t synthetic_count = 2000;
  std::size_t synthetic_dim = 20;
  std::uint64_t synthetic_seed = 7;
  double case3_G = 1.0;
  std::size_t case3_d = 2;
  std::size_t case3_m = 1;
  double sigma_nm = 1.0;
  double delta = 1e-4;
  double schedule_sigma_sq = 0.0;  // 0: pilot estimate
  double schedule_L0 = 0.0;        // 0: initial honest loss
};

inline std::string default_phishing_path() {
  if (const char* env = std::getenv("SAFEDSHB_PHISHING"); env && *env) return env;
  return "data/phishing";
}

inline PointSettings resolve_point(const ConfigMap& cfg) {
  using namespace detail;
  PointSettings p;
  p.resolved = cfg;
  p.hash = config_hash(cfg);
  RunConfig& r = p.run;
  r.n = get_count(cfg, "run.n");
  r.f = get_count(cfg, "run.f");
  r.T = get_count(cfg, "run.T");
  r.metrics_every = get_count(cfg, "run.metrics_every");
  if (r.n == 0) throw ConfigError("config key 'run.n': must be >= 1");
  if (2 * r.f >= r.n) throw ConfigError("config key 'run.f': need f < n/2");

  const std::string src = cfg.at("data.source");
  if (src == "libsvm") p.source = DataSource::kLibsvm;
  else if (src == "synthetic") p.source = DataSource::kSynthetic;
  else if (src == "case3") p.source = DataSource::kCase3;
  else throw ConfigError("config key 'data.source': expected libsvm|synthetic|case3, got '" + src + "'");
  p.data_path = cfg.at("data.path").empty() ? default_phishing_path() : cfg.at("data.path");
  p.bias = get_bool(cfg, "data.bias");
  p.test_fraction = get_real(cfg, "data.test_fraction");
  p.split_seed = get_count(cfg, "data.split_seed");
  p.synthetic_count = get_count(cfg, "data.synthetic_count");
  p.synthetic_dim = get_count(cfg, "data.synthetic_dim");
  p.synthetic_seed = get_count(cfg, "data.synthetic_seed");
  p.case3_G = get_real(cfg, "data.case3_G");
  p.case3_d = get_count(cfg, "data.case3_d");
  p.case3_m = get_count(cfg, "data.case3_m");

  r.loss.kind = get_enum(cfg, "model.loss", parse_loss_kind);
  r.loss.l2_lambda = get_real(cfg, "model.l2_lambda");
  if (p.source == DataSource::kCase3 && r.loss.kind != LossKind::kQuadratic)
    throw ConfigError("config key 'model.loss': the case3 source needs the quadratic loss");

  r.aggregator.kind = get_enum(cfg, "aggregator.rule", parse_aggregator_kind);
  r.aggregator.f = r.f;
  if (r.aggregator.kind == AggregatorKind::kFilter) {
    r.aggregator.filter_sigma0_sq = get_real(cfg, "aggregator.filter_sigma0_sq");
    if (!(r.aggregator.filter_sigma0_sq > 0.0))
      throw ConfigError("config key 'aggregator.filter_sigma0_sq': must be > 0 for the filter rule");
    const double eta = get_real(cfg, "aggregator.filter_eta");
    r.aggregator.filter_eta = eta > 0.0 ? eta : kappa_filter(r.n, r.f).eta;
  }

  r.attack.kind = get_enum(cfg, "attack.kind", parse_attack_kind);
  r.attack.message = get_enum(cfg, "attack.message", parse_attack_message);
  {
    const double lo = get_real(cfg, "attack.tau_min");
    const double hi = get_real(cfg, "attack.tau_max");
    const auto points = get_count(cfg, "attack.tau_points");
    if (!(lo > 0.0 && hi >= lo) || points == 0)
      throw ConfigError("config key 'attack.tau_*': need 0 < tau_min <= tau_max and tau_points >= 1");
    r.attack.tau_grid = {0.0};
    for (std::uint64_t i = 0; i < points; ++i) {
      const double u = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
      r.attack.tau_grid.push_back(lo * std::pow(hi / lo, u));
    }
  }

  r.schedule.kind = get_enum(cfg, "schedule.kind", parse_schedule_kind);
  r.schedule.gamma = get_real(cfg, "schedule.gamma");
  r.schedule.beta = get_real(cfg, "schedule.beta");
  r.schedule.mu = get_real(cfg, "schedule.mu");
  r.schedule.L = get_real(cfg, "schedule.L");
  r.schedule.T = r.T;
  p.schedule_sigma_sq = get_real(cfg, "schedule.sigma_sq");
  p.schedule_L0 = get_real(cfg, "schedule.L0");

  r.clip_C = get_real(cfg, "privacy.clip");
  r.batch_b = get_count(cfg, "privacy.batch");
  p.sigma_nm = get_real(cfg, "privacy.sigma_nm");
  p.delta = get_real(cfg, "privacy.delta");
  if (!(r.clip_C > 0.0)) throw ConfigError("config key 'privacy.clip': must be > 0");
  if (r.batch_b == 0) throw ConfigError("config key 'privacy.batch': must be >= 1");
  if (!(p.sigma_nm >= 0.0)) throw ConfigError("config key 'privacy.sigma_nm': must be >= 0");
  if (!(p.delta > 0.0 && p.delta < 1.0)) throw ConfigError("config key 'privacy.delta': must lie in (0,1)");
  r.sigma_dp = cfg.at("privacy.sigma_dp").empty()
                   ? 2.0 * r.clip_C / static_cast<double>(r.batch_b) * p.sigma_nm
                   : get_real(cfg, "privacy.sigma_dp");
  if (!(r.sigma_dp >= 0.0)) throw ConfigError("config key 'privacy.sigma_dp': must be >= 0");
  return p;
}

// Parsed LIBSVM files shared between runs of one process.
class DatasetCache {
 public:
  std::shared_ptr<const Dataset> load(const std::string& path, bool bias) {
    std::lock_guard lock(mutex_);
    const std::string key = path + (bias ? "#bias" : "");
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    if (!std::filesystem::exists(path)) throw std::runtime_error("missing dataset file '" + path + "'");
    Dataset ds = parse_libsvm(path);
    if (bias) ds = with_bias(std::move(ds));
    auto ptr = std::make_shared<const Dataset>(std::move(ds));
    cache_.emplace(key, ptr);
    return ptr;
  }

 private:
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const Dataset>> cache_;
};

struct PreparedData {
  std::vector<std::vector<Sample>> workers;
  std::vector<Sample> test;
  std::size_t dim = 0;
  std::size_t m = 0;
  std::size_t train_size = 0;
};

inline PreparedData prepare_data(const PointSettings& p, std::uint64_t seed, DatasetCache& cache) {
  PreparedData out;
  if (p.source == DataSource::kCase3) {
    out.workers = make_case3_fixture(p.run.n, p.run.f, p.case3_G, p.case3_d, p.case3_m);
    out.dim = p.case3_d;
    out.m = p.case3_m;
    out.train_size = p.run.n * p.case3_m;
    return out;
  }
  std::shared_ptr<const Dataset> ds;
  if (p.source == DataSource::kLibsvm) {
    ds = cache.load(p.data_path, p.bias);
  } else {
    ds = std::make_shared<const Dataset>(make_synthetic_logistic(p.synthetic_count, p.synthetic_dim, p.synthetic_seed));
  }
  auto split = split_train_test(ds->samples, p.test_fraction, p.split_seed);
  auto part = partition_workers(split.train, p.run.n, seed);
  out.workers = std::move(part.datasets);
  out.test = std::move(split.test);
  out.dim = ds->dim;
  out.m = part.m;
  out.train_size = split.train.size();
  return out;
}

// Coefficient used in the nonconvex noise level: the aggregator's kappa.
inline double aggregator_kappa(const AggregatorSpec& a, std::size_t n) {
  if (a.f == 0) return 0.0;
  switch (a.kind) {
    case AggregatorKind::kSmea: return kappa_smea(n, a.f);
    case AggregatorKind::kFilter: return kappa_filter(n, a.f).kappa;
    case AggregatorKind::kMean: return 0.0;
  }
  return 0.0;
}

// Fills schedule estimates that depend on the data (nonconvex sigma_bar, L0).
inline ScheduleSpec finalize_schedule(const PointSettings& p, const PreparedData& data, const ParamVector& theta0) {
  ScheduleSpec s = p.run.schedule;
  if (s.kind != ScheduleKind::kNonConvex) return s;
  const std::span<const std::vector<Sample>> honest(data.workers.data(), p.run.n - p.run.f);
  const double sigma_sq =
      p.schedule_sigma_sq > 0.0 ? p.schedule_sigma_sq : estimate_gradient_variance(theta0, honest, p.run.loss);
  s.sigma_bar = nonconvex_sigma_bar(sigma_sq, p.run.batch_b, data.m, p.run.sigma_dp, data.dim, p.run.n, p.run.f,
                                    aggregator_kappa(p.run.aggregator, p.run.n));
  if (p.schedule_L0 > 0.0) {
    s.L0 = p.schedule_L0;
  } else {
    std::vector<Sample> all;
    for (const auto& w : honest) all.insert(all.end(), w.begin(), w.end());
    s.L0 = full_loss_and_accuracy(theta0, all, p.run.loss).loss;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Outputs

using Json = nlohmann::ordered_json;

inline Json optional_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json metrics_json(const StepMetrics& m) {
  Json j;
  j["t"] = m.t;
  j["train_loss"] = finite_or_null(m.train_loss);
  j["test_accuracy"] = m.test_accuracy >= 0.0 ? Json(m.test_accuracy) : Json(nullptr);
  j["drift"] = optional_json(m.drift);
  j["deviation"] = optional_json(m.deviation);
  j["gcov"] = optional_json(m.gcov);
  j["agg_error"] = finite_or_null(m.agg_error);
  j["chosen_tau"] = optional_json(m.chosen_tau);
  return j;
}

inline std::string metrics_jsonl(std::span<const StepMetrics> metrics) {
  std::string out;
  for (const auto& m : metrics) out += metrics_json(m).dump() + "\n";
  return out;
}

inline Json vector_json(const ParamVector& v) { return Json(std::vector<double>(v.begin(), v.end())); }

struct RunOutcome {
  std::string hash;
  std::uint64_t seed = 0;
  RunResult result;
  PreparedData data_shape;  // workers/test left empty
  std::optional<EpsilonStar> eps;
  Json summary;
};

inline std::string run_stem(const std::string& hash, std::uint64_t seed) {
  return hash + "_seed" + std::to_string(seed);
}

inline Json config_json(const ConfigMap& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : cfg) {
    const auto dot = k.find('.');
    j[k.substr(0, dot)][k.substr(dot + 1)] = v;
  }
  return j;
}

// Runs one (point, seed) and builds its summary. Does not touch the disk
// beyond reading the dataset.
inline RunOutcome execute_run(const PointSettings& p, std::uint64_t seed, std::size_t threads,
                              DatasetCache& cache, const std::string& build_id) {
  PreparedData data = prepare_data(p, seed, cache);
  RunConfig cfg = p.run;
  cfg.seed = seed;
  cfg.threads = threads;
  ParamVector theta0(data.dim);
  cfg.schedule = finalize_schedule(p, data, theta0);

  RunOutcome out;
  out.hash = p.hash;
  out.seed = seed;
  out.data_shape.dim = data.dim;
  out.data_shape.m = data.m;
  out.data_shape.train_size = data.train_size;
  const std::size_t test_size = data.test.size();
  out.result = run_experiment(cfg, std::move(data.workers), std::move(data.test), std::move(theta0));

  if (cfg.sigma_dp > 0.0 && cfg.T > 0 && out.data_shape.m >= cfg.batch_b) {
    PrivacySpec ps{cfg.clip_C, cfg.batch_b, out.data_shape.m, cfg.sigma_dp, cfg.T, p.delta};
    out.eps = compose_epsilon_star(ps);
  }

  const auto& ms = out.result.metrics;
  Json s;
  s["status"] = "complete";
  s["build_id"] = build_id;
  s["config_hash"] = p.hash;
  s["seed"] = seed;
  s["config"] = config_json(p.resolved);
  s["derived"] = {{"d", out.data_shape.dim},
                  {"m", out.data_shape.m},
                  {"train_size", out.data_shape.train_size},
                  {"test_size", test_size},
                  {"sigma_dp", cfg.sigma_dp},
                  {"tau_grid_size", cfg.attack.tau_grid.size()}};
  if (cfg.schedule.kind == ScheduleKind::kNonConvex) {
    s["derived"]["sigma_bar"] = cfg.schedule.sigma_bar;
    s["derived"]["L0"] = cfg.schedule.L0;
  }
  s["steps"] = ms.size();
  s["final_loss"] = ms.empty() ? Json(nullptr) : finite_or_null(ms.back().train_loss);
  s["final_accuracy"] = ms.empty() || ms.back().test_accuracy < 0.0 ? Json(nullptr) : Json(ms.back().test_accuracy);
  if (!ms.empty() && ms.back().test_accuracy >= 0.0) {
    const std::size_t k = std::min<std::size_t>(50, ms.size());
    double acc = 0.0;
    for (std::size_t i = ms.size() - k; i < ms.size(); ++i) acc += ms[i].test_accuracy;
    s["mean_last50_accuracy"] = acc / static_cast<double>(k);
  } else {
    s["mean_last50_accuracy"] = nullptr;
  }
  s["theta_hat_index"] = out.result.theta_hat_index ? Json(*out.result.theta_hat_index) : Json(nullptr);
  s["eps_star"] = out.eps ? finite_or_null(out.eps->eps_star) : Json(nullptr);
  s["eps_argmin_alpha"] = out.eps ? finite_or_null(out.eps->argmin_alpha) : Json(nullptr);
  s["delta"] = p.delta;
  s["theta_final"] = vector_json(out.result.theta_final);
  s["theta_hat"] = vector_json(out.result.theta_hat);
  out.summary = std::move(s);
  return out;
}

// Writes to a temporary name and renames, so a summary on disk is complete.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::optional<Json> read_complete_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    Json j = Json::parse(in);
    if (j.value("status", "") == "complete") return j;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

struct TableRow {
  std::string hash;
  std::string attack;
  std::string aggregator;
  std::string sigma_nm;
  std::size_t runs = 0;
  double mean_accuracy = NAN;
  double std_accuracy = NAN;
  double mean_loss = NAN;
  double eps_star = NAN;
};

inline TableRow summarize_point(const ConfigMap& point, const std::string& hash, std::span<const Json> summaries) {
  TableRow row;
  row.hash = hash;
  row.attack = point.at("attack.kind");
  row.aggregator = point.at("aggregator.rule");
  row.sigma_nm = point.at("privacy.sigma_nm");
  std::vector<double> acc, loss;
  for (const auto& s : summaries) {
    ++row.runs;
    if (s["final_accuracy"].is_number()) acc.push_back(s["final_accuracy"].get<double>());
    if (s["final_loss"].is_number()) loss.push_back(s["final_loss"].get<double>());
    if (s["eps_star"].is_number()) row.eps_star = s["eps_star"].get<double>();
  }
  auto mean = [](const std::vector<double>& v) {
    double t = 0.0;
    for (double x : v) t += x;
    return v.empty() ? NAN : t / static_cast<double>(v.size());
  };
  row.mean_accuracy = mean(acc);
  row.mean_loss = mean(loss);
  if (acc.size() >= 2) {
    double ss = 0.0;
    for (double x : acc) ss += (x - row.mean_accuracy) * (x - row.mean_accuracy);
    row.std_accuracy = std::sqrt(ss / static_cast<double>(acc.size() - 1));
  } else if (acc.size() == 1) {
    row.std_accuracy = 0.0;
  }
  return row;
}

inline std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string table_csv(std::span<const TableRow> rows) {
  std::string out = "config_hash,attack,aggregator,sigma_nm,runs,mean_final_accuracy,std_final_accuracy,mean_final_loss,eps_star\n";
  for (const auto& r : rows) {
    out += r.hash + "," + r.attack + "," + r.aggregator + "," + r.sigma_nm + "," + std::to_string(r.runs) + "," +
           csv_number(r.mean_accuracy) + "," + csv_number(r.std_accuracy) + "," + csv_number(r.mean_loss) + "," +
           csv_number(r.eps_star) + "\n";
  }
  return out;
}

}  // namespace safedshb

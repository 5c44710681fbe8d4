#pragma once

// Training configuration as a flat text file of dotted `key = value` lines.
// Blank lines and `#` comments are ignored; unknown keys are rejected.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hymarl/envs.hpp"
#include "hymarl/errors.hpp"
#include "hymarl/hybrid_action.hpp"
#include "hymarl/learner.hpp"

namespace hymarl {

struct TrainConfig {
  std::string algo = "mapqn";
  std::string env = "hybrid_climb";
  EnvParams env_params;
  std::uint64_t seed = 0;

  long total_steps = 100000;
  int batch_size = 64;
  long buffer_capacity = 50000;
  long learning_starts = 1000;
  int update_every = 1;

  ModelConfig model;
  /// Warm-up length in updates; negative means warmup_fraction of all updates.
  long warmup_updates = -1;
  double warmup_fraction = 0.1;

  std::string target_mode = "soft";
  double tau = 0.01;
  long target_period = 1000;

  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_fraction = 0.5;
  NoiseKind noise = NoiseKind::gaussian;
  double sigma_start = 0.3;
  double sigma_end = 0.05;
  double sigma_fraction = 0.5;
  double ou_theta = 0.15;

  long eval_period = 1000;
  int eval_episodes = 10;
  int final_eval_episodes = 100;
  bool wall_time = false;

  long expected_updates() const {
    const long active = std::max(0L, total_steps - learning_starts);
    return update_every > 0 ? active / update_every : 0;
  }

  long resolved_warmup() const {
    if (algo != "mahhqn") return 0;
    if (warmup_updates >= 0) return warmup_updates;
    return static_cast<long>(warmup_fraction * static_cast<double>(expected_updates()));
  }

  /// Model settings with the warm-up resolved.
  ModelConfig resolved_model() const {
    ModelConfig m = model;
    m.warmup_updates = resolved_warmup();
    return m;
  }

  ExplorationConfig exploration() const {
    ExplorationConfig e;
    e.epsilon = {eps_start, eps_end, std::max(1L, static_cast<long>(eps_fraction * total_steps))};
    e.noise = noise;
    e.sigma = {sigma_start, sigma_end, std::max(1L, static_cast<long>(sigma_fraction * total_steps))};
    e.ou_theta = ou_theta;
    return e;
  }

  void validate() const;
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value, in canonical order.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  std::string to_text() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return out;
}

inline long parse_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    // Allow integral values written in exponent form, e.g. 1e5.
    const double d = parse_double(key, v);
    if (d != std::floor(d)) throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
    return static_cast<long>(d);
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("'" + key + "': expected an unsigned integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

inline std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<int> parse_widths(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const long w = parse_long(key, trim(part));
    if (w < 1) throw ConfigError("'" + key + "': widths must be positive");
    out.push_back(static_cast<int>(w));
  }
  if (out.empty()) throw ConfigError("'" + key + "': at least one hidden width required");
  return out;
}

inline std::string join_widths(const std::vector<int>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

}  // namespace detail

inline void TrainConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  const std::string& v = value;
  if (key.rfind("env.", 0) == 0 && key.size() > 4) {
    env_params[key.substr(4)] = parse_double(key, v);
    return;
  }
  static const std::map<std::string, std::function<void(TrainConfig&, const std::string&, const std::string&)>> setters = {
      {"algo", [](TrainConfig& c, const std::string&, const std::string& x) { c.algo = x == "pdqn-independent" ? "pdqn" : x; }},
      {"env", [](TrainConfig& c, const std::string&, const std::string& x) { c.env = x; }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& x) { c.seed = parse_u64(k, x); }},
      {"train.total_steps", [](TrainConfig& c, const std::string& k, const std::string& x) { c.total_steps = parse_long(k, x); }},
      {"train.batch_size", [](TrainConfig& c, const std::string& k, const std::string& x) { c.batch_size = static_cast<int>(parse_long(k, x)); }},
      {"train.buffer_capacity", [](TrainConfig& c, const std::string& k, const std::string& x) { c.buffer_capacity = parse_long(k, x); }},
      {"train.learning_starts", [](TrainConfig& c, const std::string& k, const std::string& x) { c.learning_starts = parse_long(k, x); }},
      {"train.update_every", [](TrainConfig& c, const std::string& k, const std::string& x) { c.update_every = static_cast<int>(parse_long(k, x)); }},
      {"train.gamma", [](TrainConfig& c, const std::string& k, const std::string& x) { c.model.gamma = parse_double(k, x); }},
      {"train.grad_clip", [](TrainConfig& c, const std::string& k, const std::string& x) { c.model.grad_clip = parse_double(k, x); }},
      {"lr.value", [](TrainConfig& c, const std::string& k, const std::string& x) { c.model.lr_value = parse_double(k, x); }},
      {"lr.policy", [](TrainConfig& c, const std::string& k, const std::string& x) { c.model.lr_policy = parse_double(k, x); }},
      {"lr.mixing", [](TrainConfig& c, const std::string& k, const std::string& x) { c.model.lr_mixing = parse_double(k, x); }},
      {"net.hidden", [](TrainConfig& c, const std::string& k, const std::string& x) { c.model.hidden = parse_widths(k, x); }},
      {"net.activation", [](TrainConfig& c, const std::string&, const std::string& x) { c.model.hidden_activation = activation_from_string(x); }},
      {"mix.width", [](TrainConfig& c, const std::string& k, const std::string& x) { c.model.mix_width = static_cast<int>(parse_long(k, x)); }},
      {"mahhqn.warmup", [](TrainConfig& c, const std::string& k, const std::string& x) { c.warmup_updates = parse_long(k, x); }},
      {"mahhqn.warmup_fraction", [](TrainConfig& c, const std::string& k, const std::string& x) { c.warmup_fraction = parse_double(k, x); }},
      {"target.mode", [](TrainConfig& c, const std::string&, const std::string& x) { c.target_mode = x; }},
      {"target.tau", [](TrainConfig& c, const std::string& k, const std::string& x) { c.tau = parse_double(k, x); }},
      {"target.period", [](TrainConfig& c, const std::string& k, const std::string& x) { c.target_period = parse_long(k, x); }},
      {"explore.epsilon_start", [](TrainConfig& c, const std::string& k, const std::string& x) { c.eps_start = parse_double(k, x); }},
      {"explore.epsilon_end", [](TrainConfig& c, const std::string& k, const std::string& x) { c.eps_end = parse_double(k, x); }},
      {"explore.epsilon_fraction", [](TrainConfig& c, const std::string& k, const std::string& x) { c.eps_fraction = parse_double(k, x); }},
      {"explore.noise", [](TrainConfig& c, const std::string& k, const std::string& x) {
         if (x == "gaussian") c.noise = NoiseKind::gaussian;
         else if (x == "ou") c.noise = NoiseKind::ornstein_uhlenbeck;
         else throw ConfigError("'" + k + "': expected gaussian or ou, got '" + x + "'");
       }},
      {"explore.sigma_start", [](TrainConfig& c, const std::string& k, const std::string& x) { c.sigma_start = parse_double(k, x); }},
      {"explore.sigma_end", [](TrainConfig& c, const std::string& k, const std::string& x) { c.sigma_end = parse_double(k, x); }},
      {"explore.sigma_fraction", [](TrainConfig& c, const std::string& k, const std::string& x) { c.sigma_fraction = parse_double(k, x); }},
      {"explore.ou_theta", [](TrainConfig& c, const std::string& k, const std::string& x) { c.ou_theta = parse_double(k, x); }},
      {"eval.period", [](TrainConfig& c, const std::string& k, const std::string& x) { c.eval_period = parse_long(k, x); }},
      {"eval.episodes", [](TrainConfig& c, const std::string& k, const std::string& x) { c.eval_episodes = static_cast<int>(parse_long(k, x)); }},
      {"eval.final_episodes", [](TrainConfig& c, const std::string& k, const std::string& x) { c.final_eval_episodes = static_cast<int>(parse_long(k, x)); }},
      {"metrics.wall_time", [](TrainConfig& c, const std::string& k, const std::string& x) { c.wall_time = parse_bool(k, x); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, v);
}

inline void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(algo == "pdqn" || algo == "mapqn" || algo == "mahhqn", "algo must be pdqn, mapqn or mahhqn (got '" + algo + "')");
  need(model.gamma >= 0.0 && model.gamma <= 1.0, "train.gamma must lie in [0, 1]");
  need(total_steps > 0, "train.total_steps must be positive");
  need(batch_size > 0, "train.batch_size must be positive");
  need(buffer_capacity >= batch_size, "train.buffer_capacity must be at least the batch size");
  need(learning_starts >= 0, "train.learning_starts must be >= 0");
  need(update_every > 0, "train.update_every must be positive");
  need(model.lr_value >= 0.0 && model.lr_policy >= 0.0 && model.lr_mixing >= 0.0, "learning rates must be >= 0");
  need(model.mix_width > 0, "mix.width must be positive");
  need(model.grad_clip >= 0.0, "train.grad_clip must be >= 0");
  need(target_mode == "soft" || target_mode == "hard", "target.mode must be soft or hard");
  need(tau > 0.0 && tau <= 1.0, "target.tau must lie in (0, 1]");
  need(target_period > 0, "target.period must be positive");
  need(warmup_fraction >= 0.0 && warmup_fraction <= 1.0, "mahhqn.warmup_fraction must lie in [0, 1]");
  need(resolved_warmup() <= std::max(expected_updates(), 0L) || warmup_updates < 0,
       "mahhqn.warmup exceeds the number of updates in the run");
  need(eps_fraction >= 0.0 && sigma_fraction >= 0.0, "schedule fractions must be >= 0");
  need(eval_period > 0 && eval_episodes > 0 && final_eval_episodes > 0, "evaluation period and episode counts must be positive");
  exploration().validate();
}

inline std::vector<std::pair<std::string, std::string>> TrainConfig::to_pairs() const {
  using detail::fmt;
  std::vector<std::pair<std::string, std::string>> out = {
      {"algo", algo},
      {"env", env},
      {"seed", std::to_string(seed)},
      {"train.total_steps", std::to_string(total_steps)},
      {"train.batch_size", std::to_string(batch_size)},
      {"train.buffer_capacity", std::to_string(buffer_capacity)},
      {"train.learning_starts", std::to_string(learning_starts)},
      {"train.update_every", std::to_string(update_every)},
      {"train.gamma", fmt(model.gamma)},
      {"train.grad_clip", fmt(model.grad_clip)},
      {"lr.value", fmt(model.lr_value)},
      {"lr.policy", fmt(model.lr_policy)},
      {"lr.mixing", fmt(model.lr_mixing)},
      {"net.hidden", detail::join_widths(model.hidden)},
      {"net.activation", to_string(model.hidden_activation)},
      {"mix.width", std::to_string(model.mix_width)},
      {"mahhqn.warmup", std::to_string(warmup_updates)},
      {"mahhqn.warmup_fraction", fmt(warmup_fraction)},
      {"target.mode", target_mode},
      {"target.tau", fmt(tau)},
      {"target.period", std::to_string(target_period)},
      {"explore.epsilon_start", fmt(eps_start)},
      {"explore.epsilon_end", fmt(eps_end)},
      {"explore.epsilon_fraction", fmt(eps_fraction)},
      {"explore.noise", noise == NoiseKind::gaussian ? "gaussian" : "ou"},
      {"explore.sigma_start", fmt(sigma_start)},
      {"explore.sigma_end", fmt(sigma_end)},
      {"explore.sigma_fraction", fmt(sigma_fraction)},
      {"explore.ou_theta", fmt(ou_theta)},
      {"eval.period", std::to_string(eval_period)},
      {"eval.episodes", std::to_string(eval_episodes)},
      {"eval.final_episodes", std::to_string(final_eval_episodes)},
      {"metrics.wall_time", wall_time ? "true" : "false"},
  };
  for (const auto& [k, v] : env_params) out.emplace_back("env." + k, fmt(v));
  return out;
}

inline std::string TrainConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_pairs()) s += k + " = " + v + "\n";
  return s;
}

/// Applies every `key = value` line of `text` on top of `base`.
inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}, const std::string& origin = "<config>") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
    try {
      base.set(key, value);
    } catch (const std::exception& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), std::move(base), path);
}

}  // namespace hymarl

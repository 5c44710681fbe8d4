#pragma once

// Versioned binary checkpoints:
//
//   "HYMARLCK"  u32 format version  u64 header bytes  header JSON
//   then every segment listed in the header, in order, as little-endian f64.
//
// The header records the algorithm, the environment spec hash and
// description, the model settings, the training config echo, and the name
// and length of each segment. Each network contributes its parameters, the
// optimizer moments and the optimizer step counter.

#include <bit>
#include <cstdint>
#include <cstring>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hymarl/errors.hpp"
#include "hymarl/mahhqn.hpp"
#include "hymarl/mapqn.hpp"
#include "hymarl/pdqn.hpp"

namespace hymarl {

inline constexpr char kCheckpointMagic[8] = {'H', 'Y', 'M', 'A', 'R', 'L', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::unique_ptr<Learner> make_learner(const std::string& algo, const EnvSpec& spec, const ModelConfig& cfg,
                                             Rng& rng) {
  if (algo == "pdqn") return std::make_unique<IndependentPdqn>(spec, cfg, rng);
  if (algo == "mapqn") return std::make_unique<Mapqn>(spec, cfg, rng);
  if (algo == "mahhqn") return std::make_unique<Mahhqn>(spec, cfg, rng);
  throw ConfigError("unknown algorithm '" + algo + "'");
}

inline nlohmann::json model_to_json(const ModelConfig& m) {
  return {{"hidden", m.hidden},         {"activation", to_string(m.hidden_activation)},
          {"mix_width", m.mix_width},   {"lr_value", m.lr_value},
          {"lr_policy", m.lr_policy},   {"lr_mixing", m.lr_mixing},
          {"gamma", m.gamma},           {"grad_clip", m.grad_clip},
          {"warmup_updates", m.warmup_updates}};
}

inline ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.hidden = j.at("hidden").get<std::vector<int>>();
  m.hidden_activation = activation_from_string(j.at("activation").get<std::string>());
  m.mix_width = j.at("mix_width").get<int>();
  m.lr_value = j.at("lr_value").get<double>();
  m.lr_policy = j.at("lr_policy").get<double>();
  m.lr_mixing = j.at("lr_mixing").get<double>();
  m.gamma = j.at("gamma").get<double>();
  m.grad_clip = j.at("grad_clip").get<double>();
  m.warmup_updates = j.at("warmup_updates").get<long>();
  return m;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

namespace detail {

template <class T>
void write_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw CheckpointError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

/// Optimizer step counters live in doubles so every segment shares one
/// element type; they stay exact up to 2^53.
inline std::vector<std::pair<std::string, std::vector<double>>> checkpoint_segments(Learner& learner) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (auto& [name, net] : learner.named_nets()) {
    const auto& p = net->params().values();
    const OptState& o = net->opt();
    out.emplace_back(name + ":params", std::vector<double>(p.begin(), p.end()));
    out.emplace_back(name + ":opt_m", std::vector<double>(o.m.begin(), o.m.end()));
    out.emplace_back(name + ":opt_v", std::vector<double>(o.v.begin(), o.v.end()));
    out.emplace_back(name + ":opt_step", std::vector<double>{static_cast<double>(o.step)});
  }
  return out;
}

struct CheckpointMeta {
  std::string algo;
  EnvSpec spec;
  ModelConfig model;
  std::vector<std::pair<std::string, std::string>> config;
};

inline void save_checkpoint(const std::string& path, Learner& learner, const CheckpointMeta& meta) {
  nlohmann::json h;
  h["format_version"] = kCheckpointVersion;
  h["algo"] = meta.algo;
  h["env"] = meta.spec.name;
  h["env_hash"] = hex64(meta.spec.hash());
  h["env_description"] = meta.spec.describe();
  h["model"] = model_to_json(meta.model);
  nlohmann::json cfg = nlohmann::json::array();
  for (const auto& [k, v] : meta.config) cfg.push_back({k, v});
  h["config"] = cfg;
  if (auto* m = dynamic_cast<Mahhqn*>(&learner)) h["updates"] = m->updates();
  const auto segs = checkpoint_segments(learner);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, data] : segs) list.push_back({{"name", name}, {"length", data.size()}});
  h["segments"] = list;
  const std::string header = h.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::write_le<std::uint32_t>(out, kCheckpointVersion);
    detail::write_le<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, data] : segs) {
      for (double v : data) detail::write_le<double>(out, v);
    }
    if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
  }
  std::rename(tmp.c_str(), path.c_str());
}

struct LoadedCheckpoint {
  nlohmann::json header;
  std::unique_ptr<Learner> learner;
  std::string algo() const { return header.at("algo").get<std::string>(); }
};

inline nlohmann::json read_checkpoint_header(std::istream& in, const std::string& path) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError("'" + path + "' is not a checkpoint");
  }
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("'" + path + "' has format version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto len = detail::read_le<std::uint64_t>(in);
  if (len > (1u << 28)) throw CheckpointError("checkpoint header too large");
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len))) throw CheckpointError("checkpoint truncated");
  try {
    return nlohmann::json::parse(header);
  } catch (const std::exception& e) {
    throw CheckpointError("corrupt checkpoint header: " + std::string(e.what()));
  }
}

inline nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return read_checkpoint_header(in, path);
}

/// Rebuilds the learner recorded in `path` for an environment with `spec`.
/// Refuses when the environment spec hash differs from the recorded one.
inline LoadedCheckpoint load_checkpoint(const std::string& path, const EnvSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  LoadedCheckpoint out;
  out.header = read_checkpoint_header(in, path);
  const auto& h = out.header;
  if (h.at("env_hash").get<std::string>() != hex64(spec.hash())) {
    throw CheckpointError("checkpoint was trained on '" + h.at("env_description").get<std::string>() +
                          "' which is incompatible with '" + spec.describe() + "'");
  }
  const ModelConfig model = model_from_json(h.at("model"));
  Rng rng(0);
  out.learner = make_learner(h.at("algo").get<std::string>(), spec, model, rng);
  auto segs = checkpoint_segments(*out.learner);
  const auto& list = h.at("segments");
  if (list.size() != segs.size()) throw CheckpointError("checkpoint segment count does not match the model");
  std::map<std::string, Mlp*> nets;
  for (auto& [name, net] : out.learner->named_nets()) nets[name] = net;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const std::string name = list[s].at("name").get<std::string>();
    const std::size_t len = list[s].at("length").get<std::size_t>();
    if (name != segs[s].first || len != segs[s].second.size()) {
      throw CheckpointError("checkpoint segment '" + name + "' does not match the model layout");
    }
    std::vector<double> data(len);
    for (double& v : data) v = detail::read_le<double>(in);
    const auto colon = name.rfind(':');
    Mlp* net = nets.at(name.substr(0, colon));
    const std::string part = name.substr(colon + 1);
    if (part == "params") net->params().values().assign(data.begin(), data.end());
    else if (part == "opt_m") net->opt().m.assign(data.begin(), data.end());
    else if (part == "opt_v") net->opt().v.assign(data.begin(), data.end());
    else if (part == "opt_step") net->opt().step = static_cast<std::uint64_t>(data[0]);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint segments");
  if (auto* m = dynamic_cast<Mahhqn*>(out.learner.get())) m->set_updates(h.value("updates", 0L));
  return out;
}

}  // namespace hymarl

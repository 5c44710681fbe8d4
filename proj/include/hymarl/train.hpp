#pragma once

// Single-threaded, fully seeded training loop with periodic greedy
// evaluation, JSON-lines metrics and a final checkpoint.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hymarl/checkpoint.hpp"
#include "hymarl/config.hpp"
#include "hymarl/replay.hpp"

namespace hymarl {

/// splitmix64 finalizer; derives independent stream seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct EvalResult {
  double mean_return = 0.0;
  double success_rate = 0.0;
  int episodes = 0;
};

/// Greedy evaluation. Each agent's action comes from select_agent on that
/// agent's own observation only.
inline EvalResult evaluate(Learner& learner, Env& env, int episodes, std::uint64_t seed) {
  EvalResult r;
  Rng rng(mix_seed(seed, 100));
  std::vector<NoiseState> noise(static_cast<std::size_t>(learner.num_agents()));
  const ActParams greedy = ActParams::greedy();
  double total = 0.0;
  int successes = 0;
  for (int e = 0; e < episodes; ++e) {
    TimeStep ts = env.reset(mix_seed(seed, 1000 + static_cast<std::uint64_t>(e)));
    std::vector<std::vector<double>> obs = std::move(ts.obs);
    double ret = 0.0;
    for (bool done = false; !done;) {
      std::vector<HybridAction> joint;
      for (int i = 0; i < learner.num_agents(); ++i) {
        joint.push_back(learner.select_agent(i, obs[static_cast<std::size_t>(i)], greedy, rng,
                                             noise[static_cast<std::size_t>(i)]));
      }
      StepResult sr = env.step(joint);
      ret += sr.reward;
      done = sr.done;
      obs = std::move(sr.obs);
    }
    total += ret;
    successes += env.episode_success() ? 1 : 0;
  }
  r.episodes = episodes;
  r.mean_return = total / episodes;
  r.success_rate = static_cast<double>(successes) / episodes;
  return r;
}

struct TrainResult {
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
  EvalResult final_eval;
  long steps = 0;
  long updates = 0;
  long episodes = 0;
  int records = 0;
};

/// Observers may inspect the learner after every update (tests use this).
using UpdateHook = std::function<void(long update_index, Learner&)>;

inline TrainResult run_train(const TrainConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr,
                             const UpdateHook& on_update = {}) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  auto env = make_env(cfg.env, cfg.env_params);
  auto eval_env = make_env(cfg.env, cfg.env_params);
  const EnvSpec& spec = env->spec();
  const ModelConfig model = cfg.resolved_model();

  Rng init_rng(mix_seed(cfg.seed, 0));
  Rng act_rng(mix_seed(cfg.seed, 1));
  Rng sample_rng(mix_seed(cfg.seed, 2));
  const std::uint64_t episode_seed_base = mix_seed(cfg.seed, 3);
  const std::uint64_t eval_seed = mix_seed(cfg.seed, 4);

  auto learner = make_learner(cfg.algo, spec, model, init_rng);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_capacity), spec);
  const ExplorationConfig explore = cfg.exploration();

  TrainResult res;
  res.metrics_path = out_dir / "metrics.jsonl";
  res.checkpoint_path = out_dir / "final.ckpt";
  std::ofstream metrics(res.metrics_path, std::ios::trunc);
  if (!metrics) throw ConfigError("cannot write metrics to '" + res.metrics_path.string() + "'");
  {
    std::ofstream echo(out_dir / "config.txt", std::ios::trunc);
    echo << cfg.to_text();
  }
  const auto t0 = std::chrono::steady_clock::now();

  std::map<std::string, std::pair<double, long>> loss_acc;
  double train_return_acc = 0.0;
  long train_episodes_since = 0;

  std::vector<NoiseState> noise(static_cast<std::size_t>(spec.num_agents));
  TimeStep ts = env->reset(episode_seed_base);
  std::vector<std::vector<double>> obs = std::move(ts.obs);
  std::vector<double> state = std::move(ts.state);
  double episode_return = 0.0;

  auto write_record = [&](long step, const EvalResult& ev, double eps, double sigma, bool final) {
    nlohmann::ordered_json rec;
    rec["step"] = step;
    rec["episode"] = res.episodes;
    rec["updates"] = res.updates;
    rec["mean_return"] = ev.mean_return;
    rec["success_rate"] = ev.success_rate;
    rec["eval_episodes"] = ev.episodes;
    if (train_episodes_since > 0) {
      rec["train_return"] = train_return_acc / static_cast<double>(train_episodes_since);
    } else {
      rec["train_return"] = nullptr;
    }
    nlohmann::ordered_json losses = nlohmann::ordered_json::object();
    for (const auto& [k, v] : loss_acc) losses[k] = v.first / static_cast<double>(v.second);
    rec["losses"] = losses;
    rec["epsilon"] = eps;
    rec["sigma"] = sigma;
    if (final) rec["final"] = true;
    if (cfg.wall_time) rec["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << rec.dump() << '\n';
    metrics.flush();
    ++res.records;
    loss_acc.clear();
    train_return_acc = 0.0;
    train_episodes_since = 0;
  };

  for (long t = 0; t < cfg.total_steps; ++t) {
    ActParams act;
    act.training = true;
    act.epsilon = explore.epsilon.at(t);
    act.sigma = explore.sigma.at(t);
    act.noise = explore.noise;
    act.ou_theta = explore.ou_theta;
    std::vector<HybridAction> joint = learner->select_joint(obs, act, act_rng, noise);
    StepResult sr = env->step(joint);
    episode_return += sr.reward;

    JointTransition tr;
    tr.state = state;
    tr.obs = obs;
    tr.actions = std::move(joint);
    tr.reward = sr.reward;
    tr.next_state = sr.state;
    tr.next_obs = sr.obs;
    // Horizon cut-offs still bootstrap; only true termination masks.
    tr.done = sr.done && !sr.truncated;
    buffer.push(std::move(tr));

    if (sr.done) {
      ++res.episodes;
      train_return_acc += episode_return;
      ++train_episodes_since;
      episode_return = 0.0;
      for (auto& n : noise) n.reset();
      ts = env->reset(episode_seed_base + static_cast<std::uint64_t>(res.episodes));
      obs = std::move(ts.obs);
      state = std::move(ts.state);
    } else {
      obs = std::move(sr.obs);
      state = std::move(sr.state);
    }

    if (t + 1 > cfg.learning_starts && buffer.size() >= static_cast<std::size_t>(cfg.batch_size) &&
        (t + 1) % cfg.update_every == 0) {
      const JointBatch batch = JointBatch::from(buffer.sample(static_cast<std::size_t>(cfg.batch_size), sample_rng), spec);
      LossMap losses;
      try {
        losses = learner->update(batch);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(t + 1) + ": " + e.what(), -1);
      }
      for (const auto& [k, v] : losses) {
        if (!std::isfinite(v)) throw NumericError("step " + std::to_string(t + 1) + ": non-finite " + k + " loss", -1);
        auto& slot = loss_acc[k];
        slot.first += v;
        ++slot.second;
      }
      ++res.updates;
      if (cfg.target_mode == "soft") {
        learner->sync_targets(cfg.tau);
      } else if (res.updates % cfg.target_period == 0) {
        learner->sync_targets(1.0);
      }
      if (on_update) on_update(res.updates, *learner);
    }

    if ((t + 1) % cfg.eval_period == 0) {
      const EvalResult ev = evaluate(*learner, *eval_env, cfg.eval_episodes, eval_seed);
      write_record(t + 1, ev, act.epsilon, act.sigma, false);
      if (log) {
        *log << cfg.algo << " step " << (t + 1) << " return " << ev.mean_return << " success " << ev.success_rate
             << '\n';
      }
    }
  }
  res.steps = cfg.total_steps;
  res.final_eval = evaluate(*learner, *eval_env, cfg.final_eval_episodes, eval_seed);
  write_record(cfg.total_steps, res.final_eval, explore.epsilon.at(cfg.total_steps), explore.sigma.at(cfg.total_steps),
               true);
  save_checkpoint(res.checkpoint_path.string(), *learner, {cfg.algo, spec, model, cfg.to_pairs()});
  return res;
}

/// Loads a checkpoint for the named environment (spec hashes must match)
/// and evaluates it greedily.
inline EvalResult run_eval(const std::string& checkpoint, const std::string& env_name, const EnvParams& env_params,
                           int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("episodes must be positive");
  auto env = make_env(env_name, env_params);
  LoadedCheckpoint ck = load_checkpoint(checkpoint, env->spec());
  return evaluate(*ck.learner, *env, episodes, seed);
}

/// Environment parameter overrides recorded in a checkpoint's config echo.
inline EnvParams checkpoint_env_params(const std::string& checkpoint) {
  EnvParams p;
  const nlohmann::json header = read_checkpoint_header(checkpoint);
  for (const auto& kv : header.at("config")) {
    const std::string k = kv.at(0).get<std::string>();
    if (k.rfind("env.", 0) == 0) p[k.substr(4)] = std::stod(kv.at(1).get<std::string>());
  }
  return p;
}

}  // namespace hymarl

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hymarl/batch.hpp"
#include "hymarl/diffcore.hpp"
#include "hymarl/envs.hpp"
#include "hymarl/hybrid_action.hpp"

namespace hymarl {

using Rng = std::mt19937_64;

struct ModelConfig {
  std::vector<int> hidden{64, 64};
  Activation hidden_activation = Activation::relu;
  int mix_width = 32;
  double lr_value = 1e-3;
  double lr_policy = 1e-4;
  double lr_mixing = 1e-3;
  double gamma = 0.95;
  /// Global-norm gradient clip per network; 0 disables.
  double grad_clip = 0.0;
  /// MAHHQN: number of low-level-only updates before the high level trains.
  long warmup_updates = 0;
};

/// How much to explore on one action selection.
struct ActParams {
  double epsilon = 0.0;
  double sigma = 0.0;
  NoiseKind noise = NoiseKind::gaussian;
  double ou_theta = 0.15;
  /// Set by the training loop; evaluation leaves it false.
  bool training = false;

  static ActParams greedy() { return {}; }
};

/// Instrumentation of the action-selection path.
struct SelectionStats {
  std::uint64_t selections = 0;
  /// Forward passes through continuous-parameter policy networks.
  std::uint64_t policy_passes = 0;
  /// Per-discrete-action parameter blocks those passes produced.
  std::uint64_t param_blocks = 0;
  /// Discrete action values evaluated.
  std::uint64_t q_values = 0;
  void clear() { *this = {}; }
};

using LossMap = std::map<std::string, double>;

/// Common surface of the three training algorithms.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::string algo() const = 0;
  virtual int num_agents() const = 0;

  /// Decentralized execution: agent i acts on its own observation only.
  virtual HybridAction select_agent(int i, std::span<const double> obs_i, const ActParams& act, Rng& rng,
                                    NoiseState& noise) = 0;

  std::vector<HybridAction> select_joint(const std::vector<std::vector<double>>& obs, const ActParams& act, Rng& rng,
                                         std::vector<NoiseState>& noise) {
    std::vector<HybridAction> out;
    noise.resize(obs.size());
    for (int i = 0; i < num_agents(); ++i) {
      out.push_back(select_agent(i, obs[static_cast<std::size_t>(i)], act, rng, noise[static_cast<std::size_t>(i)]));
    }
    return out;
  }

  /// One gradient update of every head on a sampled batch. Returns losses.
  virtual LossMap update(const JointBatch& batch) = 0;

  /// Moves all target networks toward the live ones (tau = 1 copies).
  virtual void sync_targets(double tau) = 0;

  /// All networks (live and target) by stable name, for checkpoints.
  virtual std::vector<std::pair<std::string, Mlp*>> named_nets() = 0;

  SelectionStats& stats() { return stats_; }

 protected:
  SelectionStats stats_;
};

/// FNV-1a over the raw bytes of the given networks' parameters.
inline std::uint64_t param_hash(const std::vector<const Mlp*>& nets) {
  std::uint64_t h = 14695981039346656037ull;
  for (const Mlp* n : nets) {
    const auto& v = n->params().values();
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace hymarl

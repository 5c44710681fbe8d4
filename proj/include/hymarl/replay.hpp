#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hymarl/envs.hpp"
#include "hymarl/errors.hpp"
#include "hymarl/hybrid_action.hpp"

namespace hymarl {

struct JointTransition {
  std::vector<double> state;
  std::vector<std::vector<double>> obs;
  std::vector<HybridAction> actions;
  double reward = 0.0;
  std::vector<double> next_state;
  std::vector<std::vector<double>> next_obs;
  bool done = false;

  bool operator==(const JointTransition&) const = default;
};

inline void check_transition(const JointTransition& t, const EnvSpec& spec) {
  auto fail = [](const std::string& m) { throw ShapeError("transition: " + m); };
  if (static_cast<int>(t.state.size()) != spec.state_dim || static_cast<int>(t.next_state.size()) != spec.state_dim) {
    fail("state dimension mismatch");
  }
  const auto n = static_cast<std::size_t>(spec.num_agents);
  if (t.obs.size() != n || t.next_obs.size() != n || t.actions.size() != n) fail("agent count mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(t.obs[i].size()) != spec.obs_dims[i] ||
        static_cast<int>(t.next_obs[i].size()) != spec.obs_dims[i]) {
      fail("observation dimension mismatch for agent " + std::to_string(i));
    }
    if (auto v = validate(t.actions[i], spec.action_spaces[i])) fail("agent " + std::to_string(i) + ": " + v->message);
  }
}

/// Fixed-capacity FIFO ring of joint transitions with uniform sampling.
/// Not synchronized; a single owner pushes and samples.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, EnvSpec spec) : capacity_(capacity), spec_(std::move(spec)) {
    if (capacity_ == 0) throw ConfigError("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  void push(JointTransition t) {
    check_transition(t, spec_);
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
      seqs_.push_back(inserted_);
    } else {
      const std::size_t slot = static_cast<std::size_t>(inserted_ % capacity_);
      items_[slot] = std::move(t);
      seqs_[slot] = inserted_;
    }
    ++inserted_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const EnvSpec& spec() const { return spec_; }

  /// Items in insertion order, oldest first.
  const JointTransition& at(std::size_t i) const { return items_[physical(i)]; }
  /// Insertion sequence number (0-based) of the i-th oldest item.
  std::uint64_t seq(std::size_t i) const { return seqs_[physical(i)]; }

  /// Uniform with replacement. Returns physical slots.
  template <class Rng>
  std::vector<std::size_t> sample_slots(std::size_t batch, Rng& rng) const {
    if (batch == 0 || items_.size() < batch) {
      throw InsufficientData("replay holds " + std::to_string(items_.size()) + " transitions, batch needs " +
                             std::to_string(batch));
    }
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> out(batch);
    for (auto& s : out) s = pick(rng);
    return out;
  }

  template <class Rng>
  std::vector<const JointTransition*> sample(std::size_t batch, Rng& rng) const {
    std::vector<const JointTransition*> out;
    for (std::size_t s : sample_slots(batch, rng)) out.push_back(&items_[s]);
    return out;
  }

  const JointTransition& slot(std::size_t s) const { return items_[s]; }
  std::uint64_t slot_seq(std::size_t s) const { return seqs_[s]; }

 private:
  std::size_t physical(std::size_t i) const {
    if (items_.size() < capacity_) return i;
    return static_cast<std::size_t>((inserted_ + i) % capacity_);
  }

  std::size_t capacity_;
  EnvSpec spec_;
  std::vector<JointTransition> items_;
  std::vector<std::uint64_t> seqs_;
  std::uint64_t inserted_ = 0;
};

}  // namespace hymarl

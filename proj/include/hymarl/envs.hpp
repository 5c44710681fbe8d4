#pragma once

// Cooperative stochastic games with hybrid actions: a shared reward, one
// observation per agent and a global state for centralized training.
//
// Two toy games ship with the library:
//   hybrid_climb  one-step two-agent matrix game with continuous parameters;
//                 uncoordinated discrete choices are punished.
//   catch_target  two agents move on [-1,1]^2 and must Tag simultaneously
//                 near a fixed point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hymarl/errors.hpp"
#include "hymarl/hybrid_action.hpp"

namespace hymarl {

using EnvParams = std::map<std::string, double>;

struct EnvSpec {
  std::string name;
  int num_agents = 1;
  std::vector<int> obs_dims;
  int state_dim = 1;
  std::vector<HybridActionSpace> action_spaces;
  int horizon = 1;
  EnvParams params;

  /// Canonical text form; everything that affects dynamics or shapes.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "env=" << name << ";N=" << num_agents << ";H=" << horizon << ";state=" << state_dim << ";obs=";
    for (int d : obs_dims) os << d << ',';
    os << ";actions=";
    for (const auto& sp : action_spaces) {
      os << '[';
      for (int k = 0; k < sp.num_actions(); ++k) {
        os << '(';
        for (const Bound& b : sp.bounds(k)) os << b.low << ':' << b.high << ',';
        os << ')';
      }
      os << ']';
    }
    os << ";params=";
    for (const auto& [k, v] : params) os << k << '=' << v << ',';
    return os.str();
  }

  std::uint64_t hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : describe()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }
};

struct TimeStep {
  std::vector<std::vector<double>> obs;
  std::vector<double> state;
};

struct StepResult {
  std::vector<std::vector<double>> obs;
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
  /// The episode ended only because the horizon ran out.
  bool truncated = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual TimeStep reset(std::uint64_t seed) = 0;
  virtual StepResult step(const std::vector<HybridAction>& joint) = 0;
  /// Whether the episode that just ended counts as a success.
  virtual bool episode_success() const = 0;

 protected:
  void check_joint(const std::vector<HybridAction>& joint) const {
    const auto& s = spec();
    if (static_cast<int>(joint.size()) != s.num_agents) {
      throw InvalidAction("expected " + std::to_string(s.num_agents) + " actions, got " +
                          std::to_string(joint.size()));
    }
    for (int i = 0; i < s.num_agents; ++i) {
      if (auto v = validate(joint[static_cast<std::size_t>(i)], s.action_spaces[static_cast<std::size_t>(i)])) {
        throw InvalidAction("agent " + std::to_string(i) + ": " + v->message);
      }
    }
  }
};

namespace detail {

inline double take_param(EnvParams& remaining, const std::string& key, double fallback) {
  auto it = remaining.find(key);
  if (it == remaining.end()) return fallback;
  const double v = it->second;
  remaining.erase(it);
  return v;
}

inline void reject_leftovers(const EnvParams& remaining, const std::string& env) {
  if (!remaining.empty()) throw ConfigError("unknown parameter '" + remaining.begin()->first + "' for env " + env);
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Two agents, one step. Action A (index 0) has no parameters, action B
/// (index 1) has one parameter in [-1, 1].
///   both B: 1 - (x1 - t1)^2 - (x2 - t2)^2
///   both A: both_a_reward
///   mixed:  mismatch_reward
class HybridClimb final : public Env {
 public:
  static constexpr int kActionA = 0;
  static constexpr int kActionB = 1;

  explicit HybridClimb(EnvParams overrides = {}) {
    EnvParams rest = overrides;
    target1_ = detail::take_param(rest, "target1", 0.6);
    target2_ = detail::take_param(rest, "target2", -0.4);
    both_a_ = detail::take_param(rest, "both_a_reward", 0.5);
    mismatch_ = detail::take_param(rest, "mismatch_reward", -0.1);
    success_margin_ = detail::take_param(rest, "success_margin", 0.01);
    detail::reject_leftovers(rest, "hybrid_climb");

    spec_.name = "hybrid_climb";
    spec_.num_agents = 2;
    spec_.obs_dims = {1, 1};
    spec_.state_dim = 1;
    const HybridActionSpace space({{}, {Bound{-1.0, 1.0}}});
    spec_.action_spaces = {space, space};
    spec_.horizon = 1;
    spec_.params = {{"target1", target1_},
                    {"target2", target2_},
                    {"both_a_reward", both_a_},
                    {"mismatch_reward", mismatch_},
                    {"success_margin", success_margin_}};
  }

  const EnvSpec& spec() const override { return spec_; }

  TimeStep reset(std::uint64_t) override {
    done_ = false;
    last_reward_ = 0.0;
    return {{{0.0}, {0.0}}, {0.0}};
  }

  double reward(const std::vector<HybridAction>& joint) const {
    const int k1 = joint[0].k;
    const int k2 = joint[1].k;
    if (k1 == kActionB && k2 == kActionB) {
      const double d1 = joint[0].x[0] - target1_;
      const double d2 = joint[1].x[0] - target2_;
      return 1.0 - d1 * d1 - d2 * d2;
    }
    if (k1 == kActionA && k2 == kActionA) return both_a_;
    return mismatch_;
  }

  StepResult step(const std::vector<HybridAction>& joint) override {
    if (done_) throw std::logic_error("hybrid_climb: step after episode end");
    check_joint(joint);
    last_reward_ = reward(joint);
    done_ = true;
    return {{{0.0}, {0.0}}, {0.0}, last_reward_, true};
  }

  bool episode_success() const override { return done_ && last_reward_ >= 1.0 - success_margin_; }

 private:
  EnvSpec spec_;
  double target1_, target2_, both_a_, mismatch_, success_margin_;
  bool done_ = false;
  double last_reward_ = 0.0;
};

// ---------------------------------------------------------------------------

/// Two agents on [-1,1]^2. Action Move (index 0) carries (dx, dy) in
/// [-max_move, max_move]^2; action Tag (index 1) carries nothing and keeps the
/// agent in place. Each step pays minus the mean agent-to-target distance
/// (after moving); when both agents Tag within `tag_radius` of the target the
/// episode ends with `tag_bonus` added. Start positions are drawn uniformly
/// from a `start_lattice` x `start_lattice` grid over the square.
///
/// Observation of each agent: own position, other position, target.
/// Global state: agent 0 position, agent 1 position, target.
class CatchTarget final : public Env {
 public:
  static constexpr int kMove = 0;
  static constexpr int kTag = 1;

  explicit CatchTarget(EnvParams overrides = {}) {
    EnvParams rest = overrides;
    target_ = {detail::take_param(rest, "target_x", 0.5), detail::take_param(rest, "target_y", 0.5)};
    horizon_ = static_cast<int>(detail::take_param(rest, "horizon", 25));
    tag_radius_ = detail::take_param(rest, "tag_radius", 0.2);
    tag_bonus_ = detail::take_param(rest, "tag_bonus", 5.0);
    max_move_ = detail::take_param(rest, "max_move", 0.25);
    start_lattice_ = static_cast<int>(detail::take_param(rest, "start_lattice", 9));
    detail::reject_leftovers(rest, "catch_target");
    if (horizon_ < 1) throw ConfigError("catch_target: horizon must be >= 1");
    if (start_lattice_ < 2) throw ConfigError("catch_target: start_lattice must be >= 2");
    if (max_move_ <= 0.0) throw ConfigError("catch_target: max_move must be > 0");

    spec_.name = "catch_target";
    spec_.num_agents = 2;
    spec_.obs_dims = {6, 6};
    spec_.state_dim = 6;
    const HybridActionSpace space({{Bound{-max_move_, max_move_}, Bound{-max_move_, max_move_}}, {}});
    spec_.action_spaces = {space, space};
    spec_.horizon = horizon_;
    spec_.params = {{"target_x", target_[0]},   {"target_y", target_[1]},     {"horizon", static_cast<double>(horizon_)},
                    {"tag_radius", tag_radius_}, {"tag_bonus", tag_bonus_},   {"max_move", max_move_},
                    {"start_lattice", static_cast<double>(start_lattice_)}};
  }

  const EnvSpec& spec() const override { return spec_; }

  TimeStep reset(std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> cell(0, start_lattice_ - 1);
    for (auto& p : pos_) {
      p[0] = lattice_point(cell(rng));
      p[1] = lattice_point(cell(rng));
    }
    t_ = 0;
    done_ = false;
    success_ = false;
    return {observations(), state()};
  }

  /// Places the agents directly; used by tests and the oracle.
  void set_positions(std::array<double, 2> a, std::array<double, 2> b) {
    pos_ = {a, b};
    t_ = 0;
    done_ = false;
    success_ = false;
  }

  StepResult step(const std::vector<HybridAction>& joint) override {
    if (done_) throw std::logic_error("catch_target: step after episode end");
    check_joint(joint);
    const Transition tr = transition(pos_, joint[0], joint[1]);
    pos_ = tr.next;
    ++t_;
    success_ = tr.tagged;
    done_ = tr.tagged || t_ >= horizon_;
    return {observations(), state(), tr.reward, done_, done_ && !tr.tagged};
  }

  bool episode_success() const override { return success_; }

  struct Transition {
    std::array<std::array<double, 2>, 2> next;
    double reward;
    bool tagged;
  };

  /// Deterministic dynamics shared by `step` and the oracle.
  Transition transition(const std::array<std::array<double, 2>, 2>& pos, const HybridAction& a0,
                        const HybridAction& a1) const {
    Transition tr{pos, 0.0, false};
    const HybridAction* acts[2] = {&a0, &a1};
    for (int i = 0; i < 2; ++i) {
      if (acts[i]->k == kMove) {
        for (int d = 0; d < 2; ++d) {
          tr.next[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] =
              std::clamp(pos[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)] + acts[i]->x[static_cast<std::size_t>(d)], -1.0, 1.0);
        }
      }
    }
    const double d0 = distance(tr.next[0]);
    const double d1 = distance(tr.next[1]);
    tr.reward = -0.5 * (d0 + d1);
    if (a0.k == kTag && a1.k == kTag && d0 <= tag_radius_ && d1 <= tag_radius_) {
      tr.reward += tag_bonus_;
      tr.tagged = true;
    }
    return tr;
  }

  double distance(const std::array<double, 2>& p) const { return std::hypot(p[0] - target_[0], p[1] - target_[1]); }
  double lattice_point(int i) const { return -1.0 + 2.0 * i / (start_lattice_ - 1); }
  int start_lattice() const { return start_lattice_; }
  int horizon() const { return horizon_; }
  double max_move() const { return max_move_; }
  const std::array<std::array<double, 2>, 2>& positions() const { return pos_; }

 private:
  std::vector<std::vector<double>> observations() const {
    std::vector<std::vector<double>> obs(2);
    for (int i = 0; i < 2; ++i) {
      const auto& me = pos_[static_cast<std::size_t>(i)];
      const auto& other = pos_[static_cast<std::size_t>(1 - i)];
      obs[static_cast<std::size_t>(i)] = {me[0], me[1], other[0], other[1], target_[0], target_[1]};
    }
    return obs;
  }
  std::vector<double> state() const {
    return {pos_[0][0], pos_[0][1], pos_[1][0], pos_[1][1], target_[0], target_[1]};
  }

  EnvSpec spec_;
  std::array<double, 2> target_{};
  int horizon_ = 25;
  double tag_radius_ = 0.2;
  double tag_bonus_ = 5.0;
  double max_move_ = 0.25;
  int start_lattice_ = 9;
  std::array<std::array<double, 2>, 2> pos_{};
  int t_ = 0;
  bool done_ = false;
  bool success_ = false;
};

// ---------------------------------------------------------------------------

inline std::vector<std::string> env_names() { return {"hybrid_climb", "catch_target"}; }

inline std::unique_ptr<Env> make_env(const std::string& name, const EnvParams& overrides = {}) {
  if (name == "hybrid_climb") return std::make_unique<HybridClimb>(overrides);
  if (name == "catch_target") return std::make_unique<CatchTarget>(overrides);
  throw ConfigError("unknown environment '" + name + "'");
}

}  // namespace hymarl

#pragma once

// Parameterized (discrete-continuous) action spaces: a discrete choice k in
// [0, K) together with a bounded real vector whose length depends on k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hymarl/errors.hpp"

namespace hymarl {

struct Bound {
  double low = -1.0;
  double high = 1.0;
  bool operator==(const Bound&) const = default;
};

class HybridActionSpace {
 public:
  HybridActionSpace() = default;

  /// `bounds[k]` lists one (low, high) pair per parameter of action k.
  explicit HybridActionSpace(std::vector<std::vector<Bound>> bounds) : bounds_(std::move(bounds)) {
    if (bounds_.empty()) throw ShapeError("action space needs at least one discrete action");
    for (const auto& per_k : bounds_) {
      for (const Bound& b : per_k) {
        if (!(b.low < b.high)) throw ShapeError("action bound must satisfy low < high");
      }
    }
  }

  int num_actions() const { return static_cast<int>(bounds_.size()); }
  int param_dim(int k) const { return static_cast<int>(bounds_.at(static_cast<std::size_t>(k)).size()); }
  const std::vector<Bound>& bounds(int k) const { return bounds_.at(static_cast<std::size_t>(k)); }

  int total_param_dim() const {
    int n = 0;
    for (const auto& b : bounds_) n += static_cast<int>(b.size());
    return n;
  }
  int max_param_dim() const {
    int n = 0;
    for (const auto& b : bounds_) n = std::max(n, static_cast<int>(b.size()));
    return n;
  }
  /// Offset of action k's parameters inside the concatenation of all K blocks.
  int param_offset(int k) const {
    int off = 0;
    for (int j = 0; j < k; ++j) off += param_dim(j);
    return off;
  }

  bool operator==(const HybridActionSpace&) const = default;

 private:
  std::vector<std::vector<Bound>> bounds_;
};

struct HybridAction {
  int k = 0;
  std::vector<double> x;
  bool operator==(const HybridAction&) const = default;
};

struct ActionViolation {
  enum class Kind { index_out_of_range, dim_mismatch, bound_violation };
  Kind kind;
  int coordinate = -1;
  std::string message;
};

/// Returns the first violation, or nothing when `a` belongs to `space`.
inline std::optional<ActionViolation> validate(const HybridAction& a, const HybridActionSpace& space) {
  using K = ActionViolation::Kind;
  if (a.k < 0 || a.k >= space.num_actions()) {
    return ActionViolation{K::index_out_of_range, -1,
                           "discrete action " + std::to_string(a.k) + " outside [0, " +
                               std::to_string(space.num_actions()) + ")"};
  }
  const auto& b = space.bounds(a.k);
  if (a.x.size() != b.size()) {
    return ActionViolation{K::dim_mismatch, -1,
                           "action " + std::to_string(a.k) + " takes " + std::to_string(b.size()) +
                               " parameters, got " + std::to_string(a.x.size())};
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double v = a.x[i];
    if (!(v >= b[i].low && v <= b[i].high)) {
      return ActionViolation{K::bound_violation, static_cast<int>(i),
                             "parameter " + std::to_string(i) + " = " + std::to_string(v) + " outside [" +
                                 std::to_string(b[i].low) + ", " + std::to_string(b[i].high) + "]"};
    }
  }
  return std::nullopt;
}

/// Affine map from (-1, 1) onto [low, high].
inline double scale_to_bound(double t, const Bound& b) { return b.low + (b.high - b.low) * (t + 1.0) * 0.5; }

inline std::vector<double> squash(std::span<const double> raw, std::span<const Bound> bounds) {
  if (raw.size() != bounds.size()) throw ShapeError("squash: length mismatch");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = scale_to_bound(std::tanh(raw[i]), bounds[i]);
  return out;
}

/// Greedy index with the lowest index winning ties.
inline int argmax(std::span<const double> q) {
  if (q.empty()) throw ShapeError("argmax of an empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(q.size()); ++i) {
    if (q[static_cast<std::size_t>(i)] > q[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

template <class Rng>
int epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng) {
  if (q.empty()) throw ShapeError("epsilon_greedy: empty value vector");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  // No draw at all when epsilon is 0, so greedy selection never touches rng.
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(q.size()) - 1);
      return pick(rng);
    }
  }
  return argmax(q);
}

// ---------------------------------------------------------------------------
// Exploration

enum class NoiseKind { gaussian, ornstein_uhlenbeck };

struct LinearSchedule {
  double start = 1.0;
  double end = 0.05;
  long decay_steps = 1;

  double at(long step) const {
    if (decay_steps <= 0 || step >= decay_steps) return end;
    const double frac = static_cast<double>(std::max(step, 0L)) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
  }
};

struct ExplorationConfig {
  LinearSchedule epsilon{1.0, 0.05, 1};
  NoiseKind noise = NoiseKind::gaussian;
  LinearSchedule sigma{0.3, 0.05, 1};
  double ou_theta = 0.15;

  void validate() const {
    for (double e : {epsilon.start, epsilon.end}) {
      if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilon schedule must stay in [0, 1]");
    }
    if (sigma.start < 0.0 || sigma.end < 0.0) throw ConfigError("sigma must be >= 0");
    if (ou_theta < 0.0) throw ConfigError("OU theta must be >= 0");
  }
};

/// Exploration amounts at one point in training; zeros mean greedy.
struct ExplorationLevel {
  double epsilon = 0.0;
  double sigma = 0.0;
  static ExplorationLevel greedy() { return {}; }
};

/// Ornstein-Uhlenbeck state for one agent; sized lazily to the parameter
/// vector it perturbs.
struct NoiseState {
  std::vector<double> ou;
  void reset() { std::fill(ou.begin(), ou.end(), 0.0); }
};

/// Adds noise, then clamps into bounds. sigma == 0 is the identity and
/// consumes no randomness.
template <class Rng>
std::vector<double> perturb(std::span<const double> x, NoiseKind kind, double sigma, double ou_theta,
                            std::span<const Bound> bounds, Rng& rng, NoiseState& state) {
  if (x.size() != bounds.size()) throw ShapeError("perturb: length mismatch");
  std::vector<double> out(x.begin(), x.end());
  if (sigma <= 0.0 || x.empty()) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  if (kind == NoiseKind::ornstein_uhlenbeck) {
    if (state.ou.size() < x.size()) state.ou.resize(x.size(), 0.0);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    double n;
    if (kind == NoiseKind::gaussian) {
      n = sigma * normal(rng);
    } else {
      state.ou[i] += -ou_theta * state.ou[i] + sigma * normal(rng);
      n = state.ou[i];
    }
    out[i] = std::clamp(out[i] + n, bounds[i].low, bounds[i].high);
  }
  return out;
}

}  // namespace hymarl

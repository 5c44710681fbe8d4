#pragma once

// Exhaustive reference values for the built-in games. Continuous parameters
// are restricted to a G-point grid per dimension; multi-step games are solved
// by finite-horizon value iteration on a position lattice with multilinear
// interpolation between lattice nodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hymarl/envs.hpp"

namespace hymarl {

struct OracleOptions {
  int grid = 5;
  int lattice = 9;
  double gamma = 1.0;
  double tolerance = 1e-6;
  /// Upper bound on (states x joint actions) evaluated per sweep.
  double node_budget = 5e8;
};

struct OracleResult {
  double value = 0.0;
  int sweeps = 0;
  double nodes_per_sweep = 0.0;
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

/// Every (k, x) with x on the per-dimension grid.
inline std::vector<HybridAction> grid_actions(const HybridActionSpace& space, int grid) {
  std::vector<HybridAction> out;
  for (int k = 0; k < space.num_actions(); ++k) {
    const auto& b = space.bounds(k);
    std::vector<std::vector<double>> axes;
    for (const Bound& bd : b) axes.push_back(linspace(bd.low, bd.high, grid));
    std::vector<std::size_t> idx(b.size(), 0);
    while (true) {
      HybridAction a{k, {}};
      for (std::size_t d = 0; d < b.size(); ++d) a.x.push_back(axes[d][idx[d]]);
      out.push_back(std::move(a));
      std::size_t d = 0;
      while (d < idx.size() && ++idx[d] == static_cast<std::size_t>(grid)) idx[d++] = 0;
      if (d == idx.size()) break;
    }
  }
  return out;
}

inline OracleResult oracle_hybrid_climb(const HybridClimb& env, const OracleOptions& opt) {
  if (opt.grid < 2) throw ConfigError("oracle grid must be >= 2");
  const auto a0 = grid_actions(env.spec().action_spaces[0], opt.grid);
  const auto a1 = grid_actions(env.spec().action_spaces[1], opt.grid);
  const double nodes = static_cast<double>(a0.size()) * static_cast<double>(a1.size());
  if (nodes > opt.node_budget) throw ConfigError("oracle: joint action grid exceeds node budget");
  double best = -INFINITY;
  for (const auto& x : a0) {
    for (const auto& y : a1) best = std::max(best, env.reward({x, y}));
  }
  return {best, 1, nodes};
}

inline OracleResult oracle_catch_target(const CatchTarget& env, const OracleOptions& opt) {
  if (opt.grid < 2) throw ConfigError("oracle grid must be >= 2");
  if (opt.lattice < 2) throw ConfigError("oracle lattice must be >= 2");
  const int L = opt.lattice;
  const auto actions = grid_actions(env.spec().action_spaces[0], opt.grid);
  const int A = static_cast<int>(actions.size());
  const std::size_t cells = static_cast<std::size_t>(L) * static_cast<std::size_t>(L);
  const std::size_t states = cells * cells;
  const double nodes = static_cast<double>(states) * A * A;
  if (nodes > opt.node_budget) {
    throw ConfigError("oracle: " + std::to_string(states) + " states x " + std::to_string(A * A) +
                      " joint actions exceeds node budget");
  }
  const double spacing = 2.0 / (L - 1);
  auto coord = [&](int i) { return -1.0 + spacing * i; };

  auto cell_pos = [&](std::size_t c) {
    return std::array<double, 2>{coord(static_cast<int>(c / static_cast<std::size_t>(L))),
                                 coord(static_cast<int>(c % static_cast<std::size_t>(L)))};
  };

  // Bilinear stencil of a single agent's successor position.
  struct Stencil {
    std::array<std::size_t, 4> cell;
    std::array<double, 4> w;
    std::array<double, 2> pos;
  };
  auto stencil = [&](std::array<double, 2> p) {
    Stencil s{};
    s.pos = p;
    int base[2];
    double frac[2];
    for (int d = 0; d < 2; ++d) {
      const double u = (std::clamp(p[static_cast<std::size_t>(d)], -1.0, 1.0) + 1.0) / spacing;
      base[d] = std::clamp(static_cast<int>(std::floor(u)), 0, L - 2);
      frac[d] = u - base[d];
    }
    for (int c = 0; c < 4; ++c) {
      const int dx = c & 1;
      const int dy = (c >> 1) & 1;
      s.cell[static_cast<std::size_t>(c)] =
          static_cast<std::size_t>(base[0] + dx) * static_cast<std::size_t>(L) + static_cast<std::size_t>(base[1] + dy);
      s.w[static_cast<std::size_t>(c)] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]);
    }
    return s;
  };

  // succ[cell * A + a]: where one agent ends up from a lattice cell.
  std::vector<Stencil> succ(cells * static_cast<std::size_t>(A));
  for (std::size_t c = 0; c < cells; ++c) {
    const std::array<double, 2> p = cell_pos(c);
    for (int a = 0; a < A; ++a) {
      std::array<double, 2> q = p;
      const auto& act = actions[static_cast<std::size_t>(a)];
      if (act.k == CatchTarget::kMove) {
        for (int d = 0; d < 2; ++d) {
          q[static_cast<std::size_t>(d)] = std::clamp(p[static_cast<std::size_t>(d)] + act.x[static_cast<std::size_t>(d)], -1.0, 1.0);
        }
      }
      succ[c * static_cast<std::size_t>(A) + static_cast<std::size_t>(a)] = stencil(q);
    }
  }

  std::vector<double> v(states, 0.0), next(states, 0.0);
  OracleResult res;
  res.nodes_per_sweep = nodes;
  for (int sweep = 1; sweep <= env.horizon(); ++sweep) {
    double delta = 0.0;
    for (std::size_t c0 = 0; c0 < cells; ++c0) {
      for (std::size_t c1 = 0; c1 < cells; ++c1) {
        const std::array<std::array<double, 2>, 2> pos{cell_pos(c0), cell_pos(c1)};
        double best = -INFINITY;
        for (int a0 = 0; a0 < A; ++a0) {
          const Stencil& s0 = succ[c0 * static_cast<std::size_t>(A) + static_cast<std::size_t>(a0)];
          for (int a1 = 0; a1 < A; ++a1) {
            const Stencil& s1 = succ[c1 * static_cast<std::size_t>(A) + static_cast<std::size_t>(a1)];
            const auto tr = env.transition(pos, actions[static_cast<std::size_t>(a0)], actions[static_cast<std::size_t>(a1)]);
            double q = tr.reward;
            if (!tr.tagged && opt.gamma > 0.0) {
              double cont = 0.0;
              for (int i = 0; i < 4; ++i) {
                if (s0.w[static_cast<std::size_t>(i)] == 0.0) continue;
                for (int j = 0; j < 4; ++j) {
                  cont += s0.w[static_cast<std::size_t>(i)] * s1.w[static_cast<std::size_t>(j)] *
                          v[s0.cell[static_cast<std::size_t>(i)] * cells + s1.cell[static_cast<std::size_t>(j)]];
                }
              }
              q += opt.gamma * cont;
            }
            best = std::max(best, q);
          }
        }
        next[c0 * cells + c1] = best;
        delta = std::max(delta, std::abs(best - v[c0 * cells + c1]));
      }
    }
    v.swap(next);
    res.sweeps = sweep;
    if (delta < opt.tolerance) break;
  }

  // Expected value under the reset distribution (uniform start lattice).
  const int S = env.start_lattice();
  double total = 0.0;
  std::vector<Stencil> starts;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) starts.push_back(stencil({env.lattice_point(i), env.lattice_point(j)}));
  }
  for (const auto& s0 : starts) {
    for (const auto& s1 : starts) {
      double val = 0.0;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          val += s0.w[static_cast<std::size_t>(i)] * s1.w[static_cast<std::size_t>(j)] *
                 v[s0.cell[static_cast<std::size_t>(i)] * cells + s1.cell[static_cast<std::size_t>(j)]];
        }
      }
      total += val;
    }
  }
  res.value = total / static_cast<double>(starts.size() * starts.size());
  return res;
}

inline OracleResult oracle_value(const Env& env, const OracleOptions& opt) {
  if (const auto* hc = dynamic_cast<const HybridClimb*>(&env)) return oracle_hybrid_climb(*hc, opt);
  if (const auto* ct = dynamic_cast<const CatchTarget*>(&env)) return oracle_catch_target(*ct, opt);
  throw ConfigError("no oracle for environment '" + env.spec().name + "'");
}

}  // namespace hymarl

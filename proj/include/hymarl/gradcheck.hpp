#pragma once

// Finite-difference verification of every training loss in the library, on
// small seeded random models and synthetic batches.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hymarl/batch.hpp"
#include "hymarl/fd_check.hpp"
#include "hymarl/mahhqn.hpp"
#include "hymarl/mapqn.hpp"
#include "hymarl/pdqn.hpp"

namespace hymarl {

/// A synthetic game shape: N agents with K discrete actions whose parameter
/// dimensions cycle through {2, 0, 1, 3}.
inline EnvSpec synthetic_spec(int num_agents, int num_actions, int obs_dim = 3, int state_dim = 4) {
  static const int dims[] = {2, 0, 1, 3};
  EnvSpec s;
  s.name = "synthetic";
  s.num_agents = num_agents;
  s.state_dim = state_dim;
  s.horizon = 10;
  for (int i = 0; i < num_agents; ++i) {
    s.obs_dims.push_back(obs_dim);
    std::vector<std::vector<Bound>> bounds;
    for (int k = 0; k < num_actions; ++k) {
      std::vector<Bound> b;
      for (int d = 0; d < dims[(k + i) % 4]; ++d) b.push_back(Bound{-1.0 + 0.5 * d, 1.0 + d});
      bounds.push_back(b);
    }
    s.action_spaces.emplace_back(bounds);
  }
  return s;
}

inline std::vector<double> random_vector(int n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& e : v) e = g(rng);
  return v;
}

inline HybridAction random_action(const HybridActionSpace& sp, Rng& rng) {
  HybridAction a;
  a.k = std::uniform_int_distribution<int>(0, sp.num_actions() - 1)(rng);
  for (const Bound& b : sp.bounds(a.k)) a.x.push_back(std::uniform_real_distribution<double>(b.low, b.high)(rng));
  return a;
}

inline std::vector<JointTransition> random_transitions(const EnvSpec& spec, int n, Rng& rng) {
  std::vector<JointTransition> out;
  std::bernoulli_distribution done(0.3);
  for (int t = 0; t < n; ++t) {
    JointTransition tr;
    tr.state = random_vector(spec.state_dim, rng);
    tr.next_state = random_vector(spec.state_dim, rng);
    for (int i = 0; i < spec.num_agents; ++i) {
      tr.obs.push_back(random_vector(spec.obs_dims[static_cast<std::size_t>(i)], rng));
      tr.next_obs.push_back(random_vector(spec.obs_dims[static_cast<std::size_t>(i)], rng));
      tr.actions.push_back(random_action(spec.action_spaces[static_cast<std::size_t>(i)], rng));
    }
    tr.reward = std::normal_distribution<double>(0.0, 1.0)(rng);
    tr.done = done(rng);
    out.push_back(std::move(tr));
  }
  return out;
}

inline JointBatch make_batch(const std::vector<JointTransition>& items, const EnvSpec& spec) {
  std::vector<const JointTransition*> ptrs;
  for (const auto& t : items) ptrs.push_back(&t);
  return JointBatch::from(ptrs, spec);
}

/// Adds N(0, scale^2) noise to every parameter; used to make target
/// networks differ from their live counterparts.
inline void jitter(Mlp& net, double scale, Rng& rng) {
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : net.params().values()) v += g(rng);
}

/// Checks `loss(model)` (which accumulates into the listed nets) against
/// central differences over the concatenated parameters of those nets.
template <class Model>
FdReport check_model_loss(const Model& model, const std::function<std::vector<Mlp*>(Model&)>& nets,
                          const std::function<double(Model&)>& loss, const FdOptions& opt, bool flip_sign = false) {
  Model work = model;
  std::vector<double> point, analytic;
  for (Mlp* n : nets(work)) n->zero_grad();
  loss(work);
  for (Mlp* n : nets(work)) {
    point.insert(point.end(), n->params().values().begin(), n->params().values().end());
    analytic.insert(analytic.end(), n->grad().begin(), n->grad().end());
  }
  if (flip_sign) {
    for (double& g : analytic) g = -g;
  }
  auto f = [&](std::span<const double> p) {
    Model probe = model;
    std::size_t off = 0;
    for (Mlp* n : nets(probe)) {
      auto& v = n->params().values();
      std::copy(p.begin() + static_cast<std::ptrdiff_t>(off), p.begin() + static_cast<std::ptrdiff_t>(off + v.size()), v.begin());
      off += v.size();
    }
    return loss(probe);
  };
  return fd_check(point, f, analytic, opt);
}

struct GradcheckEntry {
  std::string name;
  std::string description;
  FdReport report;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool all_passed() const {
    for (const auto& e : entries) {
      if (!e.report.passed) return false;
    }
    return !entries.empty();
  }
};

struct GradcheckOptions {
  std::uint64_t seed = 7;
  int batch = 6;
  FdOptions fd{};
  /// Name of a loss whose analytic gradient gets its sign flipped.
  std::string inject_fault;
};

inline std::vector<std::string> gradcheck_loss_names() {
  return {"pdqn.q_loss",      "pdqn.policy_loss",      "mapqn.joint_td_loss", "mapqn.policy_loss",
          "mahhqn.high_loss", "mahhqn.low_policy_loss", "mahhqn.low_critic_loss"};
}

inline ModelConfig gradcheck_model_config() {
  ModelConfig cfg;
  cfg.hidden = {6, 5};
  cfg.hidden_activation = Activation::elu;
  cfg.mix_width = 4;
  cfg.gamma = 0.9;
  return cfg;
}

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt = {}) {
  Rng rng(opt.seed);
  const EnvSpec spec = synthetic_spec(2, 3);
  const ModelConfig cfg = gradcheck_model_config();
  const auto items = random_transitions(spec, opt.batch, rng);
  const JointBatch b = make_batch(items, spec);
  GradcheckReport rep;
  auto flip = [&](const std::string& name) { return opt.inject_fault == name; };
  auto add = [&](const std::string& name, const std::string& what, FdReport r) {
    rep.entries.push_back({name, what, r});
  };

  {
    IndependentPdqn m(spec, cfg, rng);
    for (auto& [n, net] : m.named_nets()) {
      if (n.find("target") != std::string::npos) jitter(*net, 0.1, rng);
    }
    using M = IndependentPdqn;
    add("pdqn.q_loss", "1/2 (Q(s,k,x_k) - y)^2 w.r.t. value net",
        check_model_loss<M>(
            m, [](M& x) { return std::vector<Mlp*>{&x.agent(0).q()}; },
            [&](M& x) { return x.agent(0).q_loss(b.obs[0], b.k[0], b.x[0], b.reward, b.next_obs[0], b.done); },
            opt.fd, flip("pdqn.q_loss")));
    add("pdqn.policy_loss", "-sum_k Q(s,k,mu_k(s)) w.r.t. parameter policy",
        check_model_loss<M>(
            m, [](M& x) { return std::vector<Mlp*>{&x.agent(0).mu()}; },
            [&](M& x) { return x.agent(0).policy_loss(b.obs[0]); }, opt.fd, flip("pdqn.policy_loss")));
  }
  {
    Mapqn m(spec, cfg, rng);
    for (auto& [n, net] : m.named_nets()) {
      if (n.find("target") != std::string::npos) jitter(*net, 0.1, rng);
    }
    using M = Mapqn;
    auto value_nets = [](M& x) {
      std::vector<Mlp*> out;
      for (int i = 0; i < x.num_agents(); ++i) out.push_back(&x.agent(i).q());
      for (auto& [n, p] : x.mixer().nets()) out.push_back(p);
      return out;
    };
    add("mapqn.joint_td_loss", "(y_tot - Q_tot)^2 w.r.t. value nets and mixer",
        check_model_loss<M>(m, value_nets, [&](M& x) { return x.joint_td_loss(b); }, opt.fd,
                            flip("mapqn.joint_td_loss")));
    add("mapqn.policy_loss", "-Q_tot^s(s, Q_hat) w.r.t. all parameter policies",
        check_model_loss<M>(
            m,
            [](M& x) {
              std::vector<Mlp*> out;
              for (int i = 0; i < x.num_agents(); ++i) out.push_back(&x.agent(i).mu());
              return out;
            },
            [&](M& x) { return x.policy_loss(b); }, opt.fd, flip("mapqn.policy_loss")));
  }
  {
    Mahhqn m(spec, cfg, rng);
    for (auto& [n, net] : m.named_nets()) {
      if (n.find("target") != std::string::npos) jitter(*net, 0.1, rng);
    }
    using M = Mahhqn;
    add("mahhqn.high_loss", "(y_tot^h - Q_tot^h(s, k, chi))^2 w.r.t. high-level nets and mixer",
        check_model_loss<M>(
            m,
            [](M& x) {
              std::vector<Mlp*> out;
              for (int i = 0; i < x.num_agents(); ++i) out.push_back(&x.agent(i).qh);
              for (auto& [n, p] : x.mixer().nets()) out.push_back(p);
              return out;
            },
            [&](M& x) { return x.high_loss(b); }, opt.fd, flip("mahhqn.high_loss")));
    for (int i = 0; i < m.num_agents(); ++i) {
      add("mahhqn.low_policy_loss", "-Q^l_i(s, .., mu_i(o_hat_i), ..) w.r.t. agent " + std::to_string(i) + " policy",
          check_model_loss<M>(
              m, [i](M& x) { return std::vector<Mlp*>{&x.agent(i).mu}; },
              [&, i](M& x) { return x.low_policy_loss(i, b); }, opt.fd, flip("mahhqn.low_policy_loss")));
      add("mahhqn.low_critic_loss", "(y_i - Q^l_i)^2 w.r.t. agent " + std::to_string(i) + " critic",
          check_model_loss<M>(
              m, [i](M& x) { return std::vector<Mlp*>{&x.agent(i).critic}; },
              [&, i](M& x) { return x.low_critic_loss(i, b); }, opt.fd, flip("mahhqn.low_critic_loss")));
    }
  }
  return rep;
}

}  // namespace hymarl

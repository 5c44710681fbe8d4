#pragma once

// Multi-agent parameterized Q-networks: one P-DQN head per agent whose
// chosen-action values are combined by a state-conditioned monotone mixing
// network. Because the mixer is monotone, each agent's greedy choice is also
// the greedy joint choice, so execution stays decentralized.

#include <string>
#include <utility>
#include <vector>

#include "hymarl/mixing.hpp"
#include "hymarl/pdqn.hpp"

namespace hymarl {

class Mapqn final : public Learner {
 public:
  Mapqn(const EnvSpec& spec, const ModelConfig& cfg, Rng& rng) : gamma_(cfg.gamma), clip_(cfg.grad_clip) {
    for (int i = 0; i < spec.num_agents; ++i) {
      agents_.emplace_back(spec.obs_dims[static_cast<std::size_t>(i)], spec.action_spaces[static_cast<std::size_t>(i)],
                           cfg, rng);
    }
    mixer_ = MixingNetwork(spec.num_agents, spec.state_dim, cfg.mix_width, rng, cfg.lr_mixing);
    mixer_target_ = mixer_;
  }

  std::string algo() const override { return "mapqn"; }
  int num_agents() const override { return static_cast<int>(agents_.size()); }
  PdqnAgent& agent(int i) { return agents_[static_cast<std::size_t>(i)]; }
  const PdqnAgent& agent(int i) const { return agents_[static_cast<std::size_t>(i)]; }
  MixingNetwork& mixer() { return mixer_; }
  MixingNetwork& mixer_target() { return mixer_target_; }

  /// Q_tot(s, q) for q given as N x B.
  RowVec mix(const Mat& state, const Mat& q, bool target = false) const {
    return (target ? mixer_target_ : mixer_).forward(state, q);
  }

  HybridAction select_agent(int i, std::span<const double> obs_i, const ActParams& act, Rng& rng,
                            NoiseState& noise) override {
    return agents_[static_cast<std::size_t>(i)].select(obs_i, act, rng, noise, stats_);
  }

  /// Per-agent maxima of the target values, stacked N x B. With a monotone
  /// mixer this is the joint maximiser over discrete actions.
  Mat target_agent_maxima(const JointBatch& b) const {
    Mat m(num_agents(), b.size);
    for (std::size_t i = 0; i < agents_.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = agents_[i].target_max(b.next_obs[i]);
    return m;
  }

  /// y_tot = r + gamma (1 - done) Q_tot'(s', per-agent maxima).
  RowVec td_target(const JointBatch& b) const {
    const RowVec boot = mixer_target_.forward(b.next_state, target_agent_maxima(b));
    return b.reward + gamma_ * ((1.0 - b.done.array()) * boot.array()).matrix();
  }

  /// mean (y_tot - Q_tot(s, k, x))^2. Accumulates into every value net and
  /// the mixing hypernetworks.
  double joint_td_loss(const JointBatch& b) {
    const double B = static_cast<double>(b.size);
    const RowVec y = td_target(b);
    std::vector<PdqnAgent::ChosenQ> chosen;
    Mat q(num_agents(), b.size);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      chosen.push_back(agents_[i].chosen_q(b.obs[i], b.k[i], b.x[i]));
      q.row(static_cast<Eigen::Index>(i)) = chosen.back().value;
    }
    MixingNetwork::Trace tr;
    const RowVec qtot = mixer_.forward(b.state, q, &tr);
    const RowVec err = qtot - y;
    const double loss = err.squaredNorm() / B;
    if (!std::isfinite(loss)) throw NumericError("mapqn joint TD loss is not finite", -1);
    const Mat dq = mixer_.backward(tr, (2.0 / B) * err, true);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      agents_[i].backward_chosen(chosen[i], b.k[i], dq.row(static_cast<Eigen::Index>(i)));
    }
    return loss;
  }

  /// Q_hat_i = sum_k Q_i(o_i, k, mu_k(o_i)) for one observation.
  double qhat(int i, std::span<const double> obs_i) const {
    const auto& a = agents_[static_cast<std::size_t>(i)];
    const Mat o = Eigen::Map<const Vec>(obs_i.data(), static_cast<Eigen::Index>(obs_i.size()));
    return a.qhat(o)(0);
  }

  /// -mean Q_tot^s with Q_tot^s = f(s, Q_hat_1..Q_hat_N). Gradients reach
  /// only the parameter policies; value nets and mixer are held fixed.
  double policy_loss(const JointBatch& b) {
    const double B = static_cast<double>(b.size);
    std::vector<ForwardTrace> mu_tr(agents_.size()), q_tr(agents_.size());
    Mat qhat(num_agents(), b.size);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      const Mat params = agents_[i].policy_params(b.obs[i], false, &mu_tr[i]);
      qhat.row(static_cast<Eigen::Index>(i)) = agents_[i].q_values(b.obs[i], params, false, &q_tr[i]).colwise().sum();
    }
    MixingNetwork::Trace tr;
    const RowVec qs = mixer_.forward(b.state, qhat, &tr);
    const double loss = -qs.sum() / B;
    const Mat dqhat = mixer_.backward(tr, RowVec::Constant(b.size, -1.0 / B), false);
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      auto& a = agents_[i];
      if (!a.has_policy()) continue;
      const Mat d_q = Mat::Ones(a.num_actions(), 1) * dqhat.row(static_cast<Eigen::Index>(i));
      const Mat d_in = a.q().backward(q_tr[i], d_q, false);
      a.backward_policy(mu_tr[i], d_in.bottomRows(a.total_param_dim()));
    }
    return loss;
  }

  /// Gradient step on every policy with value nets and mixer fixed.
  double policy_update(const JointBatch& b) {
    const double loss = policy_loss(b);
    for (auto& a : agents_) a.step_policy();
    return loss;
  }

  LossMap update(const JointBatch& b) override {
    const double td = joint_td_loss(b);
    for (auto& a : agents_) a.step_value();
    mixer_.step(clip_);
    const double pl = policy_update(b);
    return {{"value", td}, {"policy", pl}};
  }

  void sync_targets(double tau) override {
    for (auto& a : agents_) a.sync_targets(tau);
    mixer_target_.track(mixer_, tau);
  }

  std::vector<std::pair<std::string, Mlp*>> named_nets() override {
    std::vector<std::pair<std::string, Mlp*>> out;
    for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i].append_nets("agent" + std::to_string(i) + ".", out);
    for (auto& [n, p] : mixer_.nets()) out.emplace_back("mix." + n, p);
    for (auto& [n, p] : mixer_target_.nets()) out.emplace_back("mix_target." + n, p);
    return out;
  }

 private:
  double gamma_ = 0.95;
  double clip_ = 0.0;
  std::vector<PdqnAgent> agents_;
  MixingNetwork mixer_, mixer_target_;
};

}  // namespace hymarl

#pragma once

// Multi-agent hierarchical hybrid Q-networks.
//
// High level: each agent scores its discrete actions from its own
// observation; a monotone mixer conditioned on [global state || chi] combines
// the chosen values, where chi stacks every agent's low-level parameters.
// Low level: each agent's policy maps [observation || one-hot(k)] to the
// parameters of k, trained against a centralized critic that sees the global
// state and every agent's (one-hot k, zero-padded x).
//
// Only the low level trains during the first `warmup_updates` updates.
//
// Low-level critic input layout, fixed for the life of the model:
//   [ s | onehot(k_1) | xpad_1 | ... | onehot(k_N) | xpad_N ]
// where xpad_i has the agent's largest parameter dimension.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hymarl/learner.hpp"
#include "hymarl/mixing.hpp"

namespace hymarl {

class Mahhqn final : public Learner {
 public:
  struct Agent {
    int obs_dim = 0;
    HybridActionSpace space;
    Mlp qh, qh_target;
    Mlp mu, mu_target;
    Mlp critic, critic_target;

    int num_actions() const { return space.num_actions(); }
    int pad_dim() const { return space.max_param_dim(); }
  };

  Mahhqn(const EnvSpec& spec, const ModelConfig& cfg, Rng& rng)
      : gamma_(cfg.gamma), clip_(cfg.grad_clip), warmup_(cfg.warmup_updates), state_dim_(spec.state_dim) {
    if (warmup_ < 0) throw ConfigError("warm-up must be >= 0");
    int chi_dim = 0;
    int critic_in = spec.state_dim;
    for (int i = 0; i < spec.num_agents; ++i) {
      const auto& sp = spec.action_spaces[static_cast<std::size_t>(i)];
      critic_in += sp.num_actions() + sp.max_param_dim();
      chi_dim += sp.max_param_dim();
    }
    for (int i = 0; i < spec.num_agents; ++i) {
      Agent a;
      a.obs_dim = spec.obs_dims[static_cast<std::size_t>(i)];
      a.space = spec.action_spaces[static_cast<std::size_t>(i)];
      const int K = a.num_actions();
      a.qh = Mlp(MlpSpec::make(a.obs_dim, cfg.hidden, K, cfg.hidden_activation, Activation::identity), rng,
                 cfg.lr_value);
      a.qh_target = a.qh;
      if (a.pad_dim() > 0) {
        a.mu = Mlp(MlpSpec::make(a.obs_dim + K, cfg.hidden, a.pad_dim(), cfg.hidden_activation, Activation::tanh), rng,
                   cfg.lr_policy);
        a.mu_target = a.mu;
      }
      a.critic = Mlp(MlpSpec::make(critic_in, cfg.hidden, 1, cfg.hidden_activation, Activation::identity), rng,
                     cfg.lr_value);
      a.critic_target = a.critic;
      agents_.push_back(std::move(a));
    }
    mixer_ = MixingNetwork(spec.num_agents, spec.state_dim + chi_dim, cfg.mix_width, rng, cfg.lr_mixing);
    mixer_target_ = mixer_;
  }

  std::string algo() const override { return "mahhqn"; }
  int num_agents() const override { return static_cast<int>(agents_.size()); }
  Agent& agent(int i) { return agents_[static_cast<std::size_t>(i)]; }
  const Agent& agent(int i) const { return agents_[static_cast<std::size_t>(i)]; }
  MixingNetwork& mixer() { return mixer_; }
  MixingNetwork& mixer_target() { return mixer_target_; }

  long updates() const { return updates_; }
  long warmup() const { return warmup_; }
  bool in_warmup() const { return updates_ < warmup_; }

  // -------------------------------------------------------------------------
  // Building blocks

  /// [o || one-hot(k)] per column.
  static Mat obs_hat(const Mat& obs, const std::vector<int>& k, int num_actions) {
    Mat out = Mat::Zero(obs.rows() + num_actions, obs.cols());
    out.topRows(obs.rows()) = obs;
    for (Eigen::Index c = 0; c < obs.cols(); ++c) out(obs.rows() + k[static_cast<std::size_t>(c)], c) = 1.0;
    return out;
  }

  static std::vector<double> obs_hat(std::span<const double> obs, int k, int num_actions) {
    if (k < 0 || k >= num_actions) throw ShapeError("obs_hat: discrete action out of range");
    std::vector<double> out(obs.begin(), obs.end());
    out.resize(obs.size() + static_cast<std::size_t>(num_actions), 0.0);
    out[obs.size() + static_cast<std::size_t>(k)] = 1.0;
    return out;
  }

  /// Per-column affine map from tanh outputs to the bounds of action k;
  /// unused pad rows map to zero.
  struct Affine {
    Mat scale;
    Mat offset;
  };
  Affine affine_for(int i, const std::vector<int>& k) const {
    const Agent& a = agent(i);
    const auto B = static_cast<Eigen::Index>(k.size());
    Affine f{Mat::Zero(a.pad_dim(), B), Mat::Zero(a.pad_dim(), B)};
    for (Eigen::Index c = 0; c < B; ++c) {
      const auto& bounds = a.space.bounds(k[static_cast<std::size_t>(c)]);
      for (std::size_t d = 0; d < bounds.size(); ++d) {
        const double s = 0.5 * (bounds[d].high - bounds[d].low);
        f.scale(static_cast<Eigen::Index>(d), c) = s;
        f.offset(static_cast<Eigen::Index>(d), c) = bounds[d].low + s;
      }
    }
    return f;
  }

  /// x_i = mu_i(obs_hat(o_i, k_i)), padded: pad_dim x B.
  Mat low_params(int i, const Mat& obs, const std::vector<int>& k, bool target = false,
                 ForwardTrace* tr = nullptr) const {
    const Agent& a = agent(i);
    if (a.pad_dim() == 0) return Mat(0, obs.cols());
    const Mat t = (target ? a.mu_target : a.mu).forward(obs_hat(obs, k, a.num_actions()), tr);
    const Affine f = affine_for(i, k);
    return (t.array() * f.scale.array() + f.offset.array()).matrix();
  }

  /// chi = (x_1, ..., x_N) stacked, from live or target low-level policies.
  Mat compute_chi(const std::vector<Mat>& obs, const std::vector<std::vector<int>>& k, bool target) const {
    std::vector<Mat> parts;
    Eigen::Index rows = 0;
    for (int i = 0; i < num_agents(); ++i) {
      parts.push_back(low_params(i, obs[static_cast<std::size_t>(i)], k[static_cast<std::size_t>(i)], target));
      rows += parts.back().rows();
    }
    Mat chi(rows, obs.front().cols());
    Eigen::Index r = 0;
    for (const Mat& p : parts) {
      chi.middleRows(r, p.rows()) = p;
      r += p.rows();
    }
    return chi;
  }

  static Mat stack(const Mat& top, const Mat& bottom) {
    Mat out(top.rows() + bottom.rows(), top.cols());
    out.topRows(top.rows()) = top;
    out.bottomRows(bottom.rows()) = bottom;
    return out;
  }

  Mat high_values(int i, const Mat& obs, bool target = false, ForwardTrace* tr = nullptr) const {
    const Agent& a = agent(i);
    return (target ? a.qh_target : a.qh).forward(obs, tr);
  }

  static std::vector<int> column_argmax(const Mat& q) {
    std::vector<int> k(static_cast<std::size_t>(q.cols()));
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      k[static_cast<std::size_t>(c)] = argmax(std::span<const double>(q.col(c).data(), static_cast<std::size_t>(q.rows())));
    }
    return k;
  }

  /// Greedy next discrete actions from the high-level target nets.
  std::vector<std::vector<int>> target_greedy(const JointBatch& b) const {
    std::vector<std::vector<int>> k;
    for (int i = 0; i < num_agents(); ++i) k.push_back(column_argmax(high_values(i, b.next_obs[static_cast<std::size_t>(i)], true)));
    return k;
  }

  /// Offset of agent i's block inside the critic input.
  Eigen::Index critic_offset(int i) const {
    Eigen::Index off = state_dim_;
    for (int j = 0; j < i; ++j) off += agent(j).num_actions() + agent(j).pad_dim();
    return off;
  }

  Mat critic_input(const Mat& state, const std::vector<std::vector<int>>& k, const std::vector<Mat>& x) const {
    Eigen::Index rows = state_dim_;
    for (const auto& a : agents_) rows += a.num_actions() + a.pad_dim();
    Mat in = Mat::Zero(rows, state.cols());
    in.topRows(state_dim_) = state;
    for (int i = 0; i < num_agents(); ++i) {
      const Agent& a = agent(i);
      const Eigen::Index off = critic_offset(i);
      for (Eigen::Index c = 0; c < state.cols(); ++c) in(off + k[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], c) = 1.0;
      if (a.pad_dim() > 0) in.block(off + a.num_actions(), 0, a.pad_dim(), state.cols()) = x[static_cast<std::size_t>(i)];
    }
    return in;
  }

  // -------------------------------------------------------------------------
  // High level

  /// y^h = r + gamma (1 - done) Q_tot^h'([s' || chi'], per-agent target
  /// maxima). chi' comes from the low-level targets evaluated at the greedy
  /// high-level target actions, so it is fixed while maximising over k'.
  RowVec high_target(const JointBatch& b) const {
    const auto k_next = target_greedy(b);
    const Mat chi_next = compute_chi(b.next_obs, k_next, true);
    Mat maxima(num_agents(), b.size);
    for (int i = 0; i < num_agents(); ++i) {
      maxima.row(i) = high_values(i, b.next_obs[static_cast<std::size_t>(i)], true).colwise().maxCoeff();
    }
    const RowVec boot = mixer_target_.forward(stack(b.next_state, chi_next), maxima);
    return b.reward + gamma_ * ((1.0 - b.done.array()) * boot.array()).matrix();
  }

  /// mean (y^h - Q_tot^h([s || chi], Q^h_i(o_i)[k_i]))^2 with chi from the
  /// live low-level policies. Accumulates into every Q^h_i and the mixer.
  double high_loss(const JointBatch& b) {
    if (in_warmup()) {
      throw ScheduleError("high-level loss requested during warm-up (" + std::to_string(updates_) + " < " +
                          std::to_string(warmup_) + ")");
    }
    const double B = static_cast<double>(b.size);
    const RowVec y = high_target(b);
    const Mat chi = compute_chi(b.obs, b.k, false);
    std::vector<ForwardTrace> tr(agents_.size());
    Mat q(num_agents(), b.size);
    for (int i = 0; i < num_agents(); ++i) {
      const Mat qv = high_values(i, b.obs[static_cast<std::size_t>(i)], false, &tr[static_cast<std::size_t>(i)]);
      for (Eigen::Index c = 0; c < qv.cols(); ++c) q(i, c) = qv(b.k[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], c);
    }
    MixingNetwork::Trace mtr;
    const RowVec qtot = mixer_.forward(stack(b.state, chi), q, &mtr);
    const RowVec err = qtot - y;
    const double loss = err.squaredNorm() / B;
    if (!std::isfinite(loss)) throw NumericError("mahhqn high-level loss is not finite", -1);
    const Mat dq = mixer_.backward(mtr, (2.0 / B) * err, true);
    for (int i = 0; i < num_agents(); ++i) {
      Agent& a = agent(i);
      Mat d = Mat::Zero(a.num_actions(), b.size);
      for (Eigen::Index c = 0; c < d.cols(); ++c) d(b.k[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], c) = dq(i, c);
      a.qh.backward(tr[static_cast<std::size_t>(i)], d);
    }
    return loss;
  }

  // -------------------------------------------------------------------------
  // Low level

  /// y_i = r + gamma (1 - done) Q^l_i'(s', k', x') with k'_j greedy under
  /// the high-level targets and x'_j from the low-level target policies.
  RowVec low_target(int i, const JointBatch& b) const {
    const auto k_next = target_greedy(b);
    std::vector<Mat> x_next;
    for (int j = 0; j < num_agents(); ++j) {
      x_next.push_back(low_params(j, b.next_obs[static_cast<std::size_t>(j)], k_next[static_cast<std::size_t>(j)], true));
    }
    const RowVec boot = agent(i).critic_target.forward(critic_input(b.next_state, k_next, x_next));
    return b.reward + gamma_ * ((1.0 - b.done.array()) * boot.array()).matrix();
  }

  /// mean (y_i - Q^l_i(s, k, x))^2 on the stored joint action.
  double low_critic_loss(int i, const JointBatch& b) {
    const double B = static_cast<double>(b.size);
    const RowVec y = low_target(i, b);
    ForwardTrace tr;
    Agent& a = agent(i);
    const RowVec q = a.critic.forward(critic_input(b.state, b.k, b.x), &tr);
    const RowVec err = q - y;
    const double loss = err.squaredNorm() / B;
    if (!std::isfinite(loss)) throw NumericError("mahhqn low-level critic loss is not finite", -1);
    a.critic.backward(tr, (2.0 / B) * err);
    return loss;
  }

  /// -mean Q^l_i(s, ..., k_i, mu_i(obs_hat(o_i, k_i)), ...) with the other
  /// agents' actions taken from the batch. Accumulates into mu_i only.
  double low_policy_loss(int i, const JointBatch& b) {
    const double B = static_cast<double>(b.size);
    Agent& a = agent(i);
    ForwardTrace mu_tr, q_tr;
    std::vector<Mat> x = b.x;
    if (a.pad_dim() > 0) x[static_cast<std::size_t>(i)] = low_params(i, b.obs[static_cast<std::size_t>(i)], b.k[static_cast<std::size_t>(i)], false, &mu_tr);
    const RowVec q = a.critic.forward(critic_input(b.state, b.k, x), &q_tr);
    const double loss = -q.sum() / B;
    if (a.pad_dim() == 0) return loss;
    const Mat d_in = a.critic.backward(q_tr, RowVec::Constant(b.size, -1.0 / B), false);
    const Mat d_x = d_in.middleRows(critic_offset(i) + a.num_actions(), a.pad_dim());
    const Affine f = affine_for(i, b.k[static_cast<std::size_t>(i)]);
    a.mu.backward(mu_tr, d_x.cwiseProduct(f.scale));
    return loss;
  }

  double low_policy_update(int i, const JointBatch& b) {
    const double loss = low_policy_loss(i, b);
    Agent& a = agent(i);
    if (a.pad_dim() > 0) a.mu.step(clip_);
    return loss;
  }

  // -------------------------------------------------------------------------

  HybridAction select_agent(int i, std::span<const double> obs_i, const ActParams& act, Rng& rng,
                            NoiseState& noise) override {
    const Agent& a = agent(i);
    if (static_cast<int>(obs_i.size()) != a.obs_dim) throw ShapeError("mahhqn select: observation size mismatch");
    const Mat o = Eigen::Map<const Vec>(obs_i.data(), a.obs_dim);
    const Mat qv = a.qh.forward(o);
    stats_.q_values += static_cast<std::uint64_t>(a.num_actions());
    ++stats_.selections;
    const double eps = (act.training && in_warmup()) ? 1.0 : act.epsilon;
    const int k = epsilon_greedy(std::span<const double>(qv.data(), static_cast<std::size_t>(qv.size())), eps, rng);
    std::vector<double> x;
    if (a.pad_dim() > 0) {
      const Mat p = low_params(i, o, {k});
      ++stats_.policy_passes;
      ++stats_.param_blocks;
      x.assign(p.data(), p.data() + a.space.param_dim(k));
    }
    x = perturb(x, act.noise, act.sigma, act.ou_theta, a.space.bounds(k), rng, noise);
    return {k, std::move(x)};
  }

  LossMap update(const JointBatch& b) override {
    LossMap out;
    const bool train_high = !in_warmup();
    double critic = 0.0, policy = 0.0;
    for (int i = 0; i < num_agents(); ++i) {
      critic += low_critic_loss(i, b);
      agent(i).critic.step(clip_);
    }
    for (int i = 0; i < num_agents(); ++i) policy += low_policy_update(i, b);
    const double n = static_cast<double>(num_agents());
    out["low_critic"] = critic / n;
    out["low_policy"] = policy / n;
    if (train_high) {
      out["high"] = high_loss(b);
      for (auto& a : agents_) a.qh.step(clip_);
      mixer_.step(clip_);
    }
    ++updates_;
    return out;
  }

  /// High-level targets only move once the high level has trained.
  void sync_targets(double tau) override {
    for (auto& a : agents_) {
      if (a.pad_dim() > 0) a.mu_target.track(a.mu, tau);
      a.critic_target.track(a.critic, tau);
    }
    if (updates_ > warmup_) {
      for (auto& a : agents_) a.qh_target.track(a.qh, tau);
      mixer_target_.track(mixer_, tau);
    }
  }

  std::vector<const Mlp*> high_level_nets() const {
    std::vector<const Mlp*> out;
    for (const auto& a : agents_) {
      out.push_back(&a.qh);
      out.push_back(&a.qh_target);
    }
    for (const auto& [n, p] : mixer_.nets()) out.push_back(p);
    for (const auto& [n, p] : mixer_target_.nets()) out.push_back(p);
    return out;
  }
  std::uint64_t high_level_hash() const { return param_hash(high_level_nets()); }

  std::vector<std::pair<std::string, Mlp*>> named_nets() override {
    std::vector<std::pair<std::string, Mlp*>> out;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      const std::string p = "agent" + std::to_string(i) + ".";
      Agent& a = agents_[i];
      out.emplace_back(p + "qh", &a.qh);
      out.emplace_back(p + "qh_target", &a.qh_target);
      if (a.pad_dim() > 0) {
        out.emplace_back(p + "mu", &a.mu);
        out.emplace_back(p + "mu_target", &a.mu_target);
      }
      out.emplace_back(p + "critic", &a.critic);
      out.emplace_back(p + "critic_target", &a.critic_target);
    }
    for (auto& [n, p] : mixer_.nets()) out.emplace_back("high_mix." + n, p);
    for (auto& [n, p] : mixer_target_.nets()) out.emplace_back("high_mix_target." + n, p);
    return out;
  }

  /// Restores the update counter (checkpoints).
  void set_updates(long n) { updates_ = n; }

 private:
  double gamma_ = 0.95;
  double clip_ = 0.0;
  long warmup_ = 0;
  long updates_ = 0;
  int state_dim_ = 1;
  std::vector<Agent> agents_;
  MixingNetwork mixer_, mixer_target_;
};

}  // namespace hymarl

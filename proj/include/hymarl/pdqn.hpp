#pragma once

// Parameterized deep Q-learning for one agent, and the independent
// multi-agent baseline built from it.
//
// The value net sees [observation || parameters of all K actions] and emits
// K values, so one forward pass scores every discrete action. The parameter
// policy emits all K parameter blocks at once through a tanh output that is
// mapped affinely onto each coordinate's bounds.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hymarl/learner.hpp"

namespace hymarl {

class PdqnAgent {
 public:
  PdqnAgent() = default;

  PdqnAgent(int obs_dim, HybridActionSpace space, const ModelConfig& cfg, Rng& rng)
      : obs_dim_(obs_dim), space_(std::move(space)), gamma_(cfg.gamma), clip_(cfg.grad_clip) {
    const int K = space_.num_actions();
    const int P = space_.total_param_dim();
    q_ = Mlp(MlpSpec::make(obs_dim + P, cfg.hidden, K, cfg.hidden_activation, Activation::identity), rng,
             cfg.lr_value);
    q_target_ = q_;
    if (P > 0) {
      mu_ = Mlp(MlpSpec::make(obs_dim, cfg.hidden, P, cfg.hidden_activation, Activation::tanh), rng, cfg.lr_policy);
      mu_target_ = mu_;
    }
    scale_.resize(P);
    offset_.resize(P);
    for (int k = 0, r = 0; k < K; ++k) {
      for (const Bound& b : space_.bounds(k)) {
        scale_(r) = 0.5 * (b.high - b.low);
        offset_(r) = b.low + scale_(r);
        ++r;
      }
    }
  }

  int obs_dim() const { return obs_dim_; }
  int num_actions() const { return space_.num_actions(); }
  int total_param_dim() const { return space_.total_param_dim(); }
  bool has_policy() const { return total_param_dim() > 0; }
  const HybridActionSpace& space() const { return space_; }
  double gamma() const { return gamma_; }

  Mlp& q() { return q_; }
  Mlp& q_target() { return q_target_; }
  Mlp& mu() { return mu_; }
  Mlp& mu_target() { return mu_target_; }
  const Mlp& q() const { return q_; }
  const Mlp& mu() const { return mu_; }

  /// All K parameter blocks, in bounds: P x B.
  Mat policy_params(const Mat& obs, bool target = false, ForwardTrace* tr = nullptr) const {
    if (!has_policy()) return Mat(0, obs.cols());
    const Mat t = (target ? mu_target_ : mu_).forward(obs, tr);
    return ((t.array().colwise() * scale_.array()).colwise() + offset_.array()).matrix();
  }

  /// K x B action values for the given parameter blocks.
  Mat q_values(const Mat& obs, const Mat& params, bool target = false, ForwardTrace* tr = nullptr) const {
    Mat in(obs.rows() + params.rows(), obs.cols());
    in.topRows(obs.rows()) = obs;
    in.bottomRows(params.rows()) = params;
    return (target ? q_target_ : q_).forward(in, tr);
  }

  /// Live-policy parameters with the stored parameters of each sample's
  /// chosen action written over its own slot.
  Mat fill_params(const Mat& obs, const std::vector<int>& k, const Mat& x) const {
    Mat p = policy_params(obs);
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const int kc = k[static_cast<std::size_t>(c)];
      const int d = space_.param_dim(kc);
      if (d > 0) p.block(space_.param_offset(kc), c, d, 1) = x.block(0, c, d, 1);
    }
    return p;
  }

  /// max_k Q'(s', k, mu'_k(s')) per sample.
  RowVec target_max(const Mat& next_obs) const {
    const Mat qn = q_values(next_obs, policy_params(next_obs, true), true);
    return qn.colwise().maxCoeff();
  }

  /// sum_k Q(o, k, mu_k(o)) per sample.
  RowVec qhat(const Mat& obs) const { return q_values(obs, policy_params(obs)).colwise().sum(); }

  /// Chosen-action values Q(s, k, x_k) with their trace, for losses that
  /// push a gradient into the value net.
  struct ChosenQ {
    RowVec value;
    ForwardTrace trace;
  };
  ChosenQ chosen_q(const Mat& obs, const std::vector<int>& k, const Mat& x) const {
    ChosenQ out;
    const Mat qv = q_values(obs, fill_params(obs, k, x), false, &out.trace);
    out.value.resize(qv.cols());
    for (Eigen::Index c = 0; c < qv.cols(); ++c) out.value(c) = qv(k[static_cast<std::size_t>(c)], c);
    return out;
  }

  /// Pushes dL/dQ(s, k, x_k) into the value net's gradient.
  void backward_chosen(const ChosenQ& cq, const std::vector<int>& k, const RowVec& d_value) {
    Mat d = Mat::Zero(num_actions(), d_value.cols());
    for (Eigen::Index c = 0; c < d.cols(); ++c) d(k[static_cast<std::size_t>(c)], c) = d_value(c);
    q_.backward(cq.trace, d);
  }

  /// 1/2 mean (Q(s,k,x_k) - y)^2 with y = r + gamma (1 - done) max_k Q'(s', k,
  /// mu'_k(s')). Accumulates into the value net's gradient.
  double q_loss(const Mat& obs, const std::vector<int>& k, const Mat& x, const RowVec& reward, const Mat& next_obs,
                const RowVec& done) {
    const double B = static_cast<double>(obs.cols());
    const RowVec y = reward + gamma_ * ((1.0 - done.array()) * target_max(next_obs).array()).matrix();
    const ChosenQ cq = chosen_q(obs, k, x);
    const RowVec err = cq.value - y;
    const double loss = 0.5 * err.squaredNorm() / B;
    if (!std::isfinite(loss)) throw NumericError("pdqn q_loss is not finite", -1);
    backward_chosen(cq, k, err / B);
    return loss;
  }

  /// -mean sum_k Q(s, k, mu_k(s)) with the value net held fixed.
  /// Accumulates into the policy's gradient.
  double policy_loss(const Mat& obs) {
    const double B = static_cast<double>(obs.cols());
    ForwardTrace mu_tr, q_tr;
    const Mat params = policy_params(obs, false, &mu_tr);
    const Mat qv = q_values(obs, params, false, &q_tr);
    const double loss = -qv.sum() / B;
    if (!has_policy()) return loss;
    const Mat d_in = q_.backward(q_tr, Mat::Constant(qv.rows(), qv.cols(), -1.0 / B), false);
    backward_policy(mu_tr, d_in.bottomRows(total_param_dim()));
    return loss;
  }

  /// Chains dL/dparams (P x B, in bounds) through the affine map and the
  /// policy net.
  void backward_policy(const ForwardTrace& mu_tr, const Mat& d_params) {
    const Mat d_t = (d_params.array().colwise() * scale_.array()).matrix();
    mu_.backward(mu_tr, d_t);
  }

  HybridAction select(std::span<const double> obs, const ActParams& act, Rng& rng, NoiseState& noise,
                      SelectionStats& stats) const {
    if (static_cast<int>(obs.size()) != obs_dim_) throw ShapeError("pdqn select: observation size mismatch");
    const Mat o = Eigen::Map<const Vec>(obs.data(), obs_dim_);
    const Mat params = policy_params(o);
    if (has_policy()) {
      ++stats.policy_passes;
      stats.param_blocks += static_cast<std::uint64_t>(num_actions());
    }
    const Mat qv = q_values(o, params);
    stats.q_values += static_cast<std::uint64_t>(num_actions());
    ++stats.selections;
    const int k = epsilon_greedy(std::span<const double>(qv.data(), static_cast<std::size_t>(qv.size())),
                                 act.epsilon, rng);
    const int d = space_.param_dim(k);
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] = params(space_.param_offset(k) + j, 0);
    x = perturb(x, act.noise, act.sigma, act.ou_theta, space_.bounds(k), rng, noise);
    return {k, std::move(x)};
  }

  void step_value() { q_.step(clip_); }
  void step_policy() {
    if (has_policy()) mu_.step(clip_);
  }

  void sync_targets(double tau) {
    q_target_.track(q_, tau);
    if (has_policy()) mu_target_.track(mu_, tau);
  }

  void append_nets(const std::string& prefix, std::vector<std::pair<std::string, Mlp*>>& out) {
    out.emplace_back(prefix + "q", &q_);
    out.emplace_back(prefix + "q_target", &q_target_);
    if (has_policy()) {
      out.emplace_back(prefix + "mu", &mu_);
      out.emplace_back(prefix + "mu_target", &mu_target_);
    }
  }

 private:
  int obs_dim_ = 0;
  HybridActionSpace space_;
  double gamma_ = 0.95;
  double clip_ = 0.0;
  Mlp q_, q_target_, mu_, mu_target_;
  Vec scale_, offset_;
};

/// N private P-DQN agents. Each reads only its own observation slice of the
/// shared joint replay data (plus the shared reward).
class IndependentPdqn final : public Learner {
 public:
  IndependentPdqn(const EnvSpec& spec, const ModelConfig& cfg, Rng& rng) {
    for (int i = 0; i < spec.num_agents; ++i) {
      agents_.emplace_back(spec.obs_dims[static_cast<std::size_t>(i)], spec.action_spaces[static_cast<std::size_t>(i)],
                           cfg, rng);
    }
  }

  std::string algo() const override { return "pdqn"; }
  int num_agents() const override { return static_cast<int>(agents_.size()); }
  PdqnAgent& agent(int i) { return agents_[static_cast<std::size_t>(i)]; }

  HybridAction select_agent(int i, std::span<const double> obs_i, const ActParams& act, Rng& rng,
                            NoiseState& noise) override {
    return agents_[static_cast<std::size_t>(i)].select(obs_i, act, rng, noise, stats_);
  }

  LossMap update(const JointBatch& b) override {
    double value = 0.0, policy = 0.0;
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      auto& a = agents_[i];
      value += a.q_loss(b.obs[i], b.k[i], b.x[i], b.reward, b.next_obs[i], b.done);
      a.step_value();
      policy += a.policy_loss(b.obs[i]);
      a.step_policy();
    }
    const double n = static_cast<double>(agents_.size());
    return {{"value", value / n}, {"policy", policy / n}};
  }

  void sync_targets(double tau) override {
    for (auto& a : agents_) a.sync_targets(tau);
  }

  std::vector<std::pair<std::string, Mlp*>> named_nets() override {
    std::vector<std::pair<std::string, Mlp*>> out;
    for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i].append_nets("agent" + std::to_string(i) + ".", out);
    return out;
  }

 private:
  std::vector<PdqnAgent> agents_;
};

}  // namespace hymarl

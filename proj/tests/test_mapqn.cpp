#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace hymarl;
using namespace hymarl::testing;

namespace {

// Enumerates every joint discrete action of N agents with K actions each.
template <class F>
void for_each_joint(int n, int k, F&& f) {
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    f(idx);
    int i = 0;
    while (i < n && ++idx[static_cast<std::size_t>(i)] == k) idx[static_cast<std::size_t>(i++)] = 0;
    if (i == n) return;
  }
}

ModelConfig mix_config(int width) {
  ModelConfig cfg = small_config();
  cfg.mix_width = width;
  return cfg;
}

}  // namespace

TEST(Mixing, ConstructedSumOfInputs) {
  Rng rng(1);
  MixingNetwork mix(2, 3, 1, rng, 1e-3);
  make_linear_mixer(mix, {1.0, 1.0}, 0.0, 1.0, 0.0);
  const Mat s = Mat::Random(3, 1);
  Mat q(2, 1);
  q << 1.0, 2.0;
  EXPECT_DOUBLE_EQ(mix.forward(s, q)(0), 3.0);
}

TEST(Mixing, ZeroInputsZeroBiases) {
  Rng rng(2);
  MixingNetwork mix(3, 2, 1, rng, 1e-3);
  randomize(mix.hyper_w1(), rng);
  randomize(mix.hyper_w2(), rng);
  make_constant(mix.hyper_b1(), {0.0});
  make_constant(mix.hyper_b2(), {0.0});
  EXPECT_DOUBLE_EQ(mix.forward(Mat::Random(2, 1), Mat::Zero(3, 1))(0), 0.0);
}

TEST(Mixing, EffectiveWeightsNonNegativeAndMonotone) {
  Rng rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    MixingNetwork mix(3, 4, 5, rng, 1e-3);
    Mat s(4, 1), q(3, 1);
    for (Eigen::Index i = 0; i < 4; ++i) s(i) = g(rng);
    for (Eigen::Index i = 0; i < 3; ++i) q(i) = g(rng);
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-6;
      Mat qp = q, qm = q;
      qp(i) += h;
      qm(i) -= h;
      EXPECT_GE((mix.forward(s, qp)(0) - mix.forward(s, qm)(0)) / (2 * h), -1e-8);
    }
    MixingNetwork::Trace tr;
    mix.forward(s, q, &tr);
    const Mat dq = mix.backward(tr, RowVec::Ones(1), false);
    EXPECT_GE(dq.minCoeff(), 0.0);
  }
}

TEST(Mixing, InputGradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    MixingNetwork mix(2, 3, 4, rng, 1e-3);
    Mat s = Mat::Random(3, 2), q = Mat::Random(2, 2) * 3.0;
    MixingNetwork::Trace tr;
    mix.forward(s, q, &tr);
    const Mat dq = mix.backward(tr, RowVec::Ones(2), false);
    std::vector<double> p(q.data(), q.data() + q.size());
    const auto rep = fd_check(
        p,
        [&](std::span<const double> v) {
          return mix.forward(s, Eigen::Map<const Mat>(v.data(), 2, 2)).sum();
        },
        std::vector<double>(dq.data(), dq.data() + dq.size()), FdOptions{});
    EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  }
}

TEST(Mixing, ShapeErrors) {
  Rng rng(5);
  MixingNetwork mix(2, 3, 4, rng, 1e-3);
  EXPECT_THROW(mix.forward(Mat::Zero(3, 1), Mat::Zero(3, 1)), ShapeError);
  EXPECT_THROW(mix.forward(Mat::Zero(2, 1), Mat::Zero(2, 1)), ShapeError);
}

TEST(MapqnSelect, SingleAgentReducesToPdqn) {
  const EnvSpec spec = synthetic_spec(1, 3);
  Rng r1(21), r2(21);
  Mapqn joint(spec, small_config(), r1);
  IndependentPdqn solo(spec, small_config(), r2);
  Rng a(3), b(3);
  std::vector<NoiseState> na, nb;
  ActParams act;
  act.epsilon = 0.3;
  act.sigma = 0.2;
  for (int t = 0; t < 50; ++t) {
    const std::vector<std::vector<double>> o{random_vector(3, a)};
    b = a;
    EXPECT_EQ(joint.select_joint(o, act, a, na), solo.select_joint(o, act, b, nb));
  }
}

TEST(MapqnSelect, GreedyIsDeterministic) {
  const EnvSpec spec = synthetic_spec(3, 4);
  Rng rng(22);
  Mapqn m(spec, small_config(), rng);
  const std::vector<std::vector<double>> o{random_vector(3, rng), random_vector(3, rng), random_vector(3, rng)};
  Rng a(0), b(0);
  std::vector<NoiseState> na, nb;
  EXPECT_EQ(m.select_joint(o, ActParams::greedy(), a, na), m.select_joint(o, ActParams::greedy(), b, nb));
}

TEST(MapqnSelect, DecentralizedArgmaxIsJointArgmax) {
  const EnvSpec spec = synthetic_spec(3, 4);
  int violations = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rng rng(seed);
    Mapqn m(spec, mix_config(6), rng);
    Mat s(spec.state_dim, 1);
    for (Eigen::Index i = 0; i < s.rows(); ++i) s(i) = std::normal_distribution<double>(0, 1)(rng);
    std::vector<std::vector<double>> obs;
    std::vector<Mat> q;
    for (int i = 0; i < 3; ++i) {
      obs.push_back(random_vector(3, rng));
      const Mat o = column(obs.back());
      q.push_back(m.agent(i).q_values(o, m.agent(i).policy_params(o)));
    }
    std::vector<int> best;
    double best_v = -INFINITY;
    for_each_joint(3, 4, [&](const std::vector<int>& k) {
      Mat qi(3, 1);
      for (int i = 0; i < 3; ++i) qi(i) = q[static_cast<std::size_t>(i)](k[static_cast<std::size_t>(i)], 0);
      const double v = m.mix(s, qi)(0);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    });
    Rng sel(0);
    std::vector<NoiseState> noise;
    const auto joint = m.select_joint(obs, ActParams::greedy(), sel, noise);
    for (int i = 0; i < 3; ++i) violations += joint[static_cast<std::size_t>(i)].k != best[static_cast<std::size_t>(i)];
  }
  EXPECT_EQ(violations, 0);
}

TEST(MapqnSelect, InstrumentationCountsAllParameterBlocks) {
  const EnvSpec spec = synthetic_spec(3, 4);
  Rng rng(23);
  Mapqn m(spec, small_config(), rng);
  std::vector<NoiseState> noise;
  const std::vector<std::vector<double>> o{random_vector(3, rng), random_vector(3, rng), random_vector(3, rng)};
  m.select_joint(o, ActParams::greedy(), rng, noise);
  EXPECT_EQ(m.stats().policy_passes, 3u);
  EXPECT_EQ(m.stats().param_blocks, 12u);
  EXPECT_EQ(m.stats().q_values, 12u);
}

TEST(MapqnTd, GammaZeroTargetIsReward) {
  const EnvSpec spec = synthetic_spec(2, 3);
  Rng rng(24);
  Mapqn m(spec, small_config(0.0), rng);
  const auto items = random_transitions(spec, 5, rng);
  const JointBatch b = make_batch(items, spec);
  EXPECT_EQ(m.td_target(b), b.reward);
}

TEST(MapqnTd, DoneRemovesBootstrap) {
  const EnvSpec spec = synthetic_spec(2, 3);
  Rng rng(25);
  Mapqn m(spec, small_config(0.9), rng);
  const JointBatch b = single_batch(spec, rng, 0.7, true);
  EXPECT_EQ(m.td_target(b)(0), 0.7);
  const JointBatch c = single_batch(spec, rng, 0.7, false);
  EXPECT_NE(m.td_target(c)(0), 0.7);
}

TEST(MapqnTd, PerAgentMaxEqualsJointMax) {
  const EnvSpec spec = synthetic_spec(2, 3);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Mapqn m(spec, small_config(0.9), rng);
    for (auto& [n, net] : m.named_nets()) {
      if (n.find("target") != std::string::npos) jitter(*net, 0.3, rng);
    }
    const JointBatch b = single_batch(spec, rng, 0.25, false);
    std::vector<Mat> q;
    for (int i = 0; i < 2; ++i) {
      const auto& a = m.agent(i);
      const Mat& o = b.next_obs[static_cast<std::size_t>(i)];
      q.push_back(a.q_values(o, a.policy_params(o, true), true));
    }
    double best = -INFINITY;
    for_each_joint(2, 3, [&](const std::vector<int>& k) {
      Mat qi(2, 1);
      qi << q[0](k[0], 0), q[1](k[1], 0);
      best = std::max(best, m.mix(b.next_state, qi, true)(0));
    });
    EXPECT_NEAR(m.td_target(b)(0), 0.25 + 0.9 * best, 1e-10);
  }
}

TEST(MapqnTd, GradientMatchesFiniteDifferences) {
  const EnvSpec spec = synthetic_spec(2, 3);
  for (std::uint64_t s = 0; s < 4; ++s) {
    Rng rng(60 + s);
    Mapqn m(spec, small_config(), rng);
    const auto items = random_transitions(spec, 5, rng);
    const JointBatch b = make_batch(items, spec);
    const auto rep = check_model_loss<Mapqn>(
        m,
        [](Mapqn& x) {
          std::vector<Mlp*> out{&x.agent(0).q(), &x.agent(1).q()};
          for (auto& [n, p] : x.mixer().nets()) out.push_back(p);
          return out;
        },
        [&](Mapqn& x) { return x.joint_td_loss(b); }, FdOptions{});
    EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  }
}

TEST(MapqnQhat, CraftedSum) {
  const HybridActionSpace sp({{Bound{-1, 1}}, {}, {Bound{0, 1}}});
  EnvSpec spec = synthetic_spec(1, 3);
  spec.action_spaces = {sp};
  Rng rng(26);
  Mapqn m(spec, small_config(), rng);
  make_constant(m.agent(0).q(), {1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(m.qhat(0, std::vector<double>{0.5, -0.5, 1.0}), 6.0);
}

TEST(MapqnQhat, SingleActionIsItsValue) {
  EnvSpec spec = synthetic_spec(1, 1);
  Rng rng(27);
  Mapqn m(spec, small_config(), rng);
  const std::vector<double> o{0.1, 0.2, 0.3};
  const Mat oc = column(o);
  const auto& a = m.agent(0);
  EXPECT_EQ(m.qhat(0, o), a.q_values(oc, a.policy_params(oc))(0, 0));
}

TEST(MapqnQhat, MatchesTermByTermAccumulation) {
  const EnvSpec spec = synthetic_spec(1, 4);
  Rng rng(28);
  for (int t = 0; t < 20; ++t) {
    Mapqn m(spec, small_config(), rng);
    const std::vector<double> o = random_vector(3, rng);
    const auto& a = m.agent(0);
    // Evaluate each discrete action separately through forward() on the
    // full input vector.
    const Mat p = a.policy_params(column(o));
    std::vector<double> in = o;
    in.insert(in.end(), p.data(), p.data() + p.size());
    const Vec out = forward(a.q().spec(), a.q().params(), std::span<const double>(in));
    double manual = 0.0;
    for (int k = 0; k < 4; ++k) manual += out(k);
    EXPECT_NEAR(m.qhat(0, o), manual, 1e-12);
  }
}

TEST(MapqnPolicy, ZeroLearningRateLeavesPolicyUnchanged) {
  const EnvSpec spec = synthetic_spec(2, 3);
  ModelConfig cfg = small_config();
  cfg.lr_policy = 0.0;
  Rng rng(29);
  Mapqn m(spec, cfg, rng);
  const auto before = snapshot(m.agent(0).mu());
  const auto items = random_transitions(spec, 4, rng);
  m.policy_update(make_batch(items, spec));
  EXPECT_EQ(snapshot(m.agent(0).mu()), before);
}

TEST(MapqnPolicy, ValueAndMixingParametersFixed) {
  const EnvSpec spec = synthetic_spec(2, 3);
  Rng rng(30);
  Mapqn m(spec, small_config(), rng);
  std::vector<std::vector<double>> before;
  for (int i = 0; i < 2; ++i) before.push_back(snapshot(m.agent(i).q()));
  for (auto& [n, p] : m.mixer().nets()) before.push_back(snapshot(*p));
  const auto mu0 = snapshot(m.agent(0).mu());
  const auto items = random_transitions(spec, 4, rng);
  m.policy_update(make_batch(items, spec));
  std::vector<std::vector<double>> after;
  for (int i = 0; i < 2; ++i) after.push_back(snapshot(m.agent(i).q()));
  for (auto& [n, p] : m.mixer().nets()) after.push_back(snapshot(*p));
  EXPECT_EQ(before, after);
  EXPECT_NE(snapshot(m.agent(0).mu()), mu0);
}

TEST(MapqnPolicy, GradientMatchesFiniteDifferences) {
  const EnvSpec spec = synthetic_spec(3, 4);
  for (std::uint64_t s = 0; s < 4; ++s) {
    Rng rng(70 + s);
    Mapqn m(spec, small_config(), rng);
    const auto items = random_transitions(spec, 4, rng);
    const JointBatch b = make_batch(items, spec);
    const auto rep = check_model_loss<Mapqn>(
        m,
        [](Mapqn& x) {
          std::vector<Mlp*> out;
          for (int i = 0; i < 3; ++i) out.push_back(&x.agent(i).mu());
          return out;
        },
        [&](Mapqn& x) { return x.policy_loss(b); }, FdOptions{});
    EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  }
}

TEST(MapqnTargets, SyncCoversMixer) {
  const EnvSpec spec = synthetic_spec(2, 3);
  Rng rng(31);
  Mapqn m(spec, small_config(), rng);
  randomize(m.mixer().hyper_w1(), rng);
  EXPECT_NE(snapshot(m.mixer().hyper_w1()), snapshot(m.mixer_target().hyper_w1()));
  m.sync_targets(1.0);
  EXPECT_EQ(snapshot(m.mixer().hyper_w1()), snapshot(m.mixer_target().hyper_w1()));
}

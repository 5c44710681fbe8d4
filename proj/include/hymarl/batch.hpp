#pragma once

#include <cstddef>
#include <vector>

#include "hymarl/diffcore.hpp"
#include "hymarl/envs.hpp"
#include "hymarl/replay.hpp"

namespace hymarl {

/// A sampled minibatch laid out column-wise for the learners. Continuous
/// parameters are zero-padded to each agent's largest parameter dimension.
struct JointBatch {
  int size = 0;
  Mat state;
  Mat next_state;
  std::vector<Mat> obs;
  std::vector<Mat> next_obs;
  std::vector<std::vector<int>> k;
  std::vector<Mat> x;
  RowVec reward;
  RowVec done;

  int num_agents() const { return static_cast<int>(obs.size()); }

  static JointBatch from(const std::vector<const JointTransition*>& items, const EnvSpec& spec) {
    JointBatch b;
    const auto B = static_cast<Eigen::Index>(items.size());
    const auto N = static_cast<std::size_t>(spec.num_agents);
    b.size = static_cast<int>(B);
    b.state.resize(spec.state_dim, B);
    b.next_state.resize(spec.state_dim, B);
    b.reward.resize(B);
    b.done.resize(B);
    for (std::size_t i = 0; i < N; ++i) {
      b.obs.emplace_back(spec.obs_dims[i], B);
      b.next_obs.emplace_back(spec.obs_dims[i], B);
      b.k.emplace_back(static_cast<std::size_t>(B), 0);
      b.x.push_back(Mat::Zero(spec.action_spaces[i].max_param_dim(), B));
    }
    for (Eigen::Index c = 0; c < B; ++c) {
      const JointTransition& t = *items[static_cast<std::size_t>(c)];
      b.state.col(c) = Eigen::Map<const Vec>(t.state.data(), spec.state_dim);
      b.next_state.col(c) = Eigen::Map<const Vec>(t.next_state.data(), spec.state_dim);
      b.reward(c) = t.reward;
      b.done(c) = t.done ? 1.0 : 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        b.obs[i].col(c) = Eigen::Map<const Vec>(t.obs[i].data(), spec.obs_dims[i]);
        b.next_obs[i].col(c) = Eigen::Map<const Vec>(t.next_obs[i].data(), spec.obs_dims[i]);
        b.k[i][static_cast<std::size_t>(c)] = t.actions[i].k;
        for (std::size_t d = 0; d < t.actions[i].x.size(); ++d) b.x[i](static_cast<Eigen::Index>(d), c) = t.actions[i].x[d];
      }
    }
    return b;
  }
};

}  // namespace hymarl

#pragma once

// Monotone mixing of per-agent values into a joint value. The mixing layer
// weights are emitted per sample by hypernetworks fed with a conditioning
// vector, and pass through |.| so the joint value is non-decreasing in every
// per-agent input:
//
//   W1 = |hyper_w1(c)|  (N x M)      b1 = hyper_b1(c)  (M)
//   W2 = |hyper_w2(c)|  (M)          b2 = hyper_b2(c)  (scalar, relu hidden)
//   Q_tot = W2 . elu(W1^T q + b1) + b2

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hymarl/diffcore.hpp"

namespace hymarl {

class MixingNetwork {
 public:
  struct Trace {
    Mat cond;
    Mat q;
    ForwardTrace w1_tr, b1_tr, w2_tr, b2_tr;
    Mat w1_raw, w2_raw;
    Mat pre, hidden;
  };

  MixingNetwork() = default;

  MixingNetwork(int num_agents, int cond_dim, int width, std::mt19937_64& rng, double lr)
      : n_(num_agents), m_(width), cond_dim_(cond_dim) {
    if (num_agents < 1 || cond_dim < 1 || width < 1) throw ShapeError("mixing network dimensions must be positive");
    hyper_w1_ = Mlp(MlpSpec::make(cond_dim, {}, n_ * m_, Activation::identity, Activation::identity), rng, lr);
    hyper_b1_ = Mlp(MlpSpec::make(cond_dim, {}, m_, Activation::identity, Activation::identity), rng, lr);
    hyper_w2_ = Mlp(MlpSpec::make(cond_dim, {}, m_, Activation::identity, Activation::identity), rng, lr);
    hyper_b2_ = Mlp(MlpSpec::make(cond_dim, {m_}, 1, Activation::relu, Activation::identity), rng, lr);
  }

  int num_agents() const { return n_; }
  int width() const { return m_; }
  int cond_dim() const { return cond_dim_; }

  /// q is N x B, cond is C x B; returns 1 x B.
  RowVec forward(const Mat& cond, const Mat& q, Trace* tr = nullptr) const {
    if (q.rows() != n_) throw ShapeError("mixing: expected " + std::to_string(n_) + " agent values");
    if (cond.rows() != cond_dim_ || cond.cols() != q.cols()) throw ShapeError("mixing: conditioning shape mismatch");
    Trace local;
    Trace& t = tr ? *tr : local;
    const bool keep = tr != nullptr;
    t.w1_raw = hyper_w1_.forward(cond, keep ? &t.w1_tr : nullptr);
    const Mat b1 = hyper_b1_.forward(cond, keep ? &t.b1_tr : nullptr);
    t.w2_raw = hyper_w2_.forward(cond, keep ? &t.w2_tr : nullptr);
    const Mat b2 = hyper_b2_.forward(cond, keep ? &t.b2_tr : nullptr);

    t.pre = b1;
    for (int i = 0; i < n_; ++i) {
      t.pre.array() += t.w1_raw.middleRows(i * m_, m_).array().abs().rowwise() * q.row(i).array();
    }
    t.hidden = t.pre.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    RowVec out = (t.hidden.array() * t.w2_raw.array().abs()).colwise().sum().matrix() + b2;
    if (keep) {
      t.cond = cond;
      t.q = q;
    }
    return out;
  }

  /// Returns dL/dq (N x B). Hypernetwork parameter gradients are accumulated
  /// only when `accumulate` is set.
  Mat backward(const Trace& t, const RowVec& d_out, bool accumulate) {
    const Eigen::Index B = d_out.cols();
    const Mat w2 = t.w2_raw.cwiseAbs();
    Mat d_w2_raw = (t.hidden.array().rowwise() * d_out.array()).matrix().cwiseProduct(t.w2_raw.cwiseSign());
    Mat d_pre = (w2.array().rowwise() * d_out.array()).matrix();
    d_pre.array() *= t.pre.binaryExpr(t.hidden, [](double z, double y) { return z > 0.0 ? 1.0 : y + 1.0; }).array();

    Mat dq(n_, B);
    Mat d_w1_raw(n_ * m_, B);
    for (int i = 0; i < n_; ++i) {
      const auto raw = t.w1_raw.middleRows(i * m_, m_);
      dq.row(i) = (d_pre.array() * raw.array().abs()).colwise().sum();
      d_w1_raw.middleRows(i * m_, m_) =
          (d_pre.array().rowwise() * t.q.row(i).array()).matrix().cwiseProduct(raw.cwiseSign());
    }
    if (accumulate) {
      hyper_w1_.backward(t.w1_tr, d_w1_raw);
      hyper_b1_.backward(t.b1_tr, d_pre);
      hyper_w2_.backward(t.w2_tr, d_w2_raw);
      hyper_b2_.backward(t.b2_tr, d_out);
    }
    return dq;
  }

  std::vector<std::pair<std::string, Mlp*>> nets() {
    return {{"hyper_w1", &hyper_w1_}, {"hyper_b1", &hyper_b1_}, {"hyper_w2", &hyper_w2_}, {"hyper_b2", &hyper_b2_}};
  }
  std::vector<std::pair<std::string, const Mlp*>> nets() const {
    return {{"hyper_w1", &hyper_w1_}, {"hyper_b1", &hyper_b1_}, {"hyper_w2", &hyper_w2_}, {"hyper_b2", &hyper_b2_}};
  }

  void step(double clip) {
    for (auto& [name, net] : nets()) net->step(clip);
  }
  void zero_grad() {
    for (auto& [name, net] : nets()) net->zero_grad();
  }
  void track(const MixingNetwork& live, double tau) {
    hyper_w1_.track(live.hyper_w1_, tau);
    hyper_b1_.track(live.hyper_b1_, tau);
    hyper_w2_.track(live.hyper_w2_, tau);
    hyper_b2_.track(live.hyper_b2_, tau);
  }

  Mlp& hyper_w1() { return hyper_w1_; }
  Mlp& hyper_b1() { return hyper_b1_; }
  Mlp& hyper_w2() { return hyper_w2_; }
  Mlp& hyper_b2() { return hyper_b2_; }

 private:
  int n_ = 0;
  int m_ = 0;
  int cond_dim_ = 0;
  Mlp hyper_w1_, hyper_b1_, hyper_w2_, hyper_b2_;
};

}  // namespace hymarl

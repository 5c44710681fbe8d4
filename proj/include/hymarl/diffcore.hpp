#pragma once

// Minimal dense MLP with exact reverse-mode gradients and SGD/Adam.
//
// Batches are column-major: one sample per column. All arithmetic is double
// precision so that central finite differences have enough headroom to
// verify every analytic gradient in this library.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hymarl/errors.hpp"

namespace hymarl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

/// Parameter-sized buffers start on a SIMD boundary so that vectorized
/// kernels split work identically on every run (bit-exact determinism).
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

enum class Activation { identity, relu, tanh, elu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::elu: return "elu";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "elu") return Activation::elu;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace detail {

inline void apply_activation(Activation a, Mat& z) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::elu:
      z = z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
      break;
  }
}

// Multiplies `grad` in place by the activation derivative, given the
// pre-activation `pre` and post-activation `post` of the same layer.
inline void activation_backward(Activation a, const Mat& pre, const Mat& post, Mat& grad) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu:
      grad = (pre.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::tanh:
      grad.array() *= (1.0 - post.array().square());
      break;
    case Activation::elu:
      grad.array() *= pre.binaryExpr(post, [](double z, double y) { return z > 0.0 ? 1.0 : y + 1.0; }).array();
      break;
  }
}

}  // namespace detail

/// Shape of a fully connected network. `widths` includes the input width, so
/// a network with L layers has L+1 widths and L-1 hidden activations.
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Activation> hidden;
  Activation output = Activation::identity;

  static MlpSpec make(int input, const std::vector<int>& hidden_widths, int out,
                      Activation hidden_act, Activation output_act) {
    MlpSpec s;
    s.widths.push_back(input);
    for (int w : hidden_widths) s.widths.push_back(w);
    s.widths.push_back(out);
    s.hidden.assign(hidden_widths.size(), hidden_act);
    s.output = output_act;
    return s;
  }

  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_width() const { return widths.front(); }
  int output_width() const { return widths.back(); }

  Activation activation(int layer) const {
    return layer + 1 == num_layers() ? output : hidden[static_cast<std::size_t>(layer)];
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < num_layers(); ++l) {
      n += static_cast<std::size_t>(widths[l + 1]) * (static_cast<std::size_t>(widths[l]) + 1);
    }
    return n;
  }

  void validate() const {
    if (widths.size() < 2) throw ShapeError("MlpSpec needs at least one layer");
    for (int w : widths) {
      if (w < 1) throw ShapeError("MlpSpec widths must be >= 1");
    }
    if (hidden.size() + 1 != widths.size() - 1) {
      throw ShapeError("MlpSpec needs one activation per hidden layer");
    }
  }

  bool operator==(const MlpSpec&) const = default;
};

/// Where one layer lives inside a flat parameter vector. Weights are stored
/// column-major as an (out x in) matrix followed by the bias.
struct LayerSlice {
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  int out = 0;
  int in = 0;
};

/// Flat storage for all weights and biases of one MLP plus its layout.
class ParamBundle {
 public:
  ParamBundle() = default;

  explicit ParamBundle(const MlpSpec& spec) { *this = unflatten(spec, std::vector<double>(spec.param_count(), 0.0)); }

  static ParamBundle unflatten(const MlpSpec& spec, std::vector<double> flat) {
    spec.validate();
    if (flat.size() != spec.param_count()) {
      throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, spec needs " +
                       std::to_string(spec.param_count()));
    }
    ParamBundle p;
    std::size_t off = 0;
    for (int l = 0; l < spec.num_layers(); ++l) {
      LayerSlice s;
      s.in = spec.widths[l];
      s.out = spec.widths[l + 1];
      s.weight_offset = off;
      off += static_cast<std::size_t>(s.in) * static_cast<std::size_t>(s.out);
      s.bias_offset = off;
      off += static_cast<std::size_t>(s.out);
      p.layout_.push_back(s);
    }
    p.values_.assign(flat.begin(), flat.end());
    return p;
  }

  std::vector<double> flatten() const { return {values_.begin(), values_.end()}; }
  AlignedVector& values() { return values_; }
  const AlignedVector& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<LayerSlice>& layout() const { return layout_; }

  Eigen::Map<const Mat> weight(int l) const {
    const auto& s = layout_[static_cast<std::size_t>(l)];
    return {values_.data() + s.weight_offset, s.out, s.in};
  }
  Eigen::Map<Mat> weight(int l) {
    const auto& s = layout_[static_cast<std::size_t>(l)];
    return {values_.data() + s.weight_offset, s.out, s.in};
  }
  Eigen::Map<const Vec> bias(int l) const {
    const auto& s = layout_[static_cast<std::size_t>(l)];
    return {values_.data() + s.bias_offset, s.out};
  }
  Eigen::Map<Vec> bias(int l) {
    const auto& s = layout_[static_cast<std::size_t>(l)];
    return {values_.data() + s.bias_offset, s.out};
  }

  bool operator==(const ParamBundle& o) const { return values_ == o.values_; }

 private:
  AlignedVector values_;
  std::vector<LayerSlice> layout_;
};

/// Uniform in +-1/sqrt(fan_in) for weights and biases.
inline ParamBundle init_params(const MlpSpec& spec, std::mt19937_64& rng) {
  ParamBundle p(spec);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto w = p.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
    auto b = p.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
  }
  return p;
}

/// Per-layer inputs and pre-activations recorded by a forward pass; the
/// backward pass needs them.
struct ForwardTrace {
  std::vector<Mat> inputs;
  std::vector<Mat> pre;
  Mat output;
};

inline void check_input(const MlpSpec& spec, const Mat& input) {
  if (input.rows() != spec.input_width()) {
    throw ShapeError("network input has " + std::to_string(input.rows()) + " rows, expected " +
                     std::to_string(spec.input_width()));
  }
}

inline Mat forward(const MlpSpec& spec, const ParamBundle& params, const Mat& input, ForwardTrace* trace = nullptr) {
  check_input(spec, input);
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  Mat h = input;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Mat z = params.weight(l) * h;
    z.colwise() += params.bias(l);
    if (trace) {
      trace->inputs.push_back(std::move(h));
      trace->pre.push_back(z);
    }
    detail::apply_activation(spec.activation(l), z);
    h = std::move(z);
  }
  if (trace) trace->output = h;
  return h;
}

/// Single-sample convenience overload.
inline Vec forward(const MlpSpec& spec, const ParamBundle& params, std::span<const double> input) {
  if (static_cast<int>(input.size()) != spec.input_width()) {
    throw ShapeError("network input has " + std::to_string(input.size()) + " entries, expected " +
                     std::to_string(spec.input_width()));
  }
  Mat in = Eigen::Map<const Vec>(input.data(), static_cast<Eigen::Index>(input.size()));
  return forward(spec, params, in);
}

/// Back-propagates `d_output` through a recorded forward pass. Parameter
/// gradients are added into `param_grad` when it is non-empty. Returns the
/// gradient with respect to the network input.
inline Mat backward(const MlpSpec& spec, const ParamBundle& params, const ForwardTrace& trace, const Mat& d_output,
                    std::span<double> param_grad) {
  if (d_output.rows() != spec.output_width() || d_output.cols() != trace.output.cols()) {
    throw ShapeError("output gradient shape does not match the forward pass");
  }
  const bool want_params = !param_grad.empty();
  if (want_params && param_grad.size() != params.size()) {
    throw ShapeError("gradient buffer size does not match parameters");
  }
  Mat g = d_output;
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const Mat& post = (l + 1 == spec.num_layers()) ? trace.output : trace.inputs[li + 1];
    detail::activation_backward(spec.activation(l), trace.pre[li], post, g);
    if (!g.allFinite()) throw NumericError("non-finite gradient", l);
    if (want_params) {
      const auto& s = params.layout()[li];
      Eigen::Map<Mat> gw(param_grad.data() + s.weight_offset, s.out, s.in);
      Eigen::Map<Vec> gb(param_grad.data() + s.bias_offset, s.out);
      gw.noalias() += g * trace.inputs[li].transpose();
      gb += g.rowwise().sum();
    }
    Mat next = params.weight(l).transpose() * g;
    g = std::move(next);
  }
  return g;
}

/// A scalar loss of the network outputs. Returns the loss and writes
/// dLoss/dOutput into the second argument (same shape as the outputs).
using OutputLoss = std::function<double(const Mat& outputs, Mat& d_outputs)>;

struct GradResult {
  double loss = 0.0;
  AlignedVector grad;
};

/// Exact gradient of `loss(forward(input))` with respect to every parameter.
inline GradResult grad(const MlpSpec& spec, const ParamBundle& params, const OutputLoss& loss, const Mat& input) {
  ForwardTrace trace;
  const Mat out = forward(spec, params, input, &trace);
  for (int l = 0; l < spec.num_layers(); ++l) {
    if (!trace.pre[static_cast<std::size_t>(l)].allFinite()) throw NumericError("non-finite activation", l);
  }
  Mat d_out = Mat::Zero(out.rows(), out.cols());
  GradResult r;
  r.loss = loss(out, d_out);
  if (!std::isfinite(r.loss)) throw NumericError("non-finite loss", spec.num_layers() - 1);
  r.grad.assign(params.size(), 0.0);
  backward(spec, params, trace, d_out, r.grad);
  return r;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { sgd, adam };

struct OptState {
  OptimizerKind kind = OptimizerKind::adam;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  AlignedVector m;
  AlignedVector v;

  static OptState sgd(double lr) {
    OptState s;
    s.kind = OptimizerKind::sgd;
    s.lr = lr;
    return s;
  }

  static OptState adam(double lr, std::size_t n) {
    OptState s;
    s.kind = OptimizerKind::adam;
    s.lr = lr;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
  }
};

/// In-place update. Refuses (and leaves everything untouched) when any
/// gradient entry is non-finite.
inline void optimizer_step(std::span<double> params, std::span<const double> grads, OptState& state) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("optimizer: non-finite gradient at index " + std::to_string(i), -1);
    }
  }
  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= state.lr * grads[i];
    ++state.step;
    return;
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("optimizer: adam accumulators do not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

// ---------------------------------------------------------------------------

/// A network together with its gradient accumulator and optimizer state.
/// Algorithms own these and compose them by hand.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, std::mt19937_64& rng, double lr)
      : spec_(std::move(spec)), params_(init_params(spec_, rng)), grad_(params_.size(), 0.0),
        opt_(OptState::adam(lr, params_.size())) {}

  const MlpSpec& spec() const { return spec_; }
  const ParamBundle& params() const { return params_; }
  ParamBundle& params() { return params_; }
  AlignedVector& grad() { return grad_; }
  const AlignedVector& grad() const { return grad_; }
  OptState& opt() { return opt_; }
  const OptState& opt() const { return opt_; }

  Mat forward(const Mat& in, ForwardTrace* trace = nullptr) const {
    return hymarl::forward(spec_, params_, in, trace);
  }

  /// Back-propagates and (optionally) accumulates parameter gradients.
  Mat backward(const ForwardTrace& trace, const Mat& d_out, bool accumulate = true) {
    return hymarl::backward(spec_, params_, trace, d_out, accumulate ? std::span<double>(grad_) : std::span<double>());
  }

  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

  /// Clips by global norm (when max_norm > 0), applies the optimizer, and
  /// clears the accumulator.
  void step(double max_norm = 0.0) {
    if (max_norm > 0.0) {
      double sq = 0.0;
      for (double g : grad_) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grad_) g *= scale;
      }
    }
    optimizer_step(params_.values(), grad_, opt_);
    zero_grad();
  }

  /// Hard copy (tau = 1) or Polyak averaging toward `live`.
  void track(const Mlp& live, double tau) {
    auto& dst = params_.values();
    const auto& src = live.params_.values();
    if (tau >= 1.0) {
      dst = src;
      return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tau * src[i] + (1.0 - tau) * dst[i];
  }

 private:
  MlpSpec spec_;
  ParamBundle params_;
  AlignedVector grad_;
  OptState opt_;
};

}  // namespace hymarl

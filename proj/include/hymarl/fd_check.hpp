#pragma once

// Central finite-difference verification of analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "hymarl/diffcore.hpp"

namespace hymarl {

struct FdOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error; below it the comparison
  /// degrades to an absolute one.
  double scale_floor = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded subsample of this size.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

/// Compares `analytic` against central differences of `f` around `point`.
/// Never throws on mismatch; the report carries the verdict.
inline FdReport fd_check(std::span<const double> point, const std::function<double(std::span<const double>)>& f,
                         std::span<const double> analytic, const FdOptions& opt = {}) {
  FdReport rep;
  if (point.size() != analytic.size() || opt.step <= 0.0) {
    rep.passed = false;
    rep.max_rel_error = INFINITY;
    return rep;
  }
  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opt.max_coords > 0 && opt.max_coords < coords.size()) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opt.max_coords);
    std::sort(coords.begin(), coords.end());
  }
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i : coords) {
    const double saved = x[i];
    x[i] = saved + opt.step;
    const double up = f(x);
    x[i] = saved - opt.step;
    const double down = f(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * opt.step);
    const double err = std::isfinite(numeric) ? relative_error(analytic[i], numeric, opt.scale_floor) : INFINITY;
    ++rep.checked;
    if (err > rep.max_rel_error || !std::isfinite(err)) {
      rep.max_rel_error = err;
      rep.worst_index = i;
      rep.worst_analytic = analytic[i];
      rep.worst_numeric = numeric;
    }
  }
  rep.passed = std::isfinite(rep.max_rel_error) && rep.max_rel_error < opt.tolerance;
  return rep;
}

/// Gradient check of a loss on a single MLP's outputs.
inline FdReport fd_check(const MlpSpec& spec, const ParamBundle& params, const OutputLoss& loss, const Mat& input,
                         const FdOptions& opt = {}) {
  const GradResult g = grad(spec, params, loss, input);
  auto f = [&](std::span<const double> p) {
    const ParamBundle q = ParamBundle::unflatten(spec, std::vector<double>(p.begin(), p.end()));
    const Mat out = forward(spec, q, input);
    Mat scratch = Mat::Zero(out.rows(), out.cols());
    return loss(out, scratch);
  };
  return fd_check(params.values(), f, g.grad, opt);
}

}  // namespace hymarl

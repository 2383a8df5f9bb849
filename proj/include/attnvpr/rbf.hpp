#pragma once

#include <vector>

#include "attnvpr/attention.hpp"

namespace attnvpr {

/// Unclamped Gaussian RBF surface around the neutral level 1.0:
///   A(x) = 1 + sum_i c_i * exp(-|x - center_i|^2 / (2 sigma^2)).
/// Superposition uses c_i = w_i - 1. ExactInterp solves the kernel system so
/// that A(center_i) = w_i, falling back to superposition when it is singular.
class RbfSurface {
 public:
  RbfSurface(std::vector<AttentionPoint> points, const RbfConfig& cfg, Warnings* warnings = nullptr);

  double operator()(double x, double y) const noexcept;
  bool interpolating() const noexcept { return exact_; }
  const std::vector<double>& coefficients() const noexcept { return coeffs_; }

 private:
  double kernel(double dx, double dy) const noexcept;

  std::vector<AttentionPoint> points_;
  std::vector<double> coeffs_;
  double inv_two_sigma_sq_;
  bool exact_ = false;
};

}  // namespace attnvpr

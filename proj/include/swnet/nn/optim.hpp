#pragma once

#include <string>
#include <vector>

#include "swnet/nn/tensor.hpp"

namespace swnet::nn {

/// (1 - lambda) MSE(p, t) + lambda [MSE(dp/dx, dt/dx) + MSE(dp/dy, dt/dy)].
struct LossConfig {
  double lambda = 0.05;
  double spacing = 1.0 / 128.0;  // grid spacing in metres for the derivatives
  void validate() const;
};

template <typename T>
Tensor<T> gradient_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& config);

struct NamedParameter {
  std::string name;
  Tensor<float> tensor;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update from the accumulated gradients. Moments are
/// created on first use. Throws kNonFinite naming the offending parameter.
void adam_step(std::vector<NamedParameter>& params, AdamState& state);

/// 1e-4 * 10^-floor(epoch / 100).
double lr_schedule(int epoch, double base = 1e-4);

}  // namespace swnet::nn

#include "swnet/nn/optim.hpp"

#include <cmath>

namespace swnet::nn {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "loss lambda must lie in [0, 1]");
  }
  if (!(spacing > 0.0)) throw Error(ErrorCode::kInvalidArgument, "loss spacing must be positive");
}

template <typename T>
Tensor<T> gradient_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& config) {
  config.validate();
  if (pred.shape() != target.shape()) {
    throw Error(ErrorCode::kShape, "gradient_loss: prediction " + shape_string(pred.shape()) +
                                       " vs target " + shape_string(target.shape()));
  }
  const T h = static_cast<T>(config.spacing);
  const T lambda = static_cast<T>(config.lambda);
  Tensor<T> loss = scale(mse(pred, target), T(1) - lambda);
  if (lambda == T(0)) return loss;
  const Tensor<T> gx = mse(diff_x(pred, h), diff_x(target, h));
  const Tensor<T> gy = mse(diff_y(pred, h), diff_y(target, h));
  return add(loss, scale(add(gx, gy), lambda));
}

template Tensor<float> gradient_loss(const Tensor<float>&, const Tensor<float>&, const LossConfig&);
template Tensor<double> gradient_loss(const Tensor<double>&, const Tensor<double>&,
                                      const LossConfig&);

void adam_step(std::vector<NamedParameter>& params, AdamState& state) {
  const AdamConfig& c = state.config;
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0f);
      state.v.emplace_back(p.tensor.numel(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorCode::kShape, "adam: optimizer state does not match the parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.m[k].size() != params[k].tensor.numel()) {
      throw Error(ErrorCode::kShape, "adam: moment shape mismatch for " + params[k].name);
    }
    if (!params[k].tensor.has_grad()) continue;
    for (float g : params[k].tensor.grad()) {
      if (!std::isfinite(g)) {
        throw Error(ErrorCode::kNonFinite, "adam: non-finite gradient in " + params[k].name);
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<float>& p = params[k].tensor;
    if (!p.has_grad()) continue;
    auto& w = p.data();
    const auto& g = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = c.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + c.epsilon);
      w[i] = static_cast<float>(w[i] - update);
    }
  }
}

double lr_schedule(int epoch, double base) {
  if (epoch < 0) throw Error(ErrorCode::kInvalidArgument, "lr_schedule: negative epoch");
  return base * std::pow(10.0, -static_cast<double>(epoch / 100));
}

}  // namespace swnet::nn

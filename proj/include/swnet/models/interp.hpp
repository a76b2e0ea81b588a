#pragma once

#include <span>
#include <vector>

#include "swnet/common.hpp"
#include "swnet/nn/model.hpp"

namespace swnet::models {

inline constexpr std::size_t kInterpFactor = 4;
inline constexpr double kFineInterval = 0.03;

/// Frames produced from `t_in` knots: 4 (t_in - 1) + 1.
std::size_t interp_output_length(std::size_t t_in);

/// The nine-row 3-D chain: seven convolutions and two temporally strided
/// transposed convolutions, SELU everywhere but the final 1x1x1 layer.
struct InterpConfig {
  std::size_t input_channels = 1;
  std::vector<nn::LayerSpec> layers = reference_layers();

  static std::vector<nn::LayerSpec> reference_layers();
  /// Rejects any deviation from the reference rows.
  void validate() const;
};

nn::ModelSpec interp_spec(const InterpConfig& config);
nn::Model<float> build_interp3d(const InterpConfig& config, Rng& rng);

/// (1, 1, T, H, W) tensor from T frames.
template <typename T>
nn::Tensor<T> interp_input(std::span<const Frame> frames);

/// Maps T >= 3 coarse frames to 4 (T - 1) + 1 fine frames.
template <typename T>
std::vector<Frame> interpolate(const nn::Model<T>& model, std::span<const Frame> frames);

/// Piecewise-linear in time with three inserted frames per gap; knots are
/// reproduced exactly.
std::vector<Frame> linear_interp_baseline(std::span<const Frame> frames);

}  // namespace swnet::models

#pragma once

#include <span>
#include <vector>

#include "swnet/common.hpp"
#include "swnet/nn/model.hpp"
#include "swnet/sequence.hpp"

namespace swnet::models {

inline constexpr std::size_t kHistoryFrames = 5;
inline constexpr std::size_t kUNetInputChannels = 1 + kHistoryFrames;
inline constexpr double kStepInterval = 0.12;  // seconds advanced per network evaluation

/// Two-stage encoder/decoder: [conv3x3 + act] x2 then 2x2 max-pool per stage,
/// a two-conv bottleneck at 4w channels, and per decoder stage a 2x2 stride-2
/// transposed conv, skip concatenation and two convs. A final 1x1 conv maps
/// to one channel. Parameter count is 454 w^2 + 78 w + 1. With `residual`
/// the newest input frame is added to that output and the 1x1 weights start
/// at zero.
struct UNetConfig {
  std::size_t input_channels = kUNetInputChannels;
  std::size_t width = 32;
  nn::Activation activation = nn::Activation::kRelu;
  bool residual = false;

  void validate() const;
  /// Width 64 reproduces the reference count of 1,864,577 parameters.
  static UNetConfig full_scale();
};

nn::ModelSpec unet_spec(const UNetConfig& config);
nn::Model<float> build_unet(const UNetConfig& config, Rng& rng);

/// Packs (1, 6, H, W): the mask channel first, then the frames oldest first.
template <typename T>
nn::Tensor<T> unet_input(const Frame& geometry, std::span<const Frame> frames);

/// One 0.12 s step: prediction of the frame following `frames`. T is the
/// arithmetic precision (float or double); frames stay float.
template <typename T>
Frame unet_forward(const nn::Model<T>& model, const Frame& geometry,
                   std::span<const Frame> frames);

/// Writes `value` into every cell where `geometry` is 1.
void mask_solid(Frame& frame, const Frame& geometry, float value = 0.0f);

struct RolloutState {
  Frame geometry;
  std::vector<Frame> window;  // oldest first, always kHistoryFrames long
  std::size_t step = 0;

  RolloutState(Frame geometry, std::vector<Frame> seed);
  /// Drops the oldest frame and appends `next`.
  void push(Frame next);
};

/// Autoregressive loop. Every prediction is masked to the normalized solid
/// value before it re-enters the window. Throws kNonFinite with the step.
template <typename T>
WaveSequence rollout(const nn::Model<T>& model, const GeometryField& geometry,
                     std::span<const Frame> seed, std::size_t n_steps);

}  // namespace swnet::models

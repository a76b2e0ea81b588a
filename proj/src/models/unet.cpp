#include "swnet/models/unet.hpp"

#include <algorithm>
#include <cmath>

#include "swnet/datagen.hpp"

namespace swnet::models {

using nn::Activation;
using nn::LayerSpec;

void UNetConfig::validate() const {
  if (input_channels < 2) throw Error(ErrorCode::kInvalidArgument, "unet: needs the mask and at least one frame");
  if (width == 0) throw Error(ErrorCode::kInvalidArgument, "unet: width must be positive");
  if (activation == Activation::kNone) {
    throw Error(ErrorCode::kInvalidArgument, "unet: hidden layers need an activation");
  }
}

UNetConfig UNetConfig::full_scale() {
  UNetConfig c;
  c.width = 64;
  return c;
}

nn::ModelSpec unet_spec(const UNetConfig& config) {
  config.validate();
  const std::size_t w = config.width;
  const Activation a = config.activation;
  nn::ModelSpec spec;
  spec.family = nn::ModelFamily::kUNet;
  auto& L = spec.layers;
  L.push_back(LayerSpec::conv2d(config.input_channels, w, 3, 1, a));
  L.push_back(LayerSpec::conv2d(w, w, 3, 1, a));
  L.push_back(LayerSpec::maxpool2d(w));
  L.push_back(LayerSpec::conv2d(w, 2 * w, 3, 1, a));
  L.push_back(LayerSpec::conv2d(2 * w, 2 * w, 3, 1, a));
  L.push_back(LayerSpec::maxpool2d(2 * w));
  L.push_back(LayerSpec::conv2d(2 * w, 4 * w, 3, 1, a));
  L.push_back(LayerSpec::conv2d(4 * w, 4 * w, 3, 1, a));
  L.push_back(LayerSpec::tconv2d(4 * w, 2 * w, 2, 2));
  L.push_back(LayerSpec::concat_skip(2 * w, 2 * w));
  L.push_back(LayerSpec::conv2d(4 * w, 2 * w, 3, 1, a));
  L.push_back(LayerSpec::conv2d(2 * w, 2 * w, 3, 1, a));
  L.push_back(LayerSpec::tconv2d(2 * w, w, 2, 2));
  L.push_back(LayerSpec::concat_skip(w, w));
  L.push_back(LayerSpec::conv2d(2 * w, w, 3, 1, a));
  L.push_back(LayerSpec::conv2d(w, w, 3, 1, a));
  L.push_back(LayerSpec::conv2d(w, 1, 1, 0, Activation::kNone));
  if (config.residual) spec.residual_channel = config.input_channels - 1;
  spec.validate();
  return spec;
}

nn::Model<float> build_unet(const UNetConfig& config, Rng& rng) {
  nn::Model<float> model(unet_spec(config), rng);
  // Zero output weights: a residual model starts as the identity on the
  // newest frame, a direct one as the still-water prediction.
  model.zero_output_weights();
  return model;
}

template <typename T>
nn::Tensor<T> unet_input(const Frame& geometry, std::span<const Frame> frames) {
  const std::size_t h = geometry.rows(), w = geometry.cols();
  if (h % 4 != 0 || w % 4 != 0) {
    throw Error(ErrorCode::kShape, "unet: spatial size " + std::to_string(h) + "x" +
                                       std::to_string(w) + " is not divisible by 4");
  }
  nn::Tensor<T> x({1, 1 + frames.size(), h, w});
  auto& d = x.data();
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < plane; ++i) d[i] = static_cast<T>(geometry[i]);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (!frames[f].same_shape(geometry)) {
      throw Error(ErrorCode::kShape, "unet: frame " + std::to_string(f) +
                                         " does not match the geometry grid");
    }
    for (std::size_t i = 0; i < plane; ++i) d[(f + 1) * plane + i] = static_cast<T>(frames[f][i]);
  }
  return x;
}

template nn::Tensor<float> unet_input(const Frame&, std::span<const Frame>);
template nn::Tensor<double> unet_input(const Frame&, std::span<const Frame>);

template <typename T>
Frame unet_forward(const nn::Model<T>& model, const Frame& geometry,
                   std::span<const Frame> frames) {
  if (1 + frames.size() != model.spec().input_channels()) {
    throw Error(ErrorCode::kShape, "unet: model expects " +
                                       std::to_string(model.spec().input_channels()) +
                                       " channels, got " + std::to_string(1 + frames.size()));
  }
  nn::NoGradGuard guard;
  const nn::Tensor<T> y = model.forward(unet_input<T>(geometry, frames));
  Frame out(geometry.rows(), geometry.cols());
  std::transform(y.data().begin(), y.data().end(), out.storage().begin(),
                 [](T v) { return static_cast<float>(v); });
  return out;
}

template Frame unet_forward(const nn::Model<float>&, const Frame&, std::span<const Frame>);
template Frame unet_forward(const nn::Model<double>&, const Frame&, std::span<const Frame>);

void mask_solid(Frame& frame, const Frame& geometry, float value) {
  if (!frame.same_shape(geometry)) throw Error(ErrorCode::kShape, "mask_solid: shape mismatch");
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (geometry[i] > 0.5f) frame[i] = value;
  }
}

RolloutState::RolloutState(Frame g, std::vector<Frame> seed)
    : geometry(std::move(g)), window(std::move(seed)) {
  if (window.size() != kHistoryFrames) {
    throw Error(ErrorCode::kShape, "rollout: need exactly 5 seed frames, got " +
                                       std::to_string(window.size()));
  }
  for (const Frame& f : window) {
    if (!f.same_shape(geometry)) throw Error(ErrorCode::kShape, "rollout: seed frame shape");
  }
}

void RolloutState::push(Frame next) {
  if (!next.same_shape(geometry)) throw Error(ErrorCode::kShape, "rollout: frame shape");
  window.erase(window.begin());
  window.push_back(std::move(next));
  ++step;
}

template <typename T>
WaveSequence rollout(const nn::Model<T>& model, const GeometryField& geometry,
                     std::span<const Frame> seed, std::size_t n_steps) {
  if (n_steps == 0) throw Error(ErrorCode::kInvalidArgument, "rollout: n_steps must be >= 1");
  RolloutState state(mask_frame(geometry), std::vector<Frame>(seed.begin(), seed.end()));
  WaveSequence out;
  out.geometry = geometry;
  out.frame_interval = kStepInterval;
  out.normalized = true;
  out.frames.reserve(n_steps);
  for (std::size_t s = 0; s < n_steps; ++s) {
    Frame next = unet_forward(model, state.geometry, state.window);
    for (float v : next.storage()) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite, "rollout: non-finite prediction at step " +
                                               std::to_string(s + 1));
      }
    }
    mask_solid(next, state.geometry);
    out.frames.push_back(next);
    state.push(std::move(next));
  }
  return out;
}

template WaveSequence rollout(const nn::Model<float>&, const GeometryField&,
                              std::span<const Frame>, std::size_t);
template WaveSequence rollout(const nn::Model<double>&, const GeometryField&,
                              std::span<const Frame>, std::size_t);

}  // namespace swnet::models

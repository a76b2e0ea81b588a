#include "swnet/models/interp.hpp"

namespace swnet::models {

using nn::Activation;
using nn::LayerSpec;

std::size_t interp_output_length(std::size_t t_in) {
  return t_in == 0 ? 0 : kInterpFactor * (t_in - 1) + 1;
}

std::vector<LayerSpec> InterpConfig::reference_layers() {
  const Activation s = Activation::kSelu;
  return {
      LayerSpec::conv3d(1, 32, {3, 3, 3}, {1, 1, 1}, s),
      LayerSpec::conv3d(32, 32, {3, 3, 3}, {1, 1, 1}, s),
      LayerSpec::tconv3d(32, 32, {2, 3, 3}, {2, 1, 1}, {0, 1, 1}, s),
      LayerSpec::conv3d(32, 64, {2, 3, 3}, {0, 1, 1}, s),
      LayerSpec::conv3d(64, 64, {3, 3, 3}, {1, 1, 1}, s),
      LayerSpec::tconv3d(64, 64, {2, 3, 3}, {2, 1, 1}, {0, 1, 1}, s),
      LayerSpec::conv3d(64, 64, {2, 3, 3}, {0, 1, 1}, s),
      LayerSpec::conv3d(64, 32, {3, 3, 3}, {1, 1, 1}, s),
      LayerSpec::conv3d(32, 1, {1, 1, 1}, {0, 0, 0}, Activation::kNone),
  };
}

void InterpConfig::validate() const {
  if (input_channels != 1) {
    throw Error(ErrorCode::kInvalidArgument, "interp3d: input is the height channel only");
  }
  const auto ref = reference_layers();
  if (layers.size() != ref.size()) {
    throw Error(ErrorCode::kInvalidArgument, "interp3d: expected 9 layers, got " +
                                                 std::to_string(layers.size()));
  }
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!(layers[i] == ref[i])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "interp3d: layer " + std::to_string(i + 1) + " differs from the reference row");
    }
  }
}

nn::ModelSpec interp_spec(const InterpConfig& config) {
  config.validate();
  nn::ModelSpec spec;
  spec.family = nn::ModelFamily::kInterp3d;
  spec.layers = config.layers;
  spec.validate();
  return spec;
}

nn::Model<float> build_interp3d(const InterpConfig& config, Rng& rng) {
  nn::Model<float> model(interp_spec(config), rng);
  // Start from still water; random output weights would swamp targets that
  // are mostly of order 0.01.
  model.zero_output_weights();
  return model;
}

template <typename T>
nn::Tensor<T> interp_input(std::span<const Frame> frames) {
  // The chain is well defined down to one knot, but anything under three has
  // no interior knot and is outside what the network is trained for.
  if (frames.size() < 3) {
    throw Error(ErrorCode::kShape, "interp3d: need at least 3 input frames, got " +
                                       std::to_string(frames.size()));
  }
  const std::size_t h = frames[0].rows(), w = frames[0].cols(), plane = h * w;
  nn::Tensor<T> x({1, 1, frames.size(), h, w});
  auto& d = x.data();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (!frames[t].same_shape(frames[0])) {
      throw Error(ErrorCode::kShape, "interp3d: frame " + std::to_string(t) + " shape mismatch");
    }
    for (std::size_t i = 0; i < plane; ++i) d[t * plane + i] = static_cast<T>(frames[t][i]);
  }
  return x;
}

template nn::Tensor<float> interp_input(std::span<const Frame>);
template nn::Tensor<double> interp_input(std::span<const Frame>);

template <typename T>
std::vector<Frame> interpolate(const nn::Model<T>& model, std::span<const Frame> frames) {
  nn::NoGradGuard guard;
  const nn::Tensor<T> y = model.forward(interp_input<T>(frames));
  const std::size_t t_out = y.dim(2), h = y.dim(3), w = y.dim(4), plane = h * w;
  std::vector<Frame> out(t_out, Frame(h, w));
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t i = 0; i < plane; ++i) out[t][i] = static_cast<float>(y.data()[t * plane + i]);
  }
  return out;
}

template std::vector<Frame> interpolate(const nn::Model<float>&, std::span<const Frame>);
template std::vector<Frame> interpolate(const nn::Model<double>&, std::span<const Frame>);

std::vector<Frame> linear_interp_baseline(std::span<const Frame> frames) {
  if (frames.empty()) return {};
  std::vector<Frame> out;
  out.reserve(interp_output_length(frames.size()));
  out.push_back(frames[0]);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const Frame& a = frames[k - 1];
    const Frame& b = frames[k];
    if (!a.same_shape(b)) throw Error(ErrorCode::kShape, "linear interpolation: shape mismatch");
    for (std::size_t j = 1; j < kInterpFactor; ++j) {
      const double t = static_cast<double>(j) / kInterpFactor;
      Frame f(a.rows(), a.cols());
      for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = static_cast<float>((1.0 - t) * a[i] + t * b[i]);
      }
      out.push_back(std::move(f));
    }
    out.push_back(b);
  }
  return out;
}

}  // namespace swnet::models

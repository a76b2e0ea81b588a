#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swnet/nn/optim.hpp"
#include "swnet/nn/tensor.hpp"

namespace swnet::nn {

enum class LayerKind : std::uint8_t {
  kConv2d = 0,
  kTConv2d,
  kConv3d,
  kTConv3d,
  kMaxPool2d,   // also pushes its input onto the skip stack
  kActivation,
  kConcatSkip,  // pops the skip stack and appends it after the current channels
};

enum class Activation : std::uint8_t { kNone = 0, kRelu, kSelu };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

/// Kernel, stride and padding are ordered (depth, height, width); 2-D layers
/// keep depth entries at 1/1/0. Conv layers apply `activation` after the bias.
struct LayerSpec {
  LayerKind kind = LayerKind::kConv2d;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
  Activation activation = Activation::kNone;

  bool has_parameters() const;
  bool is_transposed() const;
  bool is_3d() const;
  Shape weight_shape() const;
  std::size_t parameter_count() const;
  bool operator==(const LayerSpec&) const = default;

  static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
                          Activation act);
  static LayerSpec tconv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t stride);
  static LayerSpec conv3d(std::size_t in, std::size_t out, std::array<std::size_t, 3> k,
                          std::array<std::size_t, 3> pad, Activation act);
  static LayerSpec tconv3d(std::size_t in, std::size_t out, std::array<std::size_t, 3> k,
                           std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad,
                           Activation act);
  static LayerSpec maxpool2d(std::size_t channels);
  static LayerSpec activation_layer(std::size_t channels, Activation act);
  static LayerSpec concat_skip(std::size_t in, std::size_t skip_channels);
};

enum class ModelFamily : std::uint8_t { kGeneric = 0, kUNet, kInterp3d };

struct ModelSpec {
  ModelFamily family = ModelFamily::kGeneric;
  std::vector<LayerSpec> layers;
  /// When set, this input channel is added to the single output channel, so
  /// the layers learn an increment over it.
  std::optional<std::size_t> residual_channel;

  /// Checks channel flow, skip-stack balance and per-kind dimension rules.
  void validate() const;
  std::size_t parameter_count() const;
  std::size_t input_channels() const { return layers.front().in_channels; }
  std::size_t output_channels() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Layer-list interpreter holding one weight and one bias per conv layer.
template <typename T>
class Model {
 public:
  Model() = default;
  /// Zero-valued parameters.
  explicit Model(ModelSpec spec);
  /// He-uniform fan-in weights and zero biases.
  Model(ModelSpec spec, Rng& rng);

  const ModelSpec& spec() const { return spec_; }
  Tensor<T> forward(const Tensor<T>& input) const;

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
  void zero_grad();
  /// Zeroes the weights of the last parameterised layer.
  void zero_output_weights();

  /// Deep copy with converted precision.
  template <typename U>
  Model<U> cast() const {
    Model<U> out(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& dst = out.parameters()[i].data();
      const auto& src = params_[i].data();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<U>(src[k]);
    }
    return out;
  }

 private:
  ModelSpec spec_;
  std::vector<Tensor<T>> params_;  // weight, bias per parameterised layer
};

std::vector<NamedParameter> named_parameters(Model<float>& model);

/// "WNN1" checkpoint: magic, u32 version, u8 family, u8 residual channel + 1
/// (0 when absent), 2 reserved bytes, u32
/// layer count, one 44-byte record per layer (u8 kind, u8 activation, u16
/// reserved, u32 in, u32 out, u32 kernel[3], u32 stride[3], u32 padding[3]),
/// u32 tensor count, then per tensor u32 rank, u32 dims, f32 values.
std::vector<std::uint8_t> encode_checkpoint(const Model<float>& model);
Model<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace swnet::nn

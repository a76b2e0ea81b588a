#include "swnet/nn/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

namespace swnet::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

constexpr char kMagic[4] = {'W', 'N', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::vector<std::uint8_t>& out, V value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(V));
}

template <typename V>
V get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(V) > in.size()) throw Error(ErrorCode::kFormat, "checkpoint truncated");
  V value;
  std::memcpy(&value, in.data() + pos, sizeof(V));
  pos += sizeof(V);
  return value;
}

[[noreturn]] void bad_layer(std::size_t index, const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, "layer " + std::to_string(index) + ": " + what);
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::kNone: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kSelu: return selu(x);
  }
  return x;
}

// Inputs feeding one output value, used for the He-uniform bound.
std::size_t fan_in(const LayerSpec& l) {
  const std::size_t k = l.kernel[0] * l.kernel[1] * l.kernel[2];
  if (!l.is_transposed()) return l.in_channels * k;
  const std::size_t s = l.stride[0] * l.stride[1] * l.stride[2];
  return std::max<std::size_t>(1, l.in_channels * k / s);
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kTConv2d: return "tconv2d";
    case LayerKind::kConv3d: return "conv3d";
    case LayerKind::kTConv3d: return "tconv3d";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kConcatSkip: return "concat-skip";
  }
  return "unknown";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kNone: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kSelu: return "selu";
  }
  return "unknown";
}

bool LayerSpec::has_parameters() const {
  return kind == LayerKind::kConv2d || kind == LayerKind::kTConv2d ||
         kind == LayerKind::kConv3d || kind == LayerKind::kTConv3d;
}

bool LayerSpec::is_transposed() const {
  return kind == LayerKind::kTConv2d || kind == LayerKind::kTConv3d;
}

bool LayerSpec::is_3d() const {
  return kind == LayerKind::kConv3d || kind == LayerKind::kTConv3d;
}

Shape LayerSpec::weight_shape() const {
  const std::size_t a = is_transposed() ? in_channels : out_channels;
  const std::size_t b = is_transposed() ? out_channels : in_channels;
  if (is_3d()) return {a, b, kernel[0], kernel[1], kernel[2]};
  return {a, b, kernel[1], kernel[2]};
}

std::size_t LayerSpec::parameter_count() const {
  if (!has_parameters()) return 0;
  return in_channels * out_channels * kernel[0] * kernel[1] * kernel[2] + out_channels;
}

LayerSpec LayerSpec::conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
                            Activation act) {
  return {LayerKind::kConv2d, in, out, {1, k, k}, {1, 1, 1}, {0, pad, pad}, act};
}

LayerSpec LayerSpec::tconv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t stride) {
  return {LayerKind::kTConv2d, in, out, {1, k, k}, {1, stride, stride}, {0, 0, 0},
          Activation::kNone};
}

LayerSpec LayerSpec::conv3d(std::size_t in, std::size_t out, std::array<std::size_t, 3> k,
                            std::array<std::size_t, 3> pad, Activation act) {
  return {LayerKind::kConv3d, in, out, k, {1, 1, 1}, pad, act};
}

LayerSpec LayerSpec::tconv3d(std::size_t in, std::size_t out, std::array<std::size_t, 3> k,
                             std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad,
                             Activation act) {
  return {LayerKind::kTConv3d, in, out, k, stride, pad, act};
}

LayerSpec LayerSpec::maxpool2d(std::size_t channels) {
  return {LayerKind::kMaxPool2d, channels, channels, {1, 2, 2}, {1, 2, 2}, {0, 0, 0},
          Activation::kNone};
}

LayerSpec LayerSpec::activation_layer(std::size_t channels, Activation act) {
  return {LayerKind::kActivation, channels, channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, act};
}

LayerSpec LayerSpec::concat_skip(std::size_t in, std::size_t skip_channels) {
  return {LayerKind::kConcatSkip, in, in + skip_channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0},
          Activation::kNone};
}

void ModelSpec::validate() const {
  if (layers.empty()) throw Error(ErrorCode::kInvalidArgument, "model has no layers");
  std::size_t channels = layers.front().in_channels;
  std::vector<std::size_t> skips;
  std::optional<bool> volumetric;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.in_channels == 0 || l.out_channels == 0) bad_layer(i, "channel counts must be positive");
    if (l.in_channels != channels) {
      bad_layer(i, "expects " + std::to_string(l.in_channels) + " input channels, receives " +
                       std::to_string(channels));
    }
    for (std::size_t a = 0; a < 3; ++a) {
      if (l.kernel[a] == 0 || l.stride[a] == 0) bad_layer(i, "zero kernel or stride");
    }
    if (l.has_parameters()) {
      if (volumetric && *volumetric != l.is_3d()) bad_layer(i, "mixes 2-D and 3-D layers");
      volumetric = l.is_3d();
      if (!l.is_3d() && (l.kernel[0] != 1 || l.stride[0] != 1 || l.padding[0] != 0)) {
        bad_layer(i, "2-D layer with a depth extent");
      }
    }
    switch (l.kind) {
      case LayerKind::kMaxPool2d:
        if (l.out_channels != l.in_channels) bad_layer(i, "pooling changes channel count");
        skips.push_back(l.in_channels);
        break;
      case LayerKind::kActivation:
        if (l.out_channels != l.in_channels) bad_layer(i, "activation changes channel count");
        break;
      case LayerKind::kConcatSkip:
        if (skips.empty()) bad_layer(i, "concat-skip with no pending skip connection");
        if (l.out_channels != l.in_channels + skips.back()) {
          bad_layer(i, "concat-skip output must be " + std::to_string(l.in_channels + skips.back()));
        }
        skips.pop_back();
        break;
      default: break;
    }
    channels = l.out_channels;
  }
  if (!skips.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model leaves skip connections unconsumed");
  }
  if (residual_channel) {
    if (*residual_channel >= input_channels() || *residual_channel >= 255) {
      throw Error(ErrorCode::kInvalidArgument, "residual channel is not an input channel");
    }
    if (output_channels() != 1 || volumetric.value_or(false)) {
      throw Error(ErrorCode::kInvalidArgument, "residual needs a single-channel 2-D output");
    }
  }
}

std::size_t ModelSpec::parameter_count() const {
  std::size_t n = 0;
  for (const LayerSpec& l : layers) n += l.parameter_count();
  return n;
}

std::size_t ModelSpec::output_channels() const { return layers.back().out_channels; }

template <typename T>
Model<T>::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (const LayerSpec& l : spec_.layers) {
    if (!l.has_parameters()) continue;
    params_.emplace_back(l.weight_shape(), T(0));
    params_.emplace_back(Shape{l.out_channels}, T(0));
  }
}

template <typename T>
Model<T>::Model(ModelSpec spec, Rng& rng) : Model(std::move(spec)) {
  std::size_t p = 0;
  for (const LayerSpec& l : spec_.layers) {
    if (!l.has_parameters()) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in(l)));
    for (T& w : params_[p].data()) w = static_cast<T>(rng.uniform(-bound, bound));
    p += 2;
  }
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& input) const {
  bool any3d = false;
  for (const LayerSpec& l : spec_.layers) any3d = any3d || l.is_3d();
  if (input.rank() != (any3d ? 5u : 4u) || input.dim(1) != spec_.input_channels()) {
    throw Error(ErrorCode::kShape, "model input " + shape_string(input.shape()) + " needs " +
                                       std::to_string(spec_.input_channels()) + " channels");
  }
  Tensor<T> x = input;
  std::vector<Tensor<T>> skips;
  std::size_t p = 0;
  for (const LayerSpec& l : spec_.layers) {
    ConvGeometry g{l.stride, l.padding};
    switch (l.kind) {
      case LayerKind::kConv2d:
      case LayerKind::kConv3d:
        x = activate(conv(x, params_[p], params_[p + 1], g), l.activation);
        p += 2;
        break;
      case LayerKind::kTConv2d:
      case LayerKind::kTConv3d:
        x = activate(conv_transpose(x, params_[p], params_[p + 1], g), l.activation);
        p += 2;
        break;
      case LayerKind::kMaxPool2d:
        skips.push_back(x);
        x = maxpool2d(x);
        break;
      case LayerKind::kActivation:
        x = activate(x, l.activation);
        break;
      case LayerKind::kConcatSkip:
        if (skips.back().shape()[2] != x.shape()[2] || skips.back().shape()[3] != x.shape()[3]) {
          throw Error(ErrorCode::kShape, "skip " + shape_string(skips.back().shape()) +
                                             " does not match " + shape_string(x.shape()));
        }
        x = concat_channels<T>({x, skips.back()});
        skips.pop_back();
        break;
    }
  }
  if (spec_.residual_channel) x = add(x, slice_channels(input, *spec_.residual_channel, 1));
  return x;
}

template <typename T>
void Model<T>::zero_output_weights() {
  if (params_.size() < 2) return;
  auto& w = params_[params_.size() - 2].data();
  std::fill(w.begin(), w.end(), T(0));
}

template <typename T>
std::vector<std::string> Model<T>::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    if (!l.has_parameters()) continue;
    const std::string base = "layer" + std::to_string(i) + "." + to_string(l.kind);
    names.push_back(base + ".weight");
    names.push_back(base + ".bias");
  }
  return names;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.numel();
  return n;
}

template <typename T>
void Model<T>::set_requires_grad(bool on) {
  for (auto& t : params_) t.set_requires_grad(on);
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& t : params_) t.zero_grad();
}

template class Model<float>;
template class Model<double>;

std::vector<NamedParameter> named_parameters(Model<float>& model) {
  std::vector<NamedParameter> out;
  const auto names = model.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], model.parameters()[i]});
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const Model<float>& model) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(model.spec().family));
  const auto& residual = model.spec().residual_channel;
  put<std::uint8_t>(out, residual ? static_cast<std::uint8_t>(*residual + 1) : 0);
  out.insert(out.end(), 2, 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec().layers.size()));
  for (const LayerSpec& l : model.spec().layers) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(l.kind));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    put<std::uint16_t>(out, 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_channels));
    for (auto* arr : {&l.kernel, &l.stride, &l.padding}) {
      for (std::size_t v : *arr) put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    }
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& t : model.parameters()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.numel() * sizeof(float));
  }
  return out;
}

Model<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "not a WNN1 checkpoint");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kVersion) {
    throw Error(ErrorCode::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelSpec spec;
  const auto family = get<std::uint8_t>(bytes, pos);
  if (family > static_cast<std::uint8_t>(ModelFamily::kInterp3d)) {
    throw Error(ErrorCode::kFormat, "unknown model family");
  }
  spec.family = static_cast<ModelFamily>(family);
  if (const auto r = get<std::uint8_t>(bytes, pos); r != 0) spec.residual_channel = r - 1u;
  pos += 2;
  const auto layers = get<std::uint32_t>(bytes, pos);
  if (layers > 4096) throw Error(ErrorCode::kFormat, "implausible layer count");
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerSpec l;
    const auto kind = get<std::uint8_t>(bytes, pos);
    const auto act = get<std::uint8_t>(bytes, pos);
    if (kind > static_cast<std::uint8_t>(LayerKind::kConcatSkip) ||
        act > static_cast<std::uint8_t>(Activation::kSelu)) {
      throw Error(ErrorCode::kFormat, "unknown layer kind or activation");
    }
    l.kind = static_cast<LayerKind>(kind);
    l.activation = static_cast<Activation>(act);
    pos += 2;
    l.in_channels = get<std::uint32_t>(bytes, pos);
    l.out_channels = get<std::uint32_t>(bytes, pos);
    for (auto* arr : {&l.kernel, &l.stride, &l.padding}) {
      for (std::size_t& v : *arr) v = get<std::uint32_t>(bytes, pos);
    }
    spec.layers.push_back(l);
  }
  Model<float> model;
  try {
    model = Model<float>(spec);
  } catch (const Error& e) {
    throw Error(ErrorCode::kFormat, std::string("checkpoint layer list invalid: ") + e.what());
  }
  const auto count = get<std::uint32_t>(bytes, pos);
  if (count != model.parameters().size()) {
    throw Error(ErrorCode::kFormat, "checkpoint tensor count does not match its layers");
  }
  for (auto& t : model.parameters()) {
    const auto rank = get<std::uint32_t>(bytes, pos);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint32_t>(bytes, pos);
    if (shape != t.shape()) {
      throw Error(ErrorCode::kFormat, "checkpoint tensor " + shape_string(shape) +
                                          " where " + shape_string(t.shape()) + " expected");
    }
    const std::size_t n = t.numel() * sizeof(float);
    if (pos + n > bytes.size()) throw Error(ErrorCode::kFormat, "checkpoint truncated");
    std::memcpy(t.data().data(), bytes.data() + pos, n);
    pos += n;
  }
  if (pos != bytes.size()) throw Error(ErrorCode::kFormat, "trailing bytes in checkpoint");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace swnet::nn

#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "swnet/common.hpp"

namespace swnet::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor with an optional place on the gradient tape.
/// Copies share the underlying node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::vector<T>& grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// A new leaf holding a copy of the values, off the tape.
  Tensor detach() const;
  /// Reverse-mode accumulation from this scalar into every reachable leaf.
  void backward() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Disables tape recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// ---------------------------------------------------------------------------
// Operations. Spatial ops take N x C x H x W (2-D) or N x C x D x H x W (3-D).

struct ConvGeometry {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
};

/// Cross-correlation; weights are Cout x Cin x k..., bias has Cout entries.
template <typename T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
               const ConvGeometry& geom);
/// Transposed convolution; weights are Cin x Cout x k...
/// Output extent (n - 1) * s + k - 2p per spatial axis.
template <typename T>
Tensor<T> conv_transpose(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         const ConvGeometry& geom);

/// 2x2 window, stride 2; gradient goes to the first maximum in each window.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> selu(const Tensor<T>& x);

inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kSeluScale = 1.0507009873554805;

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

/// Concatenates along axis 1.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

/// Channels [begin, begin + count) of every sample.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);

/// Writes `fill` wherever mask is non-zero; no gradient reaches those cells.
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const Tensor<T>& mask, T fill);

/// Derivative along the last axis (x) or second-to-last (y): central
/// differences inside, one-sided at the two ends, divided by `spacing`.
template <typename T> Tensor<T> diff_x(const Tensor<T>& x, T spacing);
template <typename T> Tensor<T> diff_y(const Tensor<T>& x, T spacing);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace swnet::nn

#include "swnet/nn/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace swnet::nn {
namespace {

thread_local bool g_grad_enabled = true;

using Dims3 = std::array<std::size_t, 3>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

std::size_t prod(const Dims3& d) { return d[0] * d[1] * d[2]; }

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::kShape, op + ": incompatible shapes " + shape_string(a) + " and " +
                                     shape_string(b));
}

void require_same(const std::string& op, const Shape& a, const Shape& b) {
  if (a != b) shape_error(op, a, b);
}

// Builds an op result and, when recording, links it into the tape.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p && p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward = std::move(backward);
    }
  }
  return Tensor<T>(std::move(node));
}

// Gathers receptive fields: img is C x in, cols is (C * prod(k)) x prod(out).
template <typename T>
void im2col(const T* img, std::size_t channels, const Dims3& in, const Dims3& k, const Dims3& s,
            const Dims3& p, const Dims3& out, T* cols) {
  const std::size_t cols_per_row = prod(out);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * prod(in);
    for (std::size_t a = 0; a < k[0]; ++a) {
      for (std::size_t b = 0; b < k[1]; ++b) {
        for (std::size_t e = 0; e < k[2]; ++e) {
          const std::size_t row = ((c * k[0] + a) * k[1] + b) * k[2] + e;
          T* dst = cols + row * cols_per_row;
          for (std::size_t od = 0; od < out[0]; ++od) {
            const long id = static_cast<long>(od * s[0] + a) - static_cast<long>(p[0]);
            for (std::size_t oh = 0; oh < out[1]; ++oh) {
              const long ih = static_cast<long>(oh * s[1] + b) - static_cast<long>(p[1]);
              T* line = dst + (od * out[1] + oh) * out[2];
              if (id < 0 || id >= static_cast<long>(in[0]) || ih < 0 ||
                  ih >= static_cast<long>(in[1])) {
                std::fill(line, line + out[2], T(0));
                continue;
              }
              const T* src = plane + (static_cast<std::size_t>(id) * in[1] + ih) * in[2];
              for (std::size_t ow = 0; ow < out[2]; ++ow) {
                const long iw = static_cast<long>(ow * s[2] + e) - static_cast<long>(p[2]);
                line[ow] = (iw < 0 || iw >= static_cast<long>(in[2])) ? T(0) : src[iw];
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-and-adds cols back onto img.
template <typename T>
void col2im(const T* cols, std::size_t channels, const Dims3& in, const Dims3& k, const Dims3& s,
            const Dims3& p, const Dims3& out, T* img) {
  const std::size_t cols_per_row = prod(out);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * prod(in);
    for (std::size_t a = 0; a < k[0]; ++a) {
      for (std::size_t b = 0; b < k[1]; ++b) {
        for (std::size_t e = 0; e < k[2]; ++e) {
          const std::size_t row = ((c * k[0] + a) * k[1] + b) * k[2] + e;
          const T* src = cols + row * cols_per_row;
          for (std::size_t od = 0; od < out[0]; ++od) {
            const long id = static_cast<long>(od * s[0] + a) - static_cast<long>(p[0]);
            if (id < 0 || id >= static_cast<long>(in[0])) continue;
            for (std::size_t oh = 0; oh < out[1]; ++oh) {
              const long ih = static_cast<long>(oh * s[1] + b) - static_cast<long>(p[1]);
              if (ih < 0 || ih >= static_cast<long>(in[1])) continue;
              const T* line = src + (od * out[1] + oh) * out[2];
              T* dst = plane + (static_cast<std::size_t>(id) * in[1] + ih) * in[2];
              for (std::size_t ow = 0; ow < out[2]; ++ow) {
                const long iw = static_cast<long>(ow * s[2] + e) - static_cast<long>(p[2]);
                if (iw >= 0 && iw < static_cast<long>(in[2])) dst[iw] += line[ow];
              }
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(const Dims3& k, const Dims3& s, const Dims3& p) {
  return prod(k) == 1 && prod(s) == 1 && p == Dims3{0, 0, 0};
}

// Problem dimensions of a conv-like op, with 2-D inputs lifted to depth 1.
struct ConvDims {
  std::size_t batch = 0;
  std::size_t cin = 0;
  std::size_t cout = 0;
  Dims3 in{};
  Dims3 k{};
  Dims3 s{};
  Dims3 p{};
  Dims3 out{};
  bool planar = false;

  Shape out_shape() const {
    if (planar) return {batch, cout, out[1], out[2]};
    return {batch, cout, out[0], out[1], out[2]};
  }
};

template <typename T>
ConvDims conv_dims(const std::string& op, const Tensor<T>& x, const Tensor<T>& w,
                   const Tensor<T>& b, const ConvGeometry& g, bool transposed) {
  if (!x.defined() || !w.defined() || !b.defined()) {
    throw Error(ErrorCode::kInvalidArgument, op + ": undefined tensor");
  }
  const std::size_t r = x.rank();
  if ((r != 4 && r != 5) || w.rank() != r) shape_error(op, x.shape(), w.shape());
  ConvDims d;
  d.planar = r == 4;
  d.batch = x.dim(0);
  d.cin = x.dim(1);
  const std::size_t w_in = transposed ? w.dim(0) : w.dim(1);
  d.cout = transposed ? w.dim(1) : w.dim(0);
  if (w_in != d.cin) shape_error(op, x.shape(), w.shape());
  if (b.numel() != d.cout) shape_error(op, w.shape(), b.shape());
  if (d.planar) {
    d.in = {1, x.dim(2), x.dim(3)};
    d.k = {1, w.dim(2), w.dim(3)};
    d.s = {1, g.stride[1], g.stride[2]};
    d.p = {0, g.padding[1], g.padding[2]};
  } else {
    d.in = {x.dim(2), x.dim(3), x.dim(4)};
    d.k = {w.dim(2), w.dim(3), w.dim(4)};
    d.s = g.stride;
    d.p = g.padding;
  }
  for (std::size_t a = 0; a < 3; ++a) {
    if (d.s[a] == 0 || d.k[a] == 0) {
      throw Error(ErrorCode::kInvalidArgument, op + ": zero stride or kernel extent");
    }
    if (transposed) {
      const std::size_t full = (d.in[a] - 1) * d.s[a] + d.k[a];
      if (d.in[a] == 0 || full <= 2 * d.p[a]) shape_error(op, x.shape(), w.shape());
      d.out[a] = full - 2 * d.p[a];
    } else {
      const std::size_t padded = d.in[a] + 2 * d.p[a];
      if (padded < d.k[a] || (padded - d.k[a]) % d.s[a] != 0) {
        throw Error(ErrorCode::kShape, op + ": input " + shape_string(x.shape()) +
                                           " does not tile with kernel " +
                                           shape_string(w.shape()));
      }
      d.out[a] = (padded - d.k[a]) / d.s[a] + 1;
    }
  }
  return d;
}

template <typename T>
Tensor<T> unary(const Tensor<T>& x, T (*f)(T), T (*df)(T)) {
  std::vector<T> v(x.numel());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(v), {x.node()}, [df](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(px.value[i]);
  });
}

template <typename T>
T relu_f(T v) { return v > T(0) ? v : T(0); }
template <typename T>
T relu_df(T v) { return v > T(0) ? T(1) : T(0); }
template <typename T>
T selu_f(T v) {
  return v > T(0) ? T(kSeluScale) * v : T(kSeluScale * kSeluAlpha) * std::expm1(v);
}
template <typename T>
T selu_df(T v) {
  return v > T(0) ? T(kSeluScale) : T(kSeluScale * kSeluAlpha) * std::exp(v);
}

// Finite-difference derivative along one axis, viewed as outer x n x inner.
template <typename T>
Tensor<T> axis_diff(const Tensor<T>& x, std::size_t axis_from_end, T spacing, const char* op) {
  if (x.rank() < axis_from_end + 1) {
    throw Error(ErrorCode::kShape, std::string(op) + ": rank too small " + shape_string(x.shape()));
  }
  if (!(spacing > T(0))) throw Error(ErrorCode::kInvalidArgument, std::string(op) + ": spacing");
  const std::size_t axis = x.rank() - 1 - axis_from_end;
  const std::size_t n = x.dim(axis);
  if (n < 2) throw Error(ErrorCode::kShape, std::string(op) + ": axis needs at least 2 points");
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
  const std::size_t outer = x.numel() / (n * inner);
  const T inv = T(1) / spacing;
  const T half = T(0.5) * inv;

  auto apply = [=](const T* src, T* dst, bool adjoint) {
    for (std::size_t o = 0; o < outer; ++o) {
      const T* s = src + o * n * inner;
      T* d = dst + o * n * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        auto at = [&](const T* base, std::size_t k) -> const T& { return base[k * inner + i]; };
        auto ref = [&](T* base, std::size_t k) -> T& { return base[k * inner + i]; };
        if (!adjoint) {
          ref(d, 0) = (at(s, 1) - at(s, 0)) * inv;
          for (std::size_t k = 1; k + 1 < n; ++k) ref(d, k) = (at(s, k + 1) - at(s, k - 1)) * half;
          ref(d, n - 1) = (at(s, n - 1) - at(s, n - 2)) * inv;
        } else {
          ref(d, 0) -= at(s, 0) * inv;
          ref(d, 1) += at(s, 0) * inv;
          for (std::size_t k = 1; k + 1 < n; ++k) {
            ref(d, k + 1) += at(s, k) * half;
            ref(d, k - 1) -= at(s, k) * half;
          }
          ref(d, n - 1) += at(s, n - 1) * inv;
          ref(d, n - 2) -= at(s, n - 1) * inv;
        }
      }
    }
  };

  std::vector<T> v(x.numel());
  apply(x.data().data(), v.data(), false);
  return make_result<T>(x.shape(), std::move(v), {x.node()}, [apply](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    if (!px.requires_grad) return;
    apply(self.grad.data(), px.grad_buffer().data(), true);
  });
}

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, int kind, const char* op) {
  require_same(op, a.shape(), b.shape());
  std::vector<T> v(a.numel());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = kind == 0 ? av[i] + bv[i] : kind == 1 ? av[i] - bv[i] : av[i] * bv[i];
  }
  return make_result<T>(a.shape(), std::move(v), {a.node(), b.node()}, [kind](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += kind == 2 ? g[i] * pb.value[i] : g[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[i] += kind == 0 ? g[i] : kind == 1 ? -g[i] : g[i] * pa.value[i];
      }
    }
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream s;
  s << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? ", " : "") << shape[i];
  s << ')';
  return s.str();
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value.assign(nn::numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (values.size() != nn::numel(shape)) {
    throw Error(ErrorCode::kShape, "tensor: " + std::to_string(values.size()) +
                                       " values for shape " + shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw Error(ErrorCode::kShape, "item() on tensor " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (node_->backward) {
    throw Error(ErrorCode::kInvalidArgument, "requires_grad can only be set on leaf tensors");
  }
  node_->requires_grad = on;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor<T>(shape(), data(), false);
}

template <typename T>
void Tensor<T>::backward() const {
  if (!node_ || !node_->requires_grad) {
    throw Error(ErrorCode::kDetached, "backward() on a tensor that is not on the gradient tape");
  }
  if (numel() != 1) {
    throw Error(ErrorCode::kShape, "backward() needs a scalar, got " + shape_string(shape()));
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
               const ConvGeometry& geom) {
  const ConvDims d = conv_dims("conv", x, w, b, geom, false);
  const std::size_t kk = d.cin * prod(d.k);
  const std::size_t lin = prod(d.in);
  const std::size_t lout = prod(d.out);
  const bool pointwise = is_pointwise(d.k, d.s, d.p);
  std::vector<T> out(d.batch * d.cout * lout);
  std::vector<T> cols(pointwise ? 0 : kk * lout);
  const ConstMapMat<T> wm(w.data().data(), d.cout, kk);
  for (std::size_t n = 0; n < d.batch; ++n) {
    const T* xn = x.data().data() + n * d.cin * lin;
    if (!pointwise) im2col(xn, d.cin, d.in, d.k, d.s, d.p, d.out, cols.data());
    const ConstMapMat<T> cm(pointwise ? xn : cols.data(), kk, lout);
    MapMat<T> ym(out.data() + n * d.cout * lout, d.cout, lout);
    ym.noalias() = wm * cm;
    for (std::size_t c = 0; c < d.cout; ++c) ym.row(c).array() += b.data()[c];
  }
  return make_result<T>(d.out_shape(), std::move(out), {x.node(), w.node(), b.node()},
                        [d, kk, lin, lout, pointwise](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pw = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    std::vector<T> cols(pointwise ? 0 : kk * lout);
    std::vector<T> dcols(kk * lout);
    const ConstMapMat<T> wm(pw.value.data(), d.cout, kk);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const ConstMapMat<T> dy(self.grad.data() + n * d.cout * lout, d.cout, lout);
      const T* xn = px.value.data() + n * d.cin * lin;
      if (pw.requires_grad) {
        if (!pointwise) im2col(xn, d.cin, d.in, d.k, d.s, d.p, d.out, cols.data());
        const ConstMapMat<T> cm(pointwise ? xn : cols.data(), kk, lout);
        MapMat<T>(pw.grad_buffer().data(), d.cout, kk).noalias() += dy * cm.transpose();
      }
      if (pb.requires_grad) {
        auto& gb = pb.grad_buffer();
        // Plain loop: a vectorized reduction's order would depend on alignment.
        for (std::size_t c = 0; c < d.cout; ++c) {
          const T* row = self.grad.data() + (n * d.cout + c) * lout;
          T acc = T(0);
          for (std::size_t i = 0; i < lout; ++i) acc += row[i];
          gb[c] += acc;
        }
      }
      if (px.requires_grad) {
        T* gx = px.grad_buffer().data() + n * d.cin * lin;
        if (pointwise) {
          MapMat<T>(gx, kk, lout).noalias() += wm.transpose() * dy;
        } else {
          MapMat<T>(dcols.data(), kk, lout).noalias() = wm.transpose() * dy;
          col2im(dcols.data(), d.cin, d.in, d.k, d.s, d.p, d.out, gx);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> conv_transpose(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         const ConvGeometry& geom) {
  const ConvDims d = conv_dims("conv_transpose", x, w, b, geom, true);
  const std::size_t kk = d.cout * prod(d.k);
  const std::size_t lin = prod(d.in);
  const std::size_t lout = prod(d.out);
  std::vector<T> out(d.batch * d.cout * lout, T(0));
  std::vector<T> cols(kk * lin);
  const ConstMapMat<T> wm(w.data().data(), d.cin, kk);
  for (std::size_t n = 0; n < d.batch; ++n) {
    const ConstMapMat<T> xm(x.data().data() + n * d.cin * lin, d.cin, lin);
    MapMat<T>(cols.data(), kk, lin).noalias() = wm.transpose() * xm;
    T* yn = out.data() + n * d.cout * lout;
    // The output plays the image role; the input grid is the column grid.
    col2im(cols.data(), d.cout, d.out, d.k, d.s, d.p, d.in, yn);
    for (std::size_t c = 0; c < d.cout; ++c) {
      T* plane = yn + c * lout;
      for (std::size_t i = 0; i < lout; ++i) plane[i] += b.data()[c];
    }
  }
  return make_result<T>(d.out_shape(), std::move(out), {x.node(), w.node(), b.node()},
                        [d, kk, lin, lout](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pw = *self.parents[1];
    Node<T>& pb = *self.parents[2];
    std::vector<T> dcols(kk * lin);
    const ConstMapMat<T> wm(pw.value.data(), d.cin, kk);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const T* gy = self.grad.data() + n * d.cout * lout;
      if (pb.requires_grad) {
        auto& gb = pb.grad_buffer();
        for (std::size_t c = 0; c < d.cout; ++c) {
          T acc = T(0);
          for (std::size_t i = 0; i < lout; ++i) acc += gy[c * lout + i];
          gb[c] += acc;
        }
      }
      if (!px.requires_grad && !pw.requires_grad) continue;
      im2col(gy, d.cout, d.out, d.k, d.s, d.p, d.in, dcols.data());
      const ConstMapMat<T> dc(dcols.data(), kk, lin);
      if (px.requires_grad) {
        MapMat<T>(px.grad_buffer().data() + n * d.cin * lin, d.cin, lin).noalias() += wm * dc;
      }
      if (pw.requires_grad) {
        const ConstMapMat<T> xm(px.value.data() + n * d.cin * lin, d.cin, lin);
        MapMat<T>(pw.grad_buffer().data(), d.cin, kk).noalias() += xm * dc.transpose();
      }
    }
  });
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
  if (x.rank() != 4) throw Error(ErrorCode::kShape, "maxpool2d: expected N x C x H x W, got " +
                                                        shape_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  if (h % 2 || w % 2) {
    throw Error(ErrorCode::kShape, "maxpool2d: odd spatial size " + shape_string(x.shape()));
  }
  const std::size_t ho = h / 2;
  const std::size_t wo = w / 2;
  std::vector<T> out(planes * ho * wo);
  std::vector<std::uint32_t> arg(out.size());
  const auto& xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = (p * h + 2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t k = (p * h + 2 * i + di) * w + 2 * j + dj;
            if (xv[k] > xv[best]) best = k;
          }
        }
        const std::size_t o = (p * ho + i) * wo + j;
        out[o] = xv[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), ho, wo}, std::move(out), {x.node()},
                        [arg = std::move(arg)](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto& g = px.grad_buffer();
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) { return unary<T>(x, relu_f<T>, relu_df<T>); }
template <typename T>
Tensor<T> selu(const Tensor<T>& x) { return unary<T>(x, selu_f<T>, selu_df<T>); }

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, 0, "add"); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, 1, "sub"); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, 2, "mul"); }

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> v(a.data());
  for (T& e : v) e *= factor;
  return make_result<T>(a.shape(), std::move(v), {a.node()}, [factor](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    auto& g = pa.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat_channels: no inputs");
  const Shape& ref = parts[0].shape();
  if (ref.size() < 2) throw Error(ErrorCode::kShape, "concat_channels: rank < 2");
  std::size_t channels = 0;
  std::vector<std::size_t> widths;  // per-sample element count of each part
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size() || s[0] != ref[0] ||
        !std::equal(s.begin() + 2, s.end(), ref.begin() + 2)) {
      shape_error("concat_channels", ref, s);
    }
    channels += s[1];
    widths.push_back(p.numel() / s[0]);
  }
  Shape shape = ref;
  shape[1] = channels;
  const std::size_t batch = ref[0];
  const std::size_t stride = numel(shape) / batch;
  std::vector<T> v(numel(shape));
  std::vector<std::shared_ptr<Node<T>>> nodes;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = parts[k].data().data() + n * widths[k];
      std::copy(src, src + widths[k], v.begin() + n * stride + offset);
    }
    offset += widths[k];
    nodes.push_back(parts[k].node());
  }
  return make_result<T>(std::move(shape), std::move(v), std::move(nodes),
                        [widths, batch, stride](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node<T>& p = *self.parents[k];
      if (p.requires_grad) {
        auto& g = p.grad_buffer();
        for (std::size_t n = 0; n < batch; ++n) {
          const T* src = self.grad.data() + n * stride + off;
          T* dst = g.data() + n * widths[k];
          for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
        }
      }
      off += widths[k];
    }
  });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (x.rank() < 2 || count == 0 || begin + count > x.dim(1)) {
    throw Error(ErrorCode::kShape, "slice_channels: channels [" + std::to_string(begin) + ", " +
                                       std::to_string(begin + count) + ") of " +
                                       shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t in_stride = x.numel() / batch;
  const std::size_t plane = in_stride / x.dim(1);
  const std::size_t width = count * plane, offset = begin * plane;
  Shape shape = x.shape();
  shape[1] = count;
  std::vector<T> v(batch * width);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* src = x.data().data() + n * in_stride + offset;
    std::copy(src, src + width, v.begin() + n * width);
  }
  return make_result<T>(std::move(shape), std::move(v), {x.node()},
                        [batch, in_stride, width, offset](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto& g = px.grad_buffer();
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < width; ++i) g[n * in_stride + offset + i] += self.grad[n * width + i];
  });
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const Tensor<T>& mask, T fill) {
  const std::size_t period = mask.numel();
  const bool broadcast = mask.shape() != x.shape();
  if (broadcast && (x.rank() == 0 || period * x.dim(0) != x.numel())) {
    shape_error("masked_fill", x.shape(), mask.shape());
  }
  std::vector<T> v(x.data());
  const auto& m = mask.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (m[i % period] != T(0)) v[i] = fill;
  }
  return make_result<T>(x.shape(), std::move(v), {x.node(), mask.node()},
                        [period](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    const auto& m = self.parents[1]->value;
    if (!px.requires_grad) return;
    auto& g = px.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (m[i % period] == T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> diff_x(const Tensor<T>& x, T spacing) { return axis_diff(x, 0, spacing, "diff_x"); }
template <typename T>
Tensor<T> diff_y(const Tensor<T>& x, T spacing) { return axis_diff(x, 1, spacing, "diff_y"); }

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return make_result<T>({}, {acc}, {x.node()}, [](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (T& g : px.grad_buffer()) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw Error(ErrorCode::kShape, "mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same("mse", pred.shape(), target.shape());
  const std::size_t n = pred.numel();
  if (n == 0) throw Error(ErrorCode::kShape, "mse of empty tensors");
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T e = pred.data()[i] - target.data()[i];
    acc += e * e;
  }
  return make_result<T>({}, {acc / static_cast<T>(n)}, {pred.node(), target.node()},
                        [n](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    Node<T>& t = *self.parents[1];
    const T k = T(2) * self.grad[0] / static_cast<T>(n);
    if (p.requires_grad) {
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (p.value[i] - t.value[i]);
    }
    if (t.requires_grad) {
      auto& g = t.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (p.value[i] - t.value[i]);
    }
  });
}

#define SWNET_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                   \
  template Tensor<T> conv(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,               \
                          const ConvGeometry&);                                               \
  template Tensor<T> conv_transpose(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                    const ConvGeometry&);                                     \
  template Tensor<T> maxpool2d(const Tensor<T>&);                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> selu(const Tensor<T>&);                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                          \
  template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);              \
  template Tensor<T> masked_fill(const Tensor<T>&, const Tensor<T>&, T);                      \
  template Tensor<T> diff_x(const Tensor<T>&, T);                                             \
  template Tensor<T> diff_y(const Tensor<T>&, T);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);

SWNET_INSTANTIATE(float)
SWNET_INSTANTIATE(double)

}  // namespace swnet::nn

#include "retisynth/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace retisynth {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

template <typename T>
void check_finite(const Buffer<T>& v, const char* op) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw NumericError(std::string("non-finite value produced by ") + op + " at flat index " + std::to_string(i));
}

template <typename T>
BasicTensor<T> make_result(Shape shape, Buffer<T> values, const char* op, std::vector<NodePtr<T>> inputs,
                           std::function<void(detail::Node<T>&)> backward) {
  check_finite(values, op);
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool needs_grad = grad_enabled() &&
                    std::any_of(inputs.begin(), inputs.end(), [](const auto& n) { return n->requires_grad; });
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return BasicTensor<T>(std::move(node));
}

// Accumulation target for input i, or nullptr if it does not want gradients.
template <typename T>
T* grad_of(detail::Node<T>& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename T>
void require_rank(const BasicTensor<T>& a, std::size_t rank, const char* op, const char* what) {
  if (a.rank() != rank)
    throw DimensionError(std::string(op) + ": " + what + " must be rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
}

struct ConvGeometry {
  std::size_t channels, height, width;      // image side
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;                 // sliding-window grid
};

// Unfolds one C×H×W image into rows (c,ky,kx) × columns (oy,ox), writing at
// column offset `col` of a row-major matrix with leading dimension `ld`.
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* dst, std::size_t ld) {
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = dst + ((c * g.kh + ky) * g.kw + kx) * ld;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* out = row + oy * g.out_w;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + g.out_w, T(0));
            continue;
          }
          const T* src = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            out[ox] = (ix < 0 || ix >= w) ? T(0) : src[ix];
          }
        }
      }
}

template <typename T>
void col2im(const T* src, const ConvGeometry& g, T* img, std::size_t ld) {
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = src + ((c * g.kh + ky) * g.kw + kx) * ld;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= h) continue;
          const T* in = row + oy * g.out_w;
          T* dst = img + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < w) dst[ix] += in[ox];
          }
        }
      }
}

// NCHW <-> C × (N·HW) so one GEMM covers the whole batch.
template <typename T>
void nchw_to_cm(const T* src, std::size_t n, std::size_t c, std::size_t hw, T* dst) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(src + (b * c + ch) * hw, hw, dst + ch * n * hw + b * hw);
}

template <typename T>
void cm_to_nchw_add(const T* src, std::size_t n, std::size_t c, std::size_t hw, T* dst) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* s = src + ch * n * hw + b * hw;
      T* d = dst + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) d[i] += s[i];
    }
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), "add", {a.node(), b.node()}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (T* g = grad_of(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {a.node(), b.node()}, [](detail::Node<T>& self) {
    if (T* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (T* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {a.node(), b.node()}, [](detail::Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (T* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (T* g = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  Buffer<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result<T>(a.shape(), std::move(out), "scale", {a.node()}, [factor](detail::Node<T>& self) {
    if (T* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return make_result<T>(Shape{1}, {s}, "sum", {a.node()}, [](detail::Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  return make_result<T>(Shape{1}, {s * inv}, "mean", {a.node()}, [inv](detail::Node<T>& self) {
    if (T* g = grad_of(self, 0)) {
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0] * inv;
    }
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Buffer<T> out(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {a.node()}, [](detail::Node<T>& self) {
    if (T* g = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (weight.dim(1) != in)
    throw DimensionError("linear: input features " + std::to_string(in) + " != weight in-features (axis 1) " +
                         std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != out)
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(out) + "]");
  Buffer<T> y(n * out);
  MapR<T> ym(y.data(), n, out);
  ym.noalias() = CMapR<T>(x.data().data(), n, in) * CMapR<T>(weight.data().data(), out, in).transpose();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < out; ++o) y[r * out + o] += bias.data()[o];
  return make_result<T>(Shape{n, out}, std::move(y), "linear", {x.node(), weight.node(), bias.node()},
                        [n, in, out](detail::Node<T>& self) {
                          CMapR<T> g(self.grad.data(), n, out);
                          if (T* gx = grad_of(self, 0))
                            MapR<T>(gx, n, in).noalias() += g * CMapR<T>(self.inputs[1]->value.data(), out, in);
                          if (T* gw = grad_of(self, 1))
                            MapR<T>(gw, out, in).noalias() +=
                                g.transpose() * CMapR<T>(self.inputs[0]->value.data(), n, in);
                          if (T* gb = grad_of(self, 2))
                            for (std::size_t r = 0; r < n; ++r)
                              for (std::size_t o = 0; o < out; ++o) gb[o] += g(r, o);
                        });
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      std::size_t stride, std::size_t pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c)
    throw DimensionError("conv2d: input channels (axis 1) " + std::to_string(c) +
                         " != weight in-channels (axis 1) " + std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != o)
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(o) + "]");
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw ConfigError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " larger than padded input " +
                      std::to_string(h + 2 * pad) + "x" + std::to_string(w + 2 * pad));
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  const ConvGeometry geo{c, h, w, kh, kw, stride, pad, ho, wo};
  const std::size_t rows = c * kh * kw, hw_out = ho * wo, cols = n * hw_out;

  auto col = std::make_shared<Buffer<T>>(rows * cols);
  for (std::size_t b = 0; b < n; ++b) im2col(input.data().data() + b * c * h * w, geo, col->data() + b * hw_out, cols);
  Buffer<T> tmp(o * cols);
  MapR<T>(tmp.data(), o, cols).noalias() =
      CMapR<T>(weight.data().data(), o, rows) * CMapR<T>(col->data(), rows, cols);
  Buffer<T> out(n * o * hw_out, T(0));
  cm_to_nchw_add(tmp.data(), n, o, hw_out, out.data());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < o; ++ch) {
      T* p = out.data() + (b * o + ch) * hw_out;
      const T bv = bias.data()[ch];
      for (std::size_t i = 0; i < hw_out; ++i) p[i] += bv;
    }

  return make_result<T>(
      Shape{n, o, ho, wo}, std::move(out), "conv2d", {input.node(), weight.node(), bias.node()},
      [geo, n, o, rows, hw_out, cols, col](detail::Node<T>& self) {
        Buffer<T> gp(o * cols);
        nchw_to_cm(self.grad.data(), n, o, hw_out, gp.data());
        CMapR<T> g(gp.data(), o, cols);
        if (T* gb = grad_of(self, 2))
          for (std::size_t ch = 0; ch < o; ++ch) gb[ch] += g.row(ch).sum();
        if (T* gw = grad_of(self, 1))
          MapR<T>(gw, o, rows).noalias() += g * CMapR<T>(col->data(), rows, cols).transpose();
        if (T* gx = grad_of(self, 0)) {
          Buffer<T> dcol(rows * cols);
          MapR<T>(dcol.data(), rows, cols).noalias() =
              CMapR<T>(self.inputs[1]->value.data(), o, rows).transpose() * g;
          const std::size_t img = geo.channels * geo.height * geo.width;
          for (std::size_t b = 0; b < n; ++b) col2im(dcol.data() + b * hw_out, geo, gx + b * img, cols);
        }
      });
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride, std::size_t pad) {
  require_rank(input, 4, "conv_transpose2d", "input");
  require_rank(weight, 4, "conv_transpose2d", "weight");
  if (stride < 1) throw ConfigError("conv_transpose2d: stride must be >= 1");
  const std::size_t n = input.dim(0), ci = input.dim(1), hi = input.dim(2), wi = input.dim(3);
  const std::size_t co = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(0) != ci)
    throw DimensionError("conv_transpose2d: input channels (axis 1) " + std::to_string(ci) +
                         " != weight in-channels (axis 0) " + std::to_string(weight.dim(0)));
  if (bias.rank() != 1 || bias.dim(0) != co)
    throw DimensionError("conv_transpose2d: bias shape " + shape_str(bias.shape()) + " != [" + std::to_string(co) +
                         "]");
  const long ho_l = static_cast<long>((hi - 1) * stride + kh) - static_cast<long>(2 * pad);
  const long wo_l = static_cast<long>((wi - 1) * stride + kw) - static_cast<long>(2 * pad);
  if (ho_l < 1 || wo_l < 1) throw ConfigError("conv_transpose2d: non-positive output size");
  const std::size_t ho = static_cast<std::size_t>(ho_l), wo = static_cast<std::size_t>(wo_l);
  // The output plays the role of the conv2d input; the input grid is the
  // conv2d output grid.
  const ConvGeometry geo{co, ho, wo, kh, kw, stride, pad, hi, wi};
  const std::size_t rows = co * kh * kw, hw_in = hi * wi, cols = n * hw_in, hw_out = ho * wo;

  auto xp = std::make_shared<Buffer<T>>(ci * cols);
  nchw_to_cm(input.data().data(), n, ci, hw_in, xp->data());
  Buffer<T> col(rows * cols);
  MapR<T>(col.data(), rows, cols).noalias() =
      CMapR<T>(weight.data().data(), ci, rows).transpose() * CMapR<T>(xp->data(), ci, cols);
  Buffer<T> out(n * co * hw_out, T(0));
  for (std::size_t b = 0; b < n; ++b) col2im(col.data() + b * hw_in, geo, out.data() + b * co * hw_out, cols);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < co; ++ch) {
      T* p = out.data() + (b * co + ch) * hw_out;
      const T bv = bias.data()[ch];
      for (std::size_t i = 0; i < hw_out; ++i) p[i] += bv;
    }

  return make_result<T>(
      Shape{n, co, ho, wo}, std::move(out), "conv_transpose2d", {input.node(), weight.node(), bias.node()},
      [geo, n, ci, co, rows, hw_in, hw_out, cols, xp](detail::Node<T>& self) {
        if (T* gb = grad_of(self, 2))
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < co; ++ch) {
              const T* p = self.grad.data() + (b * co + ch) * hw_out;
              T s = T(0);
              for (std::size_t i = 0; i < hw_out; ++i) s += p[i];
              gb[ch] += s;
            }
        T* gw = grad_of(self, 1);
        T* gx = grad_of(self, 0);
        if (!gw && !gx) return;
        Buffer<T> dcol(rows * cols);
        for (std::size_t b = 0; b < n; ++b)
          im2col(self.grad.data() + b * co * hw_out, geo, dcol.data() + b * hw_in, cols);
        CMapR<T> dc(dcol.data(), rows, cols);
        if (gw) MapR<T>(gw, ci, rows).noalias() += CMapR<T>(xp->data(), ci, cols) * dc.transpose();
        if (gx) {
          Buffer<T> dxp(ci * cols);
          MapR<T>(dxp.data(), ci, cols).noalias() = CMapR<T>(self.inputs[1]->value.data(), ci, rows) * dc;
          cm_to_nchw_add(dxp.data(), n, ci, hw_in, gx);
        }
      });
}

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                           BatchNormStats<T>& stats, NormMode mode, T momentum, T eps) {
  if (input.rank() != 4 && input.rank() != 2)
    throw DimensionError("batchnorm2d: input must be NCHW or NxC, got " + shape_str(input.shape()));
  if (!(eps > T(0))) throw ConfigError("batchnorm2d: eps must be > 0");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t hw = input.rank() == 4 ? input.dim(2) * input.dim(3) : 1;
  if (gamma.numel() != c || beta.numel() != c)
    throw DimensionError("batchnorm2d: gamma/beta length must equal channels (axis 1) = " + std::to_string(c));
  if (stats.running_mean.size() != c || stats.running_var.size() != c)
    throw DimensionError("batchnorm2d: running stats length != channels " + std::to_string(c));
  const std::size_t m = n * hw;
  if (mode == NormMode::train && m < 2)
    throw NumericError("batchnorm2d: degenerate variance, train mode needs more than one value per channel");

  Buffer<T> mu(c), inv_std(c);
  if (mode == NormMode::train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s = T(0);
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = input.data().data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mu[ch] = s / static_cast<T>(m);
      T v = T(0);
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = input.data().data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) v += (p[i] - mu[ch]) * (p[i] - mu[ch]);
      }
      v /= static_cast<T>(m);
      inv_std[ch] = T(1) / std::sqrt(v + eps);
      stats.running_mean[ch] = (T(1) - momentum) * stats.running_mean[ch] + momentum * mu[ch];
      stats.running_var[ch] =
          (T(1) - momentum) * stats.running_var[ch] + momentum * v * static_cast<T>(m) / static_cast<T>(m - 1);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats.running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(stats.running_var[ch] + eps);
    }
  }

  auto xhat = std::make_shared<Buffer<T>>(input.numel());
  Buffer<T> out(input.numel());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (input.data()[off + i] - mu[ch]) * inv_std[ch];
        (*xhat)[off + i] = xh;
        out[off + i] = gamma.data()[ch] * xh + beta.data()[ch];
      }
    }

  const bool train = mode == NormMode::train;
  return make_result<T>(
      input.shape(), std::move(out), "batchnorm2d", {input.node(), gamma.node(), beta.node()},
      [n, c, hw, m, train, xhat, inv_std](detail::Node<T>& self) {
        const auto& gam = self.inputs[1]->value;
        Buffer<T> sum_g(c, T(0)), sum_gx(c, T(0));
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g[ch] += self.grad[off + i];
              sum_gx[ch] += self.grad[off + i] * (*xhat)[off + i];
            }
          }
        if (T* gg = grad_of(self, 1))
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
        if (T* gbeta = grad_of(self, 2))
          for (std::size_t ch = 0; ch < c; ++ch) gbeta[ch] += sum_g[ch];
        if (T* gx = grad_of(self, 0)) {
          const T inv_m = T(1) / static_cast<T>(m);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t off = (b * c + ch) * hw;
              const T k = gam[ch] * inv_std[ch];
              for (std::size_t i = 0; i < hw; ++i) {
                const T g = self.grad[off + i];
                gx[off + i] += train ? k * (g - inv_m * sum_g[ch] - (*xhat)[off + i] * inv_m * sum_gx[ch]) : k * g;
              }
            }
        }
      });
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation act) {
  if (act.kind == ActivationKind::leaky_relu && !(act.slope > 0.0 && act.slope < 1.0))
    throw ConfigError("leaky_relu: slope must lie in (0,1)");
  const T slope = static_cast<T>(act.slope);
  Buffer<T> out(input.numel());
  const auto x = input.data();
  switch (act.kind) {
    case ActivationKind::relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case ActivationKind::leaky_relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : slope * x[i];
      break;
    case ActivationKind::tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    case ActivationKind::sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (x[i] >= T(0)) {
          out[i] = T(1) / (T(1) + std::exp(-x[i]));
        } else {
          const T e = std::exp(x[i]);
          out[i] = e / (T(1) + e);
        }
      }
      break;
  }
  static constexpr const char* names[] = {"relu", "leaky_relu", "tanh", "sigmoid"};
  const auto kind = act.kind;
  return make_result<T>(input.shape(), std::move(out), names[static_cast<int>(kind)], {input.node()},
                        [kind, slope](detail::Node<T>& self) {
                          T* gx = grad_of(self, 0);
                          if (!gx) return;
                          const auto& xv = self.inputs[0]->value;
                          const auto& yv = self.value;
                          const std::size_t len = yv.size();
                          switch (kind) {
                            case ActivationKind::relu:
                              for (std::size_t i = 0; i < len; ++i)
                                if (xv[i] > T(0)) gx[i] += self.grad[i];
                              break;
                            case ActivationKind::leaky_relu:
                              for (std::size_t i = 0; i < len; ++i)
                                gx[i] += xv[i] > T(0) ? self.grad[i] : slope * self.grad[i];
                              break;
                            case ActivationKind::tanh:
                              for (std::size_t i = 0; i < len; ++i) gx[i] += self.grad[i] * (T(1) - yv[i] * yv[i]);
                              break;
                            case ActivationKind::sigmoid:
                              for (std::size_t i = 0; i < len; ++i) gx[i] += self.grad[i] * yv[i] * (T(1) - yv[i]);
                              break;
                          }
                        });
}

template <typename T>
BasicTensor<T> pool_and_resize(const BasicTensor<T>& input, PoolKind kind) {
  require_rank(input, 4, "pool_and_resize", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto x = input.data();
  switch (kind) {
    case PoolKind::avg_pool2: {
      if (h % 2 || w % 2)
        throw DimensionError("avg_pool2: spatial dims (axes 2,3) must be even, got " + shape_str(input.shape()));
      const std::size_t oh = h / 2, ow = w / 2;
      Buffer<T> out(n * c * oh * ow);
      for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx) {
            const T* s = x.data() + p * h * w + 2 * y * w + 2 * xx;
            out[(p * oh + y) * ow + xx] = (s[0] + s[1] + s[w] + s[w + 1]) * T(0.25);
          }
      return make_result<T>(Shape{n, c, oh, ow}, std::move(out), "avg_pool2", {input.node()},
                            [n, c, h, w, oh, ow](detail::Node<T>& self) {
                              T* gx = grad_of(self, 0);
                              if (!gx) return;
                              for (std::size_t p = 0; p < n * c; ++p)
                                for (std::size_t y = 0; y < oh; ++y)
                                  for (std::size_t xx = 0; xx < ow; ++xx) {
                                    const T g = self.grad[(p * oh + y) * ow + xx] * T(0.25);
                                    T* d = gx + p * h * w + 2 * y * w + 2 * xx;
                                    d[0] += g;
                                    d[1] += g;
                                    d[w] += g;
                                    d[w + 1] += g;
                                  }
                            });
    }
    case PoolKind::global_avg: {
      const std::size_t hw = h * w;
      Buffer<T> out(n * c);
      for (std::size_t p = 0; p < n * c; ++p) {
        T s = T(0);
        for (std::size_t i = 0; i < hw; ++i) s += x[p * hw + i];
        out[p] = s / static_cast<T>(hw);
      }
      return make_result<T>(Shape{n, c}, std::move(out), "global_avg", {input.node()},
                            [n, c, hw](detail::Node<T>& self) {
                              T* gx = grad_of(self, 0);
                              if (!gx) return;
                              for (std::size_t p = 0; p < n * c; ++p) {
                                const T g = self.grad[p] / static_cast<T>(hw);
                                for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
                              }
                            });
    }
    case PoolKind::nearest_upsample2: {
      const std::size_t oh = 2 * h, ow = 2 * w;
      Buffer<T> out(n * c * oh * ow);
      for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx) out[(p * oh + y) * ow + xx] = x[p * h * w + (y / 2) * w + xx / 2];
      return make_result<T>(Shape{n, c, oh, ow}, std::move(out), "nearest_upsample2", {input.node()},
                            [n, c, h, w, oh, ow](detail::Node<T>& self) {
                              T* gx = grad_of(self, 0);
                              if (!gx) return;
                              for (std::size_t p = 0; p < n * c; ++p)
                                for (std::size_t y = 0; y < oh; ++y)
                                  for (std::size_t xx = 0; xx < ow; ++xx)
                                    gx[p * h * w + (y / 2) * w + xx / 2] += self.grad[(p * oh + y) * ow + xx];
                            });
    }
  }
  throw ContractError("pool_and_resize: unknown kind");
}

template <typename T>
BasicTensor<T> bce(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred, target, "bce");
  const T lo = static_cast<T>(kProbClamp), hi = T(1) - static_cast<T>(kProbClamp);
  const std::size_t m = pred.numel();
  auto clamped = std::make_shared<Buffer<T>>(m);
  T total = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    const T p = pred.data()[i], t = target.data()[i];
    if (!(p >= T(0) && p <= T(1))) throw ContractError("bce: prediction outside [0,1] at index " + std::to_string(i));
    if (!(t >= T(0) && t <= T(1))) throw LabelError("bce: target outside [0,1] at index " + std::to_string(i));
    const T pc = std::clamp(p, lo, hi);
    (*clamped)[i] = pc;
    total -= t * std::log(pc) + (T(1) - t) * std::log(T(1) - pc);
  }
  auto targets = std::make_shared<Buffer<T>>(target.data().begin(), target.data().end());
  return make_result<T>(Shape{1}, {total / static_cast<T>(m)}, "bce", {pred.node()},
                        [m, clamped, targets](detail::Node<T>& self) {
                          T* gp = grad_of(self, 0);
                          if (!gp) return;
                          const T s = self.grad[0] / static_cast<T>(m);
                          for (std::size_t i = 0; i < m; ++i) {
                            const T pc = (*clamped)[i];
                            gp[i] += s * (pc - (*targets)[i]) / (pc * (T(1) - pc));
                          }
                        });
}

template <typename T>
BasicTensor<T> softmax_xent(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_xent", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(n));
  auto probs = std::make_shared<Buffer<T>>(n * k);
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  T total = T(0);
  for (std::size_t r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw LabelError("softmax_xent: class index " + std::to_string(y) + " out of range [0," + std::to_string(k) +
                       ")");
    const T* z = logits.data().data() + r * k;
    const T zmax = *std::max_element(z, z + k);
    T s = T(0);
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - zmax);
    const T lse = zmax + std::log(s);
    for (std::size_t j = 0; j < k; ++j) (*probs)[r * k + j] = std::exp(z[j] - lse);
    total += lse - z[y];
  }
  return make_result<T>(Shape{1}, {total / static_cast<T>(n)}, "softmax_xent", {logits.node()},
                        [n, k, probs, lab](detail::Node<T>& self) {
                          T* g = grad_of(self, 0);
                          if (!g) return;
                          const T s = self.grad[0] / static_cast<T>(n);
                          for (std::size_t r = 0; r < n; ++r)
                            for (std::size_t j = 0; j < k; ++j) {
                              const T onehot = static_cast<std::size_t>((*lab)[r]) == j ? T(1) : T(0);
                              g[r * k + j] += s * ((*probs)[r * k + j] - onehot);
                            }
                        });
}

template <typename T>
BasicTensor<T> l2(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred, target, "l2");
  const std::size_t m = pred.numel();
  T total = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    const T d = pred.data()[i] - target.data()[i];
    total += d * d;
  }
  return make_result<T>(Shape{1}, {total / static_cast<T>(m)}, "l2", {pred.node(), target.node()},
                        [m](detail::Node<T>& self) {
                          const auto& p = self.inputs[0]->value;
                          const auto& t = self.inputs[1]->value;
                          const T s = T(2) * self.grad[0] / static_cast<T>(m);
                          if (T* gp = grad_of(self, 0))
                            for (std::size_t i = 0; i < m; ++i) gp[i] += s * (p[i] - t[i]);
                          if (T* gt = grad_of(self, 1))
                            for (std::size_t i = 0; i < m; ++i) gt[i] -= s * (p[i] - t[i]);
                        });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Buffer<T> out(n * k);
  for (std::size_t r = 0; r < n; ++r) {
    const T* z = logits.data().data() + r * k;
    const T zmax = *std::max_element(z, z + k);
    T s = T(0);
    for (std::size_t j = 0; j < k; ++j) s += (out[r * k + j] = std::exp(z[j] - zmax));
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= s;
  }
  return BasicTensor<T>(Shape{n, k}, std::move(out));
}

#define RETISYNTH_INSTANTIATE_OPS(T)                                                                             \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                       \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                            \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                                 \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,            \
                                 std::size_t, std::size_t);                                                      \
  template BasicTensor<T> conv_transpose2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                           std::size_t, std::size_t);                                            \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
                                      BatchNormStats<T>&, NormMode, T, T);                                       \
  template BasicTensor<T> activation(const BasicTensor<T>&, Activation);                                         \
  template BasicTensor<T> pool_and_resize(const BasicTensor<T>&, PoolKind);                                      \
  template BasicTensor<T> bce(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> softmax_xent(const BasicTensor<T>&, std::span<const int>);                             \
  template BasicTensor<T> l2(const BasicTensor<T>&, const BasicTensor<T>&);                                      \
  template BasicTensor<T> softmax(const BasicTensor<T>&);

RETISYNTH_INSTANTIATE_OPS(float)
RETISYNTH_INSTANTIATE_OPS(double)

}  // namespace retisynth

#include <Eigen/Core>
#include <algorithm>

#include "durn/autograd.hpp"
#include "durn/nn_ops.hpp"

namespace durn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on the im2col buffer, in elements.
constexpr std::int64_t kColumnBudget = std::int64_t{1} << 21;

struct Geometry {
  std::int64_t n, cin, h, w, cout, ho, wo;
  int k, dil, stride, pad;
  std::int64_t K() const { return cin * k * k; }
  std::int64_t tile_rows() const {
    return std::clamp<std::int64_t>(kColumnBudget / std::max<std::int64_t>(1, K() * wo), 1, ho);
  }
};

template <typename T>
void im2col(const T* x, const Geometry& g, std::int64_t oh0, std::int64_t rows, RowMat<T>& col) {
  const std::int64_t P = rows * g.wo;
  col.resize(g.K(), P);
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    const T* plane = x + ci * g.h * g.w;
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        T* dst = col.data() + ((ci * g.k + kh) * g.k + kw) * P;
        for (std::int64_t r = 0; r < rows; ++r) {
          const std::int64_t ih = (oh0 + r) * g.stride - g.pad + kh * g.dil;
          T* row = dst + r * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill_n(row, g.wo, T(0));
            continue;
          }
          const T* src = plane + ih * g.w;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kw * g.dil;
            row[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const RowMat<T>& col, const Geometry& g, std::int64_t oh0, std::int64_t rows,
                T* dx) {
  const std::int64_t P = rows * g.wo;
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    T* plane = dx + ci * g.h * g.w;
    for (int kh = 0; kh < g.k; ++kh) {
      for (int kw = 0; kw < g.k; ++kw) {
        const T* src = col.data() + ((ci * g.k + kh) * g.k + kw) * P;
        for (std::int64_t r = 0; r < rows; ++r) {
          const std::int64_t ih = (oh0 + r) * g.stride - g.pad + kh * g.dil;
          if (ih < 0 || ih >= g.h) continue;
          T* dst = plane + ih * g.w;
          const T* row = src + r * g.wo;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * g.stride - g.pad + kw * g.dil;
            if (iw >= 0 && iw < g.w) dst[iw] += row[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, const Geometry& g,
                  Tensor& out) {
  const T* px = x.data<T>();
  const T* pw = weight.data<T>();
  T* po = out.data<T>();
  const std::int64_t hw_out = g.ho * g.wo;
  Eigen::Map<const RowMat<T>> W(pw, g.cout, g.K());
  RowMat<T> col;
  const std::int64_t tile = g.tile_rows();
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* xn = px + n * g.cin * g.h * g.w;
    T* on = po + n * g.cout * hw_out;
    for (std::int64_t oh0 = 0; oh0 < g.ho; oh0 += tile) {
      const std::int64_t rows = std::min(tile, g.ho - oh0);
      im2col(xn, g, oh0, rows, col);
      StridedMap<T> O(on + oh0 * g.wo, g.cout, rows * g.wo, Eigen::OuterStride<>(hw_out));
      O.noalias() = W * col;
    }
    if (bias.defined()) {
      const T* pb = bias.data<T>();
      for (std::int64_t co = 0; co < g.cout; ++co) {
        T* plane = on + co * hw_out;
        for (std::int64_t i = 0; i < hw_out; ++i) plane[i] += pb[co];
      }
    }
  }
}

template <typename T>
void conv_backward(const Tensor& grad, const Tensor& x, const Tensor& weight, const Geometry& g,
                   bool need_x, bool need_w, bool need_b, std::vector<Tensor>& grads) {
  const T* pg = grad.data<T>();
  const T* px = x.data<T>();
  const std::int64_t hw_out = g.ho * g.wo;
  Eigen::Map<const RowMat<T>> W(weight.data<T>(), g.cout, g.K());

  Tensor dx, dw;
  if (need_x) dx = Tensor(x.shape(), x.dtype());
  if (need_w) dw = Tensor(weight.shape(), weight.dtype());
  RowMat<T> col, dcol;
  RowMat<T> dw_acc;
  if (need_w) dw_acc = RowMat<T>::Zero(g.cout, g.K());

  const std::int64_t tile = g.tile_rows();
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* xn = px + n * g.cin * g.h * g.w;
    const T* gn = pg + n * g.cout * hw_out;
    for (std::int64_t oh0 = 0; oh0 < g.ho; oh0 += tile) {
      const std::int64_t rows = std::min(tile, g.ho - oh0);
      ConstStridedMap<T> G(gn + oh0 * g.wo, g.cout, rows * g.wo, Eigen::OuterStride<>(hw_out));
      if (need_w) {
        im2col(xn, g, oh0, rows, col);
        dw_acc.noalias() += G * col.transpose();
      }
      if (need_x) {
        dcol.resize(g.K(), rows * g.wo);
        dcol.noalias() = W.transpose() * G;
        col2im_add(dcol, g, oh0, rows, dx.data<T>() + n * g.cin * g.h * g.w);
      }
    }
  }
  if (need_x) grads[0] = std::move(dx);
  if (need_w) {
    std::copy_n(dw_acc.data(), dw_acc.size(), dw.data<T>());
    grads[1] = std::move(dw);
  }
  if (need_b) {
    Tensor db(Shape{g.cout}, grad.dtype());
    T* p = db.data<T>();
    for (std::int64_t co = 0; co < g.cout; ++co) {
      double s = 0.0;
      for (std::int64_t n = 0; n < g.n; ++n) {
        const T* plane = pg + (n * g.cout + co) * hw_out;
        for (std::int64_t i = 0; i < hw_out; ++i) s += plane[i];
      }
      p[co] = static_cast<T>(s);
    }
    grads[2] = std::move(db);
  }
}

}  // namespace

int receptive_field(int kernel, int dilation) { return dilation * (kernel - 1) + 1; }

int ConvSpec::receptive_field() const { return durn::receptive_field(kernel, dilation); }

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0)
    throw ConfigError("conv channels must be positive");
  if (kernel <= 0 || kernel % 2 == 0)
    throw ConfigError("conv kernel must be a positive odd integer, got " + std::to_string(kernel));
  if (dilation <= 0 || stride <= 0) throw ConfigError("conv dilation and stride must be positive");
}

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias) {
  spec.validate();
  if (x.rank() != 4) throw DimensionError("conv2d expects NCHW input, got " + to_string(x.shape()));
  if (x.dim(1) != spec.in_channels)
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
                         std::to_string(spec.in_channels));
  const Shape wshape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (weight.shape() != wshape)
    throw DimensionError("conv2d: weight shape " + to_string(weight.shape()) + ", expected " +
                         to_string(wshape));
  if (spec.bias != bias.defined())
    throw ContractError("conv2d: bias presence does not match spec");
  if (bias.defined() && bias.shape() != Shape{spec.out_channels})
    throw DimensionError("conv2d: bias shape " + to_string(bias.shape()));
  if (weight.dtype() != x.dtype() || (bias.defined() && bias.dtype() != x.dtype()))
    throw ContractError("conv2d: dtype mismatch");

  Geometry g{};
  g.n = x.dim(0);
  g.cin = spec.in_channels;
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = spec.out_channels;
  g.k = spec.kernel;
  g.dil = spec.dilation;
  g.stride = spec.stride;
  g.pad = spec.padding();
  g.ho = (g.h - 1) / g.stride + 1;
  g.wo = (g.w - 1) / g.stride + 1;

  Tensor out(Shape{g.n, g.cout, g.ho, g.wo}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) { conv_forward<decltype(tag)>(x, weight, bias, g, out); });

  Tensor sx = x.detach();
  Tensor sw = weight.detach();
  const bool need_x = x.requires_grad();
  const bool need_w = weight.requires_grad();
  const bool need_b = bias.defined() && bias.requires_grad();
  return record(std::move(out), "conv2d", {&x, &weight, &bias},
                [sx, sw, g, need_x, need_w, need_b](const Tensor& grad, std::vector<Tensor>& grads) {
                  dispatch(grad.dtype(), [&](auto tag) {
                    conv_backward<decltype(tag)>(grad, sx, sw, g, need_x, need_w, need_b, grads);
                  });
                });
}

}  // namespace durn

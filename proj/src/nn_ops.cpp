#include <Eigen/Core>
#include <memory>

#include "durn/autograd.hpp"
#include "durn/nn_ops.hpp"
#include "durn/ops.hpp"

namespace durn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using IndexMap = std::vector<std::int64_t>;

// out[i] = x[map[i]]; the backward pass scatter-adds, so maps that repeat
// source indices (nearest upsampling) differentiate correctly.
Tensor gather(const Tensor& x, Shape out_shape, std::shared_ptr<const IndexMap> map,
              const char* name) {
  Tensor out(std::move(out_shape), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = x.data<T>();
    T* dst = out.data<T>();
    for (std::size_t i = 0; i < map->size(); ++i) dst[i] = src[(*map)[i]];
  });
  Shape in_shape = x.shape();
  return record(std::move(out), name, {&x},
                [map, in_shape](const Tensor& g, std::vector<Tensor>& grads) {
                  Tensor gi(in_shape, g.dtype());
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = g.data<T>();
                    T* p = gi.data<T>();
                    for (std::size_t i = 0; i < map->size(); ++i) p[(*map)[i]] += pg[i];
                  });
                  grads[0] = std::move(gi);
                });
}

void require_nchw(const Tensor& x, const char* op) {
  if (x.rank() != 4)
    throw DimensionError(std::string(op) + " expects NCHW input, got " + to_string(x.shape()));
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, int r) {
  require_nchw(x, "pixel_shuffle");
  if (r <= 0) throw ConfigError("pixel_shuffle factor must be positive");
  const auto n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (cin % (r * r) != 0)
    throw DimensionError("pixel_shuffle: " + std::to_string(cin) + " channels not divisible by " +
                         std::to_string(r * r));
  const auto c = cin / (r * r);
  const auto H = h * r, W = w * r;
  auto map = std::make_shared<IndexMap>();
  map->reserve(static_cast<std::size_t>(x.numel()));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t oy = 0; oy < H; ++oy)
        for (std::int64_t ox = 0; ox < W; ++ox) {
          const auto src_c = ch * r * r + (oy % r) * r + (ox % r);
          map->push_back(((b * cin + src_c) * h + oy / r) * w + ox / r);
        }
  return gather(x, Shape{n, c, H, W}, std::move(map), "pixel_shuffle");
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  require_nchw(x, "pixel_unshuffle");
  if (r <= 0) throw ConfigError("pixel_unshuffle factor must be positive");
  const auto n = x.dim(0), c = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % r != 0 || W % r != 0)
    throw DimensionError("pixel_unshuffle: spatial size not divisible by " + std::to_string(r));
  const auto h = H / r, w = W / r, cout = c * r * r;
  auto map = std::make_shared<IndexMap>();
  map->reserve(static_cast<std::size_t>(x.numel()));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t oc = 0; oc < cout; ++oc)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) {
          const auto ch = oc / (r * r), a = (oc / r) % r, bb = oc % r;
          map->push_back(((b * c + ch) * H + y * r + a) * W + xx * r + bb);
        }
  return gather(x, Shape{n, cout, h, w}, std::move(map), "pixel_unshuffle");
}

Tensor upsample_nearest(const Tensor& x, int r) {
  require_nchw(x, "upsample_nearest");
  if (r <= 0) throw ConfigError("upsample factor must be positive");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto map = std::make_shared<IndexMap>();
  map->reserve(static_cast<std::size_t>(x.numel() * r * r));
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t oy = 0; oy < h * r; ++oy)
      for (std::int64_t ox = 0; ox < w * r; ++ox) map->push_back((p * h + oy / r) * w + ox / r);
  return gather(x, Shape{n, c, h * r, w * r}, std::move(map), "upsample_nearest");
}

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "global_avg_pool");
  return mean(x, {2, 3});
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0))
    throw DimensionError("dense: cannot apply weight " + to_string(weight.shape()) + " to " +
                         to_string(x.shape()));
  const auto n = x.dim(0), f = x.dim(1), g = weight.dim(1);
  if (bias.defined() && bias.shape() != Shape{g})
    throw DimensionError("dense: bias shape " + to_string(bias.shape()));
  if (weight.dtype() != x.dtype() || (bias.defined() && bias.dtype() != x.dtype()))
    throw ContractError("dense: dtype mismatch");

  Tensor out(Shape{n, g}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    Eigen::Map<const RowMat<T>> X(x.data<T>(), n, f);
    Eigen::Map<const RowMat<T>> Wm(weight.data<T>(), f, g);
    Eigen::Map<RowMat<T>> O(out.data<T>(), n, g);
    O.noalias() = X * Wm;
    if (bias.defined()) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(bias.data<T>(), g);
      O.rowwise() += B;
    }
  });

  Tensor sx = x.detach(), sw = weight.detach();
  const bool need_x = x.requires_grad(), need_w = weight.requires_grad();
  const bool need_b = bias.defined() && bias.requires_grad();
  return record(std::move(out), "dense", {&x, &weight, &bias},
                [sx, sw, need_x, need_w, need_b](const Tensor& grad, std::vector<Tensor>& grads) {
                  const auto n = sx.dim(0), f = sx.dim(1), g = sw.dim(1);
                  dispatch(grad.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    Eigen::Map<const RowMat<T>> G(grad.data<T>(), n, g);
                    if (need_x) {
                      Tensor dx(sx.shape(), sx.dtype());
                      Eigen::Map<RowMat<T>>(dx.data<T>(), n, f).noalias() =
                          G * Eigen::Map<const RowMat<T>>(sw.data<T>(), f, g).transpose();
                      grads[0] = std::move(dx);
                    }
                    if (need_w) {
                      Tensor dw(sw.shape(), sw.dtype());
                      Eigen::Map<RowMat<T>>(dw.data<T>(), f, g).noalias() =
                          Eigen::Map<const RowMat<T>>(sx.data<T>(), n, f).transpose() * G;
                      grads[1] = std::move(dw);
                    }
                    if (need_b) {
                      Tensor db(Shape{g}, grad.dtype());
                      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db.data<T>(), g) =
                          G.colwise().sum();
                      grads[2] = std::move(db);
                    }
                  });
                });
}

}  // namespace durn

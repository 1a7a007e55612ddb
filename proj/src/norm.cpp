#include <cmath>
#include <memory>

#include "durn/autograd.hpp"
#include "durn/nn_ops.hpp"
#include "durn/ops.hpp"

namespace durn {

namespace {

// Statistics groups: batch norm pools (N, H, W) per channel, instance norm
// pools (H, W) per (n, c) plane. Every group is a list of contiguous planes.
struct Layout {
  std::int64_t n, c, hw;
  bool per_instance;
  std::int64_t groups() const { return per_instance ? n * c : c; }
  std::int64_t group_size() const { return per_instance ? hw : n * hw; }
  std::int64_t channel_of_group(std::int64_t grp) const { return per_instance ? grp % c : grp; }
  template <typename Fn>
  void for_planes(std::int64_t grp, Fn&& fn) const {
    if (per_instance) {
      fn(grp * hw);
    } else {
      for (std::int64_t b = 0; b < n; ++b) fn((b * c + grp) * hw);
    }
  }
};

struct Saved {
  Tensor xhat;
  std::vector<double> inv_std;
  bool batch_stats;
};

void check_params(const Tensor& x, const NormParams& p, const char* op) {
  if (x.rank() != 4) throw DimensionError(std::string(op) + " expects NCHW input");
  if (p.scale.numel() != x.dim(1) || p.shift.numel() != x.dim(1))
    throw DimensionError(std::string(op) + ": parameters for " + std::to_string(p.scale.numel()) +
                         " channels, input has " + std::to_string(x.dim(1)));
  if (p.scale.dtype() != x.dtype() || p.shift.dtype() != x.dtype())
    throw ContractError(std::string(op) + ": dtype mismatch");
}

template <typename T>
void compute_stats(const T* x, const Layout& L, std::vector<double>& mean, std::vector<double>& var) {
  const auto G = L.groups();
  const auto M = L.group_size();
  mean.assign(static_cast<std::size_t>(G), 0.0);
  var.assign(static_cast<std::size_t>(G), 0.0);
  std::vector<double> buf(static_cast<std::size_t>(M));
  for (std::int64_t grp = 0; grp < G; ++grp) {
    std::size_t k = 0;
    L.for_planes(grp, [&](std::int64_t off) {
      for (std::int64_t i = 0; i < L.hw; ++i) buf[k++] = static_cast<double>(x[off + i]);
    });
    const double mu = pairwise_sum(buf.data(), buf.size()) / static_cast<double>(M);
    for (auto& v : buf) v = (v - mu) * (v - mu);
    mean[static_cast<std::size_t>(grp)] = mu;
    var[static_cast<std::size_t>(grp)] = pairwise_sum(buf.data(), buf.size()) / static_cast<double>(M);
  }
}

Tensor normalize(const Tensor& x, const NormParams& p, const Layout& L,
                 const std::vector<double>& mean, const std::vector<double>& var, bool batch_stats,
                 const char* name) {
  auto saved = std::make_shared<Saved>();
  saved->xhat = Tensor(x.shape(), x.dtype());
  saved->batch_stats = batch_stats;
  saved->inv_std.resize(mean.size());
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    const T* gamma = p.scale.data<T>();
    const T* beta = p.shift.data<T>();
    T* xh = saved->xhat.data<T>();
    T* po = out.data<T>();
    for (std::int64_t grp = 0; grp < L.groups(); ++grp) {
      const auto ug = static_cast<std::size_t>(grp);
      const double inv = 1.0 / std::sqrt(var[ug] + p.eps);
      saved->inv_std[ug] = inv;
      const auto ch = L.channel_of_group(grp);
      L.for_planes(grp, [&](std::int64_t off) {
        for (std::int64_t i = 0; i < L.hw; ++i) {
          const T v = static_cast<T>((px[off + i] - mean[ug]) * inv);
          xh[off + i] = v;
          po[off + i] = gamma[ch] * v + beta[ch];
        }
      });
    }
  });

  Tensor gamma = p.scale.detach();
  const bool need_x = x.requires_grad();
  const bool need_scale = p.scale.requires_grad();
  const bool need_shift = p.shift.requires_grad();
  return record(std::move(out), name, {&x, &p.scale, &p.shift},
                [saved, gamma, L, need_x, need_scale, need_shift](const Tensor& g,
                                                                  std::vector<Tensor>& grads) {
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = g.data<T>();
                    const T* xh = saved->xhat.data<T>();
                    const T* gm = gamma.data<T>();
                    std::vector<double> dgamma(static_cast<std::size_t>(L.c), 0.0);
                    std::vector<double> dbeta(static_cast<std::size_t>(L.c), 0.0);
                    Tensor dx;
                    if (need_x) dx = Tensor(g.shape(), g.dtype());
                    const double M = static_cast<double>(L.group_size());
                    for (std::int64_t grp = 0; grp < L.groups(); ++grp) {
                      const auto ch = L.channel_of_group(grp);
                      double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                      L.for_planes(grp, [&](std::int64_t off) {
                        for (std::int64_t i = 0; i < L.hw; ++i) {
                          const double gi = pg[off + i];
                          dgamma[static_cast<std::size_t>(ch)] += gi * xh[off + i];
                          dbeta[static_cast<std::size_t>(ch)] += gi;
                          const double dxh = gi * gm[ch];
                          sum_dxh += dxh;
                          sum_dxh_xh += dxh * xh[off + i];
                        }
                      });
                      if (!need_x) continue;
                      const double inv = saved->inv_std[static_cast<std::size_t>(grp)];
                      T* pdx = dx.data<T>();
                      L.for_planes(grp, [&](std::int64_t off) {
                        for (std::int64_t i = 0; i < L.hw; ++i) {
                          const double dxh = static_cast<double>(pg[off + i]) * gm[ch];
                          pdx[off + i] = static_cast<T>(
                              saved->batch_stats
                                  ? inv / M * (M * dxh - sum_dxh - xh[off + i] * sum_dxh_xh)
                                  : inv * dxh);
                        }
                      });
                    }
                    if (need_x) grads[0] = std::move(dx);
                    if (need_scale) {
                      Tensor t(Shape{L.c}, g.dtype());
                      for (std::int64_t c = 0; c < L.c; ++c)
                        t.data<T>()[c] = static_cast<T>(dgamma[static_cast<std::size_t>(c)]);
                      grads[1] = std::move(t);
                    }
                    if (need_shift) {
                      Tensor t(Shape{L.c}, g.dtype());
                      for (std::int64_t c = 0; c < L.c; ++c)
                        t.data<T>()[c] = static_cast<T>(dbeta[static_cast<std::size_t>(c)]);
                      grads[2] = std::move(t);
                    }
                  });
                });
}

}  // namespace

NormParams NormParams::make(int channels, DType dtype) {
  if (channels <= 0) throw ConfigError("norm channels must be positive");
  NormParams p;
  p.scale = Tensor::ones(Shape{channels}, dtype);
  p.shift = Tensor::zeros(Shape{channels}, dtype);
  p.running_mean = Tensor::zeros(Shape{channels}, dtype);
  p.running_var = Tensor::ones(Shape{channels}, dtype);
  p.batches_tracked = Tensor::zeros(Shape{1}, dtype);
  return p;
}

bool NormParams::has_running_stats() const {
  return batches_tracked.defined() && batches_tracked.item() > 0.0;
}

Tensor batch_norm(const Tensor& x, NormParams& p, NormMode mode) {
  check_params(x, p, "batch_norm");
  const Layout L{x.dim(0), x.dim(1), x.dim(2) * x.dim(3), false};
  std::vector<double> mean, var;
  if (mode == NormMode::eval) {
    if (!p.has_running_stats())
      throw ConfigError("batch_norm: eval mode requested before any running statistics exist");
    mean = p.running_mean.values();
    var = p.running_var.values();
    return normalize(x, p, L, mean, var, false, "batch_norm");
  }
  dispatch(x.dtype(), [&](auto tag) { compute_stats(x.data<decltype(tag)>(), L, mean, var); });
  if (p.running_mean.defined() && p.running_var.defined()) {
    const double M = static_cast<double>(L.group_size());
    const double unbias = M > 1 ? M / (M - 1) : 1.0;
    for (std::int64_t c = 0; c < L.c; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      p.running_mean.set(c, (1 - p.momentum) * p.running_mean.at(c) + p.momentum * mean[uc]);
      p.running_var.set(c, (1 - p.momentum) * p.running_var.at(c) + p.momentum * var[uc] * unbias);
    }
    if (p.batches_tracked.defined()) p.batches_tracked.set(0, p.batches_tracked.at(0) + 1);
  }
  return normalize(x, p, L, mean, var, true, "batch_norm");
}

Tensor instance_norm(const Tensor& x, const NormParams& p) {
  check_params(x, p, "instance_norm");
  const Layout L{x.dim(0), x.dim(1), x.dim(2) * x.dim(3), true};
  std::vector<double> mean, var;
  dispatch(x.dtype(), [&](auto tag) { compute_stats(x.data<decltype(tag)>(), L, mean, var); });
  return normalize(x, p, L, mean, var, true, "instance_norm");
}

}  // namespace durn

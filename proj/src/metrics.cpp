#include "durn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "durn/autograd.hpp"
#include "durn/error.hpp"
#include "durn/ops.hpp"

namespace durn {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

Tensor as_nchw(const Tensor& x) {
  switch (x.rank()) {
    case 2: return reshape(x, {1, 1, x.dim(0), x.dim(1)});
    case 3: return reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
    case 4: return x;
    default: throw DimensionError("expected an image of rank 2, 3 or 4, got " + to_string(x.shape()));
  }
}

// out[i] = sum_k w[k] in[i + k] along one axis of a (planes, rows, cols) block.
template <typename T>
void correlate_rows(const T* in, T* out, std::int64_t planes, std::int64_t h, std::int64_t w,
                    const std::vector<double>& taps) {
  const auto k = static_cast<std::int64_t>(taps.size());
  const std::int64_t ow = w - k + 1;
  for (std::int64_t p = 0; p < planes * h; ++p) {
    const T* src = in + p * w;
    T* dst = out + p * ow;
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < k; ++t) acc += taps[static_cast<std::size_t>(t)] * src[x + t];
      dst[x] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void correlate_cols(const T* in, T* out, std::int64_t planes, std::int64_t h, std::int64_t w,
                    const std::vector<double>& taps) {
  const auto k = static_cast<std::int64_t>(taps.size());
  const std::int64_t oh = h - k + 1;
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = in + p * h * w;
    T* dst = out + p * oh * w;
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::int64_t t = 0; t < k; ++t)
          acc += taps[static_cast<std::size_t>(t)] * src[(y + t) * w + x];
        dst[y * w + x] = static_cast<T>(acc);
      }
  }
}

// Adjoint of correlate_rows: scatter each output back over its window.
template <typename T>
void scatter_rows(const T* g, T* out, std::int64_t planes, std::int64_t h, std::int64_t w,
                  const std::vector<double>& taps) {
  const auto k = static_cast<std::int64_t>(taps.size());
  const std::int64_t ow = w - k + 1;
  for (std::int64_t p = 0; p < planes * h; ++p)
    for (std::int64_t x = 0; x < ow; ++x)
      for (std::int64_t t = 0; t < k; ++t)
        out[p * w + x + t] += static_cast<T>(taps[static_cast<std::size_t>(t)] * g[p * ow + x]);
}

template <typename T>
void scatter_cols(const T* g, T* out, std::int64_t planes, std::int64_t h, std::int64_t w,
                  const std::vector<double>& taps) {
  const auto k = static_cast<std::int64_t>(taps.size());
  const std::int64_t oh = h - k + 1;
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t t = 0; t < k; ++t) {
        const double wt = taps[static_cast<std::size_t>(t)];
        for (std::int64_t x = 0; x < w; ++x)
          out[(p * h + y + t) * w + x] += static_cast<T>(wt * g[(p * oh + y) * w + x]);
      }
}

}  // namespace

std::vector<double> SsimConfig::taps() const {
  validate();
  std::vector<double> t(static_cast<std::size_t>(window));
  const double c = (window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - c;
    t[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += t[static_cast<std::size_t>(i)];
  }
  for (auto& v : t) v /= total;
  return t;
}

void SsimConfig::validate() const {
  if (window <= 0 || window % 2 == 0) throw ConfigError("SSIM window must be a positive odd size");
  if (!(sigma > 0.0)) throw ConfigError("SSIM sigma must be positive");
  if (!(dynamic_range > 0.0)) throw ConfigError("SSIM dynamic range must be positive");
}

double psnr(const Tensor& a, const Tensor& b, bool clamp) {
  check_same_shape(a, b, "psnr");
  const std::int64_t n = a.numel();
  if (n == 0) throw DimensionError("psnr of empty tensors");
  std::vector<double> sq(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double x = a.at(i), y = b.at(i);
    if (clamp) {
      x = std::clamp(x, 0.0, 1.0);
      y = std::clamp(y, 0.0, 1.0);
    }
    sq[static_cast<std::size_t>(i)] = (x - y) * (x - y);
  }
  const double mse = pairwise_sum(sq.data(), sq.size()) / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

Tensor gaussian_filter(const Tensor& x, const SsimConfig& cfg) {
  if (x.rank() != 4) throw DimensionError("gaussian_filter expects NCHW, got " + to_string(x.shape()));
  const auto taps = cfg.taps();
  const std::int64_t k = cfg.window;
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < k || w < k)
    throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) +
                      " is smaller than the " + std::to_string(k) + "x" + std::to_string(k) +
                      " SSIM window");
  const std::int64_t oh = h - k + 1, ow = w - k + 1;
  Tensor out({x.dim(0), x.dim(1), oh, ow}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> tmp(static_cast<std::size_t>(planes * h * ow));
    correlate_rows<T>(x.data<T>(), tmp.data(), planes, h, w, taps);
    correlate_cols<T>(tmp.data(), out.data<T>(), planes, h, ow, taps);
  });
  return record(std::move(out), "gaussian_filter", {&x},
                [taps, planes, h, w, ow](const Tensor& g, std::vector<Tensor>& grads) {
                  Tensor gi({g.dim(0), g.dim(1), h, w}, g.dtype());
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    std::vector<T> tmp(static_cast<std::size_t>(planes * h * ow), T(0));
                    scatter_cols<T>(g.data<T>(), tmp.data(), planes, h, ow, taps);
                    scatter_rows<T>(tmp.data(), gi.data<T>(), planes, h, w, taps);
                  });
                  grads[0] = std::move(gi);
                });
}

Tensor ssim(const Tensor& a_in, const Tensor& b_in, const SsimConfig& cfg) {
  check_same_shape(a_in, b_in, "ssim");
  const Tensor a = as_nchw(a_in), b = as_nchw(b_in);
  const Tensor mu_a = gaussian_filter(a, cfg);
  const Tensor mu_b = gaussian_filter(b, cfg);
  const Tensor mu_aa = mul(mu_a, mu_a);
  const Tensor mu_bb = mul(mu_b, mu_b);
  const Tensor mu_ab = mul(mu_a, mu_b);
  const Tensor var_a = sub(gaussian_filter(mul(a, a), cfg), mu_aa);
  const Tensor var_b = sub(gaussian_filter(mul(b, b), cfg), mu_bb);
  const Tensor cov = sub(gaussian_filter(mul(a, b), cfg), mu_ab);

  const Tensor num = mul(affine(mu_ab, 2.0, cfg.c1()), affine(cov, 2.0, cfg.c2()));
  const Tensor den = mul(affine(add(mu_aa, mu_bb), 1.0, cfg.c1()), affine(add(var_a, var_b), 1.0, cfg.c2()));
  return mean(div(num, den));
}

double ssim_value(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  NoGradGuard no_grad;
  return ssim(a, b, cfg).item();
}

std::string to_string(LossPhase phase) {
  switch (phase) {
    case LossPhase::main: return "main";
    case LossPhase::l1_only: return "l1";
    case LossPhase::l2_only: return "l2";
  }
  return "?";
}

LossPhase parse_loss_phase(const std::string& s) {
  if (s == "main") return LossPhase::main;
  if (s == "l1" || s == "l1_only") return LossPhase::l1_only;
  if (s == "l2" || s == "l2_only") return LossPhase::l2_only;
  throw ConfigError("unknown loss '" + s + "' (expected main, l1 or l2)");
}

Tensor restoration_loss(const Tensor& out, const Tensor& gt, LossPhase phase, const SsimConfig& cfg) {
  check_same_shape(out, gt, "restoration_loss");
  const Tensor diff = sub(out, gt);
  switch (phase) {
    case LossPhase::l1_only: return mean(abs(diff));
    case LossPhase::l2_only: return mean(square(diff));
    case LossPhase::main: {
      const Tensor ssim_term = affine(ssim(out, gt, cfg), -1.1, 1.1);
      return add(ssim_term, affine(mean(abs(diff)), 0.75, 0.0));
    }
  }
  throw ContractError("unhandled loss phase");
}

}  // namespace durn

#pragma once

#include <string>
#include <vector>

#include "durn/tensor.hpp"

namespace durn {

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  /// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
  std::vector<double> taps() const;
  void validate() const;
};

/// 10 log10(1 / MSE) in dB. Inputs are clamped to [0, 1] first unless
/// `clamp` is false. Identical inputs give +infinity.
double psnr(const Tensor& a, const Tensor& b, bool clamp = true);

/// Valid (unpadded) separable Gaussian filter over the last two axes of an
/// NCHW tensor. Differentiable.
Tensor gaussian_filter(const Tensor& x, const SsimConfig& cfg = {});

/// Mean SSIM over all valid windows and channels, as a differentiable scalar.
/// Accepts (H, W), (C, H, W) or (N, C, H, W). Throws ConfigError when the
/// image is smaller than the window.
Tensor ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});
double ssim_value(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

enum class LossPhase { main, l1_only, l2_only };
std::string to_string(LossPhase phase);
LossPhase parse_loss_phase(const std::string& s);

/// main: 1.1 (1 - SSIM) + 0.75 L1; l1_only: mean |out - gt|; l2_only: mean (out - gt)^2.
Tensor restoration_loss(const Tensor& out, const Tensor& gt, LossPhase phase,
                        const SsimConfig& cfg = {});

}  // namespace durn

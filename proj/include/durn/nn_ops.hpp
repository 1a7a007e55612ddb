#pragma once

#include "durn/tensor.hpp"

namespace durn {

/// Square-kernel 2-D convolution settings. Padding is always "same" for
/// stride 1: dilation * (kernel - 1) / 2 zeros on each side.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int dilation = 1;
  int stride = 1;
  bool bias = true;

  int padding() const { return dilation * (kernel - 1) / 2; }
  int receptive_field() const;
  /// Throws ConfigError for non-positive values or even kernels.
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// dilation * (kernel - 1) + 1
int receptive_field(int kernel, int dilation);

/// x: (N, in, H, W), weight: (out, in, k, k), bias: (out) or undefined.
/// Output spatial size is ceil(H / stride).
Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias);

/// (N, C*r*r, H, W) -> (N, C, r*H, r*W)
Tensor pixel_shuffle(const Tensor& x, int r);
/// Exact inverse of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x, int r);
/// Nearest-neighbour replication by r along both spatial axes.
Tensor upsample_nearest(const Tensor& x, int r);

/// (N, C, H, W) -> (N, C, 1, 1)
Tensor global_avg_pool(const Tensor& x);

/// x: (N, F), weight: (F, G), bias: (G) or undefined.
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Per-channel affine parameters plus batch-norm running statistics. All
/// members are tensor handles, so a NormParams bound to a parameter store
/// updates the store in place.
struct NormParams {
  Tensor scale;
  Tensor shift;
  Tensor running_mean;
  Tensor running_var;
  /// Number of training batches folded into the running statistics.
  Tensor batches_tracked;
  double eps = 1e-5;
  double momentum = 0.1;

  static NormParams make(int channels, DType dtype = DType::f32);
  int channels() const { return static_cast<int>(scale.numel()); }
  bool has_running_stats() const;
};

enum class NormMode { train, eval };

/// Train mode normalizes with batch statistics over (N, H, W) and updates the
/// running statistics (unbiased variance) with `momentum`. Eval mode uses the
/// running statistics and throws ConfigError if none exist yet.
Tensor batch_norm(const Tensor& x, NormParams& params, NormMode mode);

/// Normalizes every (n, c) plane by its own mean and variance.
Tensor instance_norm(const Tensor& x, const NormParams& params);

}  // namespace durn

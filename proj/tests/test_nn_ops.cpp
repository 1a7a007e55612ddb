#include <cmath>

#include "doctest.h"
#include "durn/autograd.hpp"
#include "durn/error.hpp"
#include "durn/nn_ops.hpp"
#include "durn/ops.hpp"
#include "test_util.hpp"

using namespace durn;
using testutil::random_tensor;

namespace {

// Direct loop convolution with zero padding.
Tensor conv_oracle(const Tensor& x, const ConvSpec& s, const Tensor& w, const Tensor& b) {
  const auto n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t oh = (h + s.stride - 1) / s.stride, ow = (wd + s.stride - 1) / s.stride;
  const int pad = s.padding();
  Tensor y({n, s.out_channels, oh, ow}, DType::f64);
  for (std::int64_t in = 0; in < n; ++in)
    for (int co = 0; co < s.out_channels; ++co)
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          double acc = b.defined() ? b.at(co) : 0.0;
          for (std::int64_t c = 0; c < ci; ++c)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const std::int64_t iy = oy * s.stride + ky * s.dilation - pad;
                const std::int64_t ix = ox * s.stride + kx * s.dilation - pad;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                acc += x.at(((in * ci + c) * h + iy) * wd + ix) *
                       w.at(((co * ci + c) * s.kernel + ky) * s.kernel + kx);
              }
          y.set(((in * s.out_channels + co) * oh + oy) * ow + ox, acc);
        }
  return y;
}

}  // namespace

TEST_CASE("identity and all-ones kernels") {
  const Tensor x = random_tensor({1, 1, 5, 5}, 1);
  const Tensor w1 = Tensor::ones({1, 1, 1, 1}, DType::f64);
  CHECK(testutil::max_abs_diff(conv2d(x, ConvSpec{1, 1, 1, 1, 1, true}, w1,
                                      Tensor::zeros({1}, DType::f64)),
                               x) == 0.0);

  const Tensor c = Tensor::full({1, 1, 6, 6}, 0.7, DType::f64);
  const Tensor y = conv2d(c, ConvSpec{1, 1, 3, 1, 1, false}, Tensor::ones({1, 1, 3, 3}, DType::f64),
                          Tensor());
  for (int i = 1; i < 5; ++i)
    for (int j = 1; j < 5; ++j) CHECK(y.at(i * 6 + j) == doctest::Approx(6.3));
  CHECK(y.at(0) == doctest::Approx(0.7 * 4));
}

TEST_CASE("conv2d matches a direct loop oracle") {
  for (const ConvSpec s : {ConvSpec{2, 3, 3, 1, 1, true}, ConvSpec{2, 3, 5, 2, 1, true},
                           ConvSpec{3, 2, 3, 1, 2, true}, ConvSpec{2, 2, 3, 3, 2, false},
                           ConvSpec{2, 4, 1, 1, 1, false}}) {
    const Tensor x = random_tensor({2, s.in_channels, 7, 9}, 2);
    const Tensor w = random_tensor({s.out_channels, s.in_channels, s.kernel, s.kernel}, 3);
    const Tensor b = s.bias ? random_tensor({s.out_channels}, 4) : Tensor();
    const Tensor y = conv2d(x, s, w, b);
    const Tensor ref = conv_oracle(x, s, w, b);
    REQUIRE(y.shape() == ref.shape());
    CHECK(testutil::max_abs_diff(y, ref) < 1e-12);
  }
}

TEST_CASE("conv2d errors and shapes") {
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), ConvSpec{3, 1, 3, 1, 1, false}, Tensor({1, 3, 3, 3}),
                         Tensor()),
                  DimensionError);
  CHECK_THROWS_AS(conv2d(Tensor({1, 1, 4, 4}), ConvSpec{1, 1, 2, 1, 1, false}, Tensor({1, 1, 2, 2}),
                         Tensor()),
                  ConfigError);
  const Tensor y = conv2d(Tensor({1, 1, 7, 5}), ConvSpec{1, 1, 3, 1, 2, false},
                          Tensor({1, 1, 3, 3}), Tensor());
  CHECK(y.shape() == Shape{1, 1, 4, 3});
}

TEST_CASE("receptive field") {
  CHECK(receptive_field(11, 3) == 31);
  CHECK(receptive_field(7, 2) == 13);
  for (int d = 1; d < 20; ++d) CHECK(receptive_field(1, d) == 1);
  CHECK(receptive_field(3, 12) == 25);
}

TEST_CASE("pixel shuffle") {
  CHECK(pixel_shuffle(Tensor({1, 4, 2, 2}), 2).shape() == Shape{1, 1, 4, 4});
  CHECK_THROWS_AS(pixel_shuffle(Tensor({1, 3, 2, 2}), 2), DimensionError);

  Tensor x({1, 4, 2, 2}, DType::f64);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 4; ++i) x.set(c * 4 + i, 10.0 * c);
  const Tensor y = pixel_shuffle(x, 2);
  for (int ty = 0; ty < 2; ++ty)
    for (int tx = 0; tx < 2; ++tx) {
      CHECK(y.at((2 * ty) * 4 + 2 * tx) == 0.0);
      CHECK(y.at((2 * ty) * 4 + 2 * tx + 1) == 10.0);
      CHECK(y.at((2 * ty + 1) * 4 + 2 * tx) == 20.0);
      CHECK(y.at((2 * ty + 1) * 4 + 2 * tx + 1) == 30.0);
    }

  // Index enumeration: out[c, h*r+i, w*r+j] = in[c*r*r + i*r + j, h, w].
  const int r = 3, C = 2, H = 2, W = 3;
  const Tensor z = random_tensor({2, C * r * r, H, W}, 5);
  const Tensor s = pixel_shuffle(z, r);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
              const double in = z.at(((n * C * r * r + c * r * r + i * r + j) * H + h) * W + w);
              const double out = s.at(((n * C + c) * H * r + h * r + i) * W * r + w * r + j);
              CHECK(in == out);
            }
  CHECK(testutil::max_abs_diff(pixel_unshuffle(s, r), z) == 0.0);
}

TEST_CASE("upsample, pooling, dense") {
  const Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4}, DType::f64);
  CHECK(global_avg_pool(x).item() == 2.5);
  CHECK(global_avg_pool(Tensor::full({2, 3, 4, 4}, 0.25, DType::f64)).values() ==
        std::vector<double>(6, 0.25));
  const Tensor u = upsample_nearest(x, 2);
  CHECK(u.shape() == Shape{1, 1, 4, 4});
  CHECK(u.values() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});

  const Tensor v = random_tensor({3, 4}, 6);
  Tensor eye = Tensor::zeros({4, 4}, DType::f64);
  for (int i = 0; i < 4; ++i) eye.set(i * 5, 1.0);
  CHECK(testutil::max_abs_diff(dense(v, eye, Tensor::zeros({4}, DType::f64)), v) == 0.0);
  const Tensor b = Tensor::from_values({2}, {0.5, -1.5}, DType::f64);
  const Tensor rows = dense(v, Tensor::zeros({4, 2}, DType::f64), b);
  for (int n = 0; n < 3; ++n) {
    CHECK(rows.at(n * 2) == 0.5);
    CHECK(rows.at(n * 2 + 1) == -1.5);
  }
}

TEST_CASE("batch norm") {
  NormParams p = NormParams::make(3, DType::f64);
  CHECK_FALSE(p.has_running_stats());
  const Tensor x = random_tensor({4, 3, 5, 5}, 7, -2, 5);
  CHECK_THROWS_AS(batch_norm(x, p, NormMode::eval), ConfigError);

  const Tensor y = batch_norm(x, p, NormMode::train);
  CHECK(p.has_running_stats());
  for (int c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    int count = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        const double v = y.at((n * 3 + c) * 25 + i);
        s += v;
        s2 += v * v;
        ++count;
      }
    CHECK(std::abs(s / count) < 1e-9);
    CHECK(s2 / count == doctest::Approx(1.0).epsilon(1e-3));
  }

  NormParams q = NormParams::make(3, DType::f64);
  q.running_mean.fill(0.0);
  q.running_var.fill(1.0);
  q.batches_tracked.fill(1.0);
  q.scale.copy_from(Tensor::from_values({3}, {2, 3, 4}, DType::f64));
  q.shift.copy_from(Tensor::from_values({3}, {-1, 0, 1}, DType::f64));
  const Tensor e = batch_norm(x, q, NormMode::eval);
  const double k = 1.0 / std::sqrt(1.0 + q.eps);
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 25; ++i) {
        const std::int64_t idx = (n * 3 + c) * 25 + i;
        CHECK(e.at(idx) == doctest::Approx(q.scale.at(c) * x.at(idx) * k + q.shift.at(c)));
      }
}

TEST_CASE("instance norm") {
  const NormParams p = NormParams::make(2, DType::f64);
  const Tensor x = random_tensor({3, 2, 6, 6}, 8, -1, 4);
  const Tensor y = instance_norm(x, p);
  for (int plane = 0; plane < 6; ++plane) {
    double s = 0, s2 = 0;
    for (int i = 0; i < 36; ++i) {
      const double v = y.at(plane * 36 + i);
      s += v;
      s2 += v * v;
    }
    CHECK(std::abs(s / 36) < 1e-9);
    CHECK(s2 / 36 == doctest::Approx(1.0).epsilon(1e-3));
  }
  const Tensor flat = instance_norm(Tensor::full({1, 2, 4, 4}, 3.0, DType::f64), p);
  CHECK(testutil::max_abs_diff(flat, Tensor::zeros({1, 2, 4, 4}, DType::f64)) == 0.0);
}

TEST_CASE("layer gradients") {
  const Tensor x = random_tensor({2, 2, 5, 5}, 9);
  const Tensor wts = random_tensor({2, 2, 10, 10}, 10);
  CHECK(grad_check([&](const Tensor& v) { return sum(mul(upsample_nearest(v, 2), wts)); }, x) < 1e-6);
  const Tensor wp = random_tensor({2, 2, 1, 1}, 11);
  CHECK(grad_check([&](const Tensor& v) { return sum(mul(global_avg_pool(v), wp)); }, x) < 1e-6);
  NormParams p = NormParams::make(2, DType::f64);
  const Tensor wb = random_tensor({2, 2, 5, 5}, 12);
  const auto bn = grad_check_report(
      [&](const Tensor& v) { return sum(mul(batch_norm(v, p, NormMode::train), wb)); }, x);
  CHECK(bn.relative < 1e-5);
}

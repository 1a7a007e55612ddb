#include <cmath>
#include <limits>

#include "doctest.h"
#include "durn/autograd.hpp"
#include "durn/error.hpp"
#include "durn/metrics.hpp"
#include "durn/ops.hpp"
#include "test_util.hpp"

using namespace durn;
using testutil::random_tensor;

namespace {

// Direct 2-D windowed SSIM on one (H, W) plane.
double ssim_oracle(const Tensor& a, const Tensor& b, int h, int w) {
  const SsimConfig cfg;
  const int k = cfg.window;
  std::vector<double> g(k);
  double gs = 0;
  for (int i = 0; i < k; ++i) {
    const double d = i - (k - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * cfg.sigma * cfg.sigma));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;
  double total = 0;
  int count = 0;
  for (int y = 0; y + k <= h; ++y)
    for (int x = 0; x + k <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double wt = g[i] * g[j];
          const double va = a.at((y + i) * w + x + j), vb = b.at((y + i) * w + x + j);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + cfg.c1()) * (2 * cov + cfg.c2())) /
               ((ma * ma + mb * mb + cfg.c1()) * (va + vb + cfg.c2()));
      ++count;
    }
  return total / count;
}

}  // namespace

TEST_CASE("psnr") {
  const Tensor x = random_tensor({1, 3, 8, 8}, 1, 0.2, 0.8);
  CHECK(psnr(x, x) == std::numeric_limits<double>::infinity());
  CHECK(psnr(x, affine(x, 1.0, 0.1)) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK_THROWS_AS(psnr(x, Tensor({1, 3, 8, 7}, DType::f64)), DimensionError);

  const Tensor a = random_tensor({2, 3, 9, 11}, 2, 0, 1);
  const Tensor b = random_tensor({2, 3, 9, 11}, 3, 0, 1);
  double mse = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) mse += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
  mse /= static_cast<double>(a.numel());
  CHECK(std::abs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)) < 1e-6);

  const Tensor base = Tensor::full({1, 1, 16, 16}, 0.5, DType::f64);
  double prev = std::numeric_limits<double>::infinity();
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const Tensor noisy = add(base, random_tensor({1, 1, 16, 16}, 4, -amp, amp));
    const double p = psnr(base, noisy);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim") {
  const SsimConfig cfg;
  double s = 0;
  for (double t : cfg.taps()) {
    CHECK(t > 0.0);
    s += t;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  const Tensor x = random_tensor({1, 3, 24, 24}, 5, 0, 1);
  CHECK(std::abs(ssim_value(x, x) - 1.0) < 1e-6);

  const double p = 0.3, q = 0.7;
  const double closed = (2 * p * q + cfg.c1()) / (p * p + q * q + cfg.c1());
  CHECK(ssim_value(Tensor::full({16, 16}, p, DType::f64), Tensor::full({16, 16}, q, DType::f64)) ==
        doctest::Approx(closed).epsilon(1e-9));

  const Tensor a = random_tensor({20, 23}, 6, 0, 1);
  const Tensor b = random_tensor({20, 23}, 7, 0, 1);
  CHECK(std::abs(ssim_value(a, b) - ssim_value(b, a)) < 1e-9);
  CHECK(ssim_value(a, b) == doctest::Approx(ssim_oracle(a, b, 20, 23)).epsilon(1e-10));

  CHECK_THROWS_AS(ssim(Tensor({10, 10}, DType::f64), Tensor({10, 10}, DType::f64)), ConfigError);
  CHECK_THROWS_AS(ssim(Tensor({12, 12}, DType::f64), Tensor({12, 13}, DType::f64)), DimensionError);
}

TEST_CASE("ssim gradient") {
  const Tensor a = random_tensor({1, 1, 16, 16}, 8, 0, 1);
  const Tensor b = random_tensor({1, 1, 16, 16}, 9, 0, 1);
  const auto rep = grad_check_report([&](const Tensor& v) { return ssim(v, b); }, a);
  CHECK(rep.relative < 1e-4);
}

TEST_CASE("restoration losses") {
  const Tensor out = random_tensor({1, 3, 16, 16}, 10, 0, 1);
  CHECK(std::abs(restoration_loss(out, out, LossPhase::main).item()) < 1e-6);
  const Tensor shifted = affine(out, 1.0, 0.1);
  CHECK(restoration_loss(shifted, out, LossPhase::l2_only).item() == doctest::Approx(0.01));
  CHECK(restoration_loss(shifted, out, LossPhase::l1_only).item() == doctest::Approx(0.1));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor a = random_tensor({1, 1, 12, 12}, 100 + seed, -1, 2);
    const Tensor b = random_tensor({1, 1, 12, 12}, 200 + seed, -1, 2);
    CHECK(restoration_loss(a, b, LossPhase::main).item() >= 0.0);
  }
  const Tensor gt = random_tensor({1, 1, 16, 16}, 11, 0, 1);
  const auto rep = grad_check_report(
      [&](const Tensor& v) { return restoration_loss(v, gt, LossPhase::main); },
      random_tensor({1, 1, 16, 16}, 12, 0, 1));
  CHECK(rep.relative < 1e-4);
  CHECK(parse_loss_phase(to_string(LossPhase::l1_only)) == LossPhase::l1_only);
  CHECK_THROWS_AS(parse_loss_phase("l3"), ConfigError);
}

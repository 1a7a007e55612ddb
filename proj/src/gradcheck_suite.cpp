#include "durn/gradcheck_suite.hpp"

#include <chrono>
#include <random>

#include "durn/autograd.hpp"
#include "durn/durb.hpp"
#include "durn/metrics.hpp"
#include "durn/ops.hpp"

namespace durn {

namespace {

constexpr double kLayerTol = 1e-5;
constexpr double kLossTol = 1e-4;

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape), DType::f64);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, u(rng));
  return t;
}

// Values bounded away from zero so |x| and ReLU kinks stay out of reach of
// the finite-difference step.
Tensor away_from_zero(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed, 0.1, 1.0);
  std::mt19937_64 rng(seed ^ 0x5bd1e995);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    if (rng() & 1) t.set(i, -t.at(i));
  return t;
}

// sum(w * f(x)) for a fixed random w shaped like f(x).
std::function<Tensor(const Tensor&)> weighted(std::function<Tensor(const Tensor&)> f,
                                              std::uint64_t seed) {
  auto w = std::make_shared<Tensor>();
  return [f = std::move(f), w, seed](const Tensor& x) {
    Tensor y = f(x);
    if (!w->defined() || w->shape() != y.shape()) *w = random_tensor(y.shape(), seed);
    return sum(mul(y, *w));
  };
}

GradCheckCase wrt(std::string name, Tensor x, std::function<Tensor(const Tensor&)> f,
                  double tol = kLayerTol) {
  auto fn = weighted(std::move(f), std::hash<std::string>{}(name));
  return {std::move(name), tol, [x, fn](double eps) { return grad_check_report(fn, x, eps); }};
}

ConvSpec conv(int in, int out, int k, int d, int s, bool bias = true) {
  return ConvSpec{in, out, k, d, s, bias};
}

void add_conv_cases(std::vector<GradCheckCase>& cases, const std::string& label, const ConvSpec& spec,
                    std::int64_t hw) {
  const Tensor x = random_tensor({2, spec.in_channels, hw, hw}, 11);
  const Tensor w = random_tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, 12, -0.3, 0.3);
  const Tensor b = spec.bias ? random_tensor({spec.out_channels}, 13) : Tensor();
  cases.push_back(wrt("conv2d." + label + ".input", x, [=](const Tensor& v) { return conv2d(v, spec, w, b); }));
  cases.push_back(wrt("conv2d." + label + ".weight", w, [=](const Tensor& v) { return conv2d(x, spec, v, b); }));
  if (spec.bias)
    cases.push_back(wrt("conv2d." + label + ".bias", b, [=](const Tensor& v) { return conv2d(x, spec, w, v); }));
}

struct BlockFixture {
  DuRBConfig cfg;
  DuRBParams params;
  Tensor x, r;
};

BlockFixture block_fixture(BlockVariant variant) {
  const int c = 8;
  const SpecTable table = variant == BlockVariant::U    ? SpecTable::blur
                          : variant == BlockVariant::US ? SpecTable::haze
                                                        : SpecTable::noise;
  BlockFixture f;
  f.cfg = make_durb(variant, 2, table, c, default_norm(variant), 4);
  ParamStore store;
  f.params = register_durb(store, "block", f.cfg, 7, DType::f64);
  f.x = random_tensor({2, c, 8, 8}, 21);
  const std::int64_t up = has_upsampling(variant) ? 2 : 1;
  f.r = random_tensor({2, c, 8 * up, 8 * up}, 22, 0.0, 0.5);
  return f;
}

void add_block_cases(std::vector<GradCheckCase>& cases, BlockVariant variant) {
  const BlockFixture f = block_fixture(variant);
  const std::string base = "durb." + to_string(variant);
  auto both = [](const BlockState& s) {
    return add(sum(s.x), sum(mul(s.r, s.r)));
  };
  cases.push_back({base + ".input", kLayerTol, [f, both](double eps) {
                     return grad_check_report([&](const Tensor& v) {
                       return both(durb_forward({v, f.r}, f.cfg, f.params, NormMode::train));
                     }, f.x, eps);
                   }});
  cases.push_back({base + ".carrier", kLayerTol, [f, both](double eps) {
                     return grad_check_report([&](const Tensor& v) {
                       return both(durb_forward({f.x, v}, f.cfg, f.params, NormMode::train));
                     }, f.r, eps);
                   }});
  cases.push_back({base + ".t1_weight", kLayerTol, [f, both](double eps) {
                     return grad_check_report([&](const Tensor& v) {
                       DuRBParams p = f.params;
                       p.t1.weight = v;
                       return both(durb_forward({f.x, f.r}, f.cfg, p, NormMode::train));
                     }, f.params.t1.weight.detach(), eps);
                   }});
}

}  // namespace

std::vector<GradCheckCase> gradient_suite() {
  std::vector<GradCheckCase> cases;
  const Shape s = {2, 3, 4, 5};
  const Tensor a = away_from_zero(s, 1), b = away_from_zero(s, 2);
  const Tensor bc = away_from_zero({1, 3, 1, 1}, 3);

  cases.push_back(wrt("add", a, [=](const Tensor& v) { return add(v, b); }));
  cases.push_back(wrt("sub.broadcast_rhs", bc, [=](const Tensor& v) { return sub(a, v); }));
  cases.push_back(wrt("mul", a, [=](const Tensor& v) { return mul(v, b); }));
  cases.push_back(wrt("mul.broadcast_rhs", bc, [=](const Tensor& v) { return mul(a, v); }));
  cases.push_back(wrt("div.numerator", a, [=](const Tensor& v) { return div(v, b); }));
  cases.push_back(wrt("div.denominator", b, [=](const Tensor& v) { return div(a, v); }));
  cases.push_back(wrt("relu", a, [](const Tensor& v) { return relu(v); }));
  cases.push_back(wrt("tanh", a, [](const Tensor& v) { return durn::tanh(v); }));
  cases.push_back(wrt("sigmoid", a, [](const Tensor& v) { return sigmoid(v); }));
  cases.push_back(wrt("square", a, [](const Tensor& v) { return square(v); }));
  cases.push_back(wrt("abs", a, [](const Tensor& v) { return durn::abs(v); }));
  cases.push_back(wrt("affine", a, [](const Tensor& v) { return affine(v, -1.7, 0.3); }));
  cases.push_back(wrt("sum.axes", a, [](const Tensor& v) { return sum(v, {1, 3}); }));
  cases.push_back(wrt("mean.axes", a, [](const Tensor& v) { return mean(v, {0, 2}); }));
  cases.push_back(wrt("reshape", a, [](const Tensor& v) { return reshape(v, {6, 20}); }));

  add_conv_cases(cases, "k3", conv(3, 4, 3, 1, 1), 9);
  add_conv_cases(cases, "k5_d2", conv(2, 3, 5, 2, 1), 10);
  add_conv_cases(cases, "k3_s2", conv(3, 2, 3, 1, 2), 9);
  add_conv_cases(cases, "k1_nobias", conv(4, 3, 1, 1, 1, false), 6);

  const Tensor img = random_tensor({2, 8, 6, 6}, 31);
  cases.push_back(wrt("pixel_shuffle", img, [](const Tensor& v) { return pixel_shuffle(v, 2); }));
  cases.push_back(wrt("pixel_unshuffle", img, [](const Tensor& v) { return pixel_unshuffle(v, 2); }));
  cases.push_back(wrt("upsample_nearest", img, [](const Tensor& v) { return upsample_nearest(v, 2); }));
  cases.push_back(wrt("global_avg_pool", img, [](const Tensor& v) { return global_avg_pool(v); }));

  const Tensor feats = random_tensor({2, 8}, 41), dw = random_tensor({8, 4}, 42), db = random_tensor({4}, 43);
  cases.push_back(wrt("dense.input", feats, [=](const Tensor& v) { return dense(v, dw, db); }));
  cases.push_back(wrt("dense.weight", dw, [=](const Tensor& v) { return dense(feats, v, db); }));
  cases.push_back(wrt("dense.bias", db, [=](const Tensor& v) { return dense(feats, dw, v); }));

  {
    NormParams np = NormParams::make(8, DType::f64);
    np.scale = random_tensor({8}, 51, 0.5, 1.5);
    np.shift = random_tensor({8}, 52);
    cases.push_back(wrt("batch_norm.train", img, [np](const Tensor& v) mutable {
      return batch_norm(v, np, NormMode::train);
    }));
    cases.push_back(wrt("batch_norm.scale", np.scale, [np, img](const Tensor& v) mutable {
      NormParams p = np;
      p.scale = v;
      return batch_norm(img, p, NormMode::train);
    }));
    cases.push_back(wrt("instance_norm", img, [np](const Tensor& v) { return instance_norm(v, np); }));
    cases.push_back(wrt("instance_norm.shift", np.shift, [np, img](const Tensor& v) {
      NormParams p = np;
      p.shift = v;
      return instance_norm(img, p);
    }));
  }

  {
    ParamStore store;
    const SeParams se = register_se(store, "se", 8, 4, 5, DType::f64);
    cases.push_back(wrt("se_gate.input", img, [se](const Tensor& v) { return se_gate(v, 4, se); }));
    cases.push_back(wrt("se_gate.fc1", se.fc1_weight.detach(), [se, img](const Tensor& v) {
      SeParams p = se;
      p.fc1_weight = v;
      return se_gate(img, 4, p);
    }));
  }

  for (BlockVariant v : {BlockVariant::P, BlockVariant::U, BlockVariant::S, BlockVariant::US})
    add_block_cases(cases, v);

  {
    const BlockFixture f = block_fixture(BlockVariant::P);
    cases.push_back(wrt("durb.P.paired", f.x, [f](const Tensor& v) {
      return durb_forward_paired(v, f.cfg, f.params, NormMode::train);
    }));
    cases.push_back(wrt("durb.P.split", f.x, [f](const Tensor& v) {
      return durb_forward_split(v, f.cfg, f.params, NormMode::train);
    }));
  }

  const Tensor ia = random_tensor({2, 2, 16, 16}, 61, 0.0, 1.0);
  const Tensor ib = random_tensor({2, 2, 16, 16}, 62, 0.0, 1.0);
  cases.push_back(wrt("gaussian_filter", ia, [](const Tensor& v) { return gaussian_filter(v); }));
  cases.push_back({"loss.ssim", kLossTol, [ia, ib](double eps) {
                     return grad_check_report([&](const Tensor& v) { return ssim(v, ib); }, ia, eps);
                   }});
  for (LossPhase phase : {LossPhase::main, LossPhase::l1_only, LossPhase::l2_only})
    cases.push_back({"loss." + to_string(phase), kLossTol, [ia, ib, phase](double eps) {
                       return grad_check_report([&](const Tensor& v) { return restoration_loss(v, ib, phase); }, ia, eps);
                     }});
  return cases;
}

std::vector<GradCheckResult> run_gradient_suite(const std::string& filter, double eps) {
  std::vector<GradCheckResult> results;
  for (const auto& c : gradient_suite()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckResult r;
    r.name = c.name;
    r.threshold = c.threshold;
    const GradCheckReport rep = c.run(eps);
    r.error = rep.relative;
    r.worst_elementwise = rep.worst_elementwise;
    r.passed = r.error < c.threshold;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(r);
  }
  return results;
}

}  // namespace durn

#include <cmath>

#include "doctest.h"
#include "durn/autograd.hpp"
#include "durn/durb.hpp"
#include "durn/error.hpp"
#include "durn/ops.hpp"
#include "test_util.hpp"

using namespace durn;
using testutil::random_tensor;

namespace {

void zero_all(ParamStore& store) {
  for (auto& e : store.entries())
    if (e.trainable) e.tensor.fill(0.0);
}

}  // namespace

TEST_CASE("make_durb table lookups") {
  const DuRBConfig p6 = make_durb(BlockVariant::P, 6, SpecTable::noise, 32, NormKind::batch);
  CHECK(p6.t1_conv.kernel == 11);
  CHECK(p6.t1_conv.dilation == 3);
  CHECK(p6.t2_conv.kernel == 7);
  CHECK(p6.t2_conv.dilation == 1);

  const DuRBConfig u1 = make_durb(BlockVariant::U, 1, SpecTable::blur, 32, NormKind::instance);
  CHECK(u1.t1_conv.kernel == 3);
  CHECK(u1.t1_conv.dilation == 3);
  CHECK(u1.t2_conv.stride == 2);
  CHECK(u1.upsample_factor == 2);

  const DuRBConfig s1 = make_durb(BlockVariant::S, 1, SpecTable::raindrop, 32, NormKind::batch);
  CHECK(s1.t1_conv.kernel == 3);
  CHECK(s1.t1_conv.dilation == 12);
  CHECK(s1.t1_conv.receptive_field() == 25);

  CHECK_THROWS_AS(make_durb(BlockVariant::P, 7, SpecTable::noise, 32, NormKind::batch), ConfigError);
  CHECK_THROWS_AS(make_durb(BlockVariant::P, 0, SpecTable::noise, 32, NormKind::batch), ConfigError);
  CHECK_THROWS_AS(parse_variant("Q"), ConfigError);
  CHECK(table_rows(BlockVariant::US, SpecTable::haze) == 12);
}

TEST_CASE("zero weights reduce the block to its skips") {
  for (const BlockVariant v : {BlockVariant::P, BlockVariant::U, BlockVariant::S, BlockVariant::US}) {
    const SpecTable table = v == BlockVariant::P   ? SpecTable::noise
                            : v == BlockVariant::U ? SpecTable::blur
                            : v == BlockVariant::S ? SpecTable::raindrop
                                                   : SpecTable::haze;
    const DuRBConfig cfg = make_durb(v, 1, table, 16, NormKind::none, 4);
    ParamStore store;
    const DuRBParams params = register_durb(store, "b", cfg, 1, DType::f64);
    zero_all(store);
    const Tensor x = random_tensor({2, 16, 8, 8}, 2);
    const Shape rshape = has_upsampling(v) ? Shape{2, 16, 16, 16} : Shape{2, 16, 8, 8};
    const BlockState out = durb_forward({x, Tensor::zeros(rshape, DType::f64)}, cfg, params,
                                        NormMode::train);
    CHECK(testutil::max_abs_diff(out.x, relu(x)) == 0.0);
    CHECK(testutil::max_abs_diff(out.r, Tensor::zeros(rshape, DType::f64)) == 0.0);
  }
}

TEST_CASE("shape preservation and carrier shape") {
  const DuRBConfig cfg = make_durb(BlockVariant::U, 1, SpecTable::blur, 32, NormKind::instance);
  ParamStore store;
  const DuRBParams params = register_durb(store, "u", cfg, 3);
  const Tensor x = random_tensor({2, 32, 48, 48}, 4, -1, 1, DType::f32);
  const BlockState out = durb_forward({x, Tensor::zeros({2, 32, 96, 96})}, cfg, params,
                                      NormMode::train);
  CHECK(out.x.shape() == x.shape());
  CHECK(out.r.shape() == Shape{2, 32, 96, 96});
  CHECK_THROWS_AS(durb_forward({x, Tensor::zeros({2, 32, 48, 48})}, cfg, params, NormMode::train),
                  DimensionError);
}

TEST_CASE("carrier algebra") {
  // r' = ReLU(T1(h)) + r, so shifting r by a constant shifts r' by the same constant.
  const DuRBConfig cfg = make_durb(BlockVariant::P, 2, SpecTable::noise, 8, NormKind::none);
  ParamStore store;
  const DuRBParams params = register_durb(store, "p", cfg, 5, DType::f64);
  const Tensor x = random_tensor({1, 8, 6, 6}, 6);
  const Tensor r = random_tensor({1, 8, 6, 6}, 7);
  const Tensor r0 = Tensor::zeros({1, 8, 6, 6}, DType::f64);
  const BlockState a = durb_forward({x, r}, cfg, params, NormMode::train);
  const BlockState b = durb_forward({x, r0}, cfg, params, NormMode::train);
  CHECK(testutil::max_abs_diff(sub(a.r, b.r), r) < 1e-12);
  CHECK(testutil::max_abs_diff(a.x, b.x) > 1e-3);
}

TEST_CASE("SE gate") {
  const int C = 8;
  ParamStore store;
  const SeParams se = register_se(store, "se", C, 4, 9, DType::f64);
  const Tensor x = random_tensor({2, C, 5, 5}, 10, 0.5, 2.0);
  Tensor gate;
  const Tensor y = se_gate(x, 4, se, &gate);
  CHECK(gate.shape() == Shape{2, C, 1, 1});
  for (std::int64_t i = 0; i < gate.numel(); ++i) {
    CHECK(gate.at(i) > 0.0);
    CHECK(gate.at(i) < 1.0);
  }
  for (int plane = 0; plane < 2 * C; ++plane) {
    const double ratio = y.at(plane * 25) / x.at(plane * 25);
    for (int i = 1; i < 25; ++i)
      CHECK(y.at(plane * 25 + i) / x.at(plane * 25 + i) == doctest::Approx(ratio).epsilon(1e-12));
    CHECK(ratio == doctest::Approx(gate.at(plane)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(se_gate(random_tensor({1, 6, 3, 3}, 11), 4, se), ConfigError);

  const Tensor w = random_tensor({2, C, 5, 5}, 12);
  CHECK(grad_check_report([&](const Tensor& v) { return sum(mul(se_gate(v, 4, se), w)); }, x)
            .relative < 1e-5);
}

TEST_CASE("full DuRB-P and DuRB-S gradients") {
  for (const BlockVariant v : {BlockVariant::P, BlockVariant::S}) {
    const DuRBConfig cfg =
        make_durb(v, 2, v == BlockVariant::P ? SpecTable::noise : SpecTable::raindrop, 8,
                  NormKind::batch, 4);
    ParamStore store;
    const DuRBParams params = register_durb(store, "b", cfg, 13, DType::f64);
    const Tensor x = random_tensor({2, 8, 8, 8}, 14);
    const Tensor r = random_tensor({2, 8, 8, 8}, 15);
    const Tensor w = random_tensor({2, 8, 8, 8}, 16);
    const auto rep = grad_check_report(
        [&](const Tensor& in) {
          const BlockState s = durb_forward({in, r}, cfg, params, NormMode::train);
          return add(sum(mul(s.x, w)), sum(mul(s.r, w)));
        },
        x);
    CHECK(rep.relative < 1e-5);
  }
}

TEST_CASE("paired and split wirings") {
  const DuRBConfig cfg = make_durb(BlockVariant::P, 1, SpecTable::noise, 8, NormKind::none);
  ParamStore store;
  const DuRBParams params = register_durb(store, "p", cfg, 17, DType::f64);
  zero_all(store);
  const Tensor x = random_tensor({1, 8, 6, 6}, 18);
  CHECK(testutil::max_abs_diff(durb_forward_paired(x, cfg, params, NormMode::train), relu(x)) == 0.0);
  CHECK(testutil::max_abs_diff(durb_forward_split(x, cfg, params, NormMode::train), relu(x)) == 0.0);

  const DuRBConfig up = make_durb(BlockVariant::U, 1, SpecTable::blur, 8, NormKind::none);
  ParamStore s2;
  const DuRBParams p2 = register_durb(s2, "u", up, 19, DType::f64);
  CHECK_THROWS_AS(durb_forward_split(x, up, p2, NormMode::train), ConfigError);
}

#include "doctest.h"
#include "durn/error.hpp"
#include "durn/nets.hpp"
#include "durn/ops.hpp"
#include "test_util.hpp"

using namespace durn;
using testutil::random_tensor;

namespace {

std::int64_t conv_count(const ConvSpec& c) {
  return static_cast<std::int64_t>(c.kernel) * c.kernel * c.in_channels * c.out_channels +
         (c.bias ? c.out_channels : 0);
}

// Parameter count recomputed from the layer descriptions alone.
std::int64_t count_oracle(const NetworkSpec& spec) {
  std::int64_t total = 0;
  auto layers = [&](const std::vector<LayerDesc>& ls) {
    int channels = 0;
    for (const auto& l : ls) {
      if (l.kind == LayerDesc::Kind::conv) {
        total += conv_count(l.conv);
        channels = l.conv.out_channels;
      } else if (l.kind == LayerDesc::Kind::pixel_shuffle) {
        channels /= l.factor * l.factor;
      } else if (l.kind == LayerDesc::Kind::norm && l.norm != NormKind::none) {
        total += 2 * channels;
      }
    }
  };
  layers(spec.stem);
  layers(spec.head);
  for (const auto& b : spec.blocks) {
    const std::int64_t c = b.channels;
    total += 2 * (9 * c * c + c);
    if (b.norm != NormKind::none) total += 4 * c;
    total += conv_count(b.t1_conv) + conv_count(b.t2_conv);
    if (has_attention(b.variant)) {
      const std::int64_t h = c / b.se_reduction;
      total += c * h + h + h * c + c;
    }
  }
  return total;
}

void zero_trainable(ParamStore& store) {
  for (auto& e : store.entries())
    if (e.trainable) e.tensor.fill(0.0);
}

}  // namespace

TEST_CASE("architecture tables") {
  const NetworkSpec p = make_spec({.arch = Arch::durn_p});
  CHECK(p.blocks.size() == 6);
  CHECK(p.base_channels == 32);
  const NetworkSpec us = make_spec({.arch = Arch::durn_us});
  CHECK(us.blocks.size() == 12);
  CHECK(us.base_channels == 64);
  const NetworkSpec sp = make_spec({.arch = Arch::durn_s_p});
  REQUIRE(sp.blocks.size() >= 3);
  CHECK(sp.blocks[0].t1_conv.dilation == 12);
  CHECK(sp.blocks[1].t1_conv.dilation == 8);
  CHECK(sp.blocks[2].t1_conv.dilation == 6);
  CHECK(make_spec({.arch = Arch::durn_u}).spatial_divisor() == 4);
  CHECK_THROWS_AS(make_spec({.arch = Arch::durn_p, .num_blocks = 7}), ConfigError);
  CHECK_THROWS_AS(make_spec({.arch = Arch::durn_p, .in_channels = 2}), ConfigError);
  CHECK_THROWS_AS(parse_arch("durn_x"), ConfigError);
}

TEST_CASE("parameter counts") {
  ParamStore one;
  register_conv(one, "c", ConvSpec{32, 32, 3, 1, 1, true}, 0);
  CHECK(one.count_parameters() == 9248);
  ParamStore point;
  register_conv(point, "c", ConvSpec{1, 1, 1, 1, 1, false}, 0);
  CHECK(point.count_parameters() == 1);

  for (const Arch a : {Arch::durn_p, Arch::durn_u, Arch::durn_us, Arch::durn_s, Arch::durn_s_p})
    for (const bool norms : {true, false}) {
      const NetworkSpec spec = make_spec({.arch = a, .norms = norms});
      CHECK(count_parameters(init_params(spec, 1)) == count_oracle(spec));
    }

  const std::int64_t n = count_parameters(
      build_network({.arch = Arch::durn_p, .in_channels = 3, .norms = false}, 0).params);
  CHECK(n >= 779000);
  CHECK(n <= 861000);
}

TEST_CASE("shape contract for every architecture") {
  for (const Arch a : {Arch::durn_p, Arch::durn_u, Arch::durn_us, Arch::durn_s, Arch::durn_s_p}) {
    const Network net = build_network({.arch = a, .base_channels = 8, .se_reduction = 4}, 3);
    const int c = net.spec.in_channels;
    const Tensor x = random_tensor({1, c, 32, 32}, 4, 0, 1, DType::f32);
    CHECK(forward(net.spec, net.params, x).shape() == x.shape());
  }
  const Network u = build_network({.arch = Arch::durn_u, .base_channels = 8}, 5);
  CHECK_THROWS_AS(forward(u.spec, u.params, Tensor::zeros({1, 3, 30, 32})), DimensionError);
  CHECK_THROWS_AS(forward(u.spec, u.params, Tensor::zeros({1, 1, 32, 32})), DimensionError);
}

TEST_CASE("zero weights give the identity through the global residual") {
  for (const Arch a : {Arch::durn_p, Arch::durn_u}) {
    Network net = build_network({.arch = a, .base_channels = 8, .num_blocks = 2}, 6, DType::f64);
    zero_trainable(net.params);
    const Tensor x = random_tensor({2, net.spec.in_channels, 16, 16}, 7, 0, 1);
    CHECK(testutil::max_abs_diff(forward(net.spec, net.params, x), x) == 0.0);
  }
}

TEST_CASE("style d network follows the block recurrence") {
  const Network net =
      build_network({.arch = Arch::durn_p, .base_channels = 8, .num_blocks = 3}, 8, DType::f64);
  const Tensor x = random_tensor({1, 1, 12, 12}, 9, 0, 1);
  ForwardTrace trace;
  forward(net.spec, net.params, x, {NormMode::train, &trace});
  REQUIRE(trace.features.size() == 4);
  BlockState s{trace.features[0], trace.features[0]};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& cfg = net.spec.blocks[i];
    s = durb_forward(s, cfg, bind_durb(net.params, "blocks." + std::to_string(i + 1), cfg),
                     NormMode::train);
    CHECK(testutil::max_abs_diff(s.x, trace.features[i + 1]) < 1e-12);
  }
}

TEST_CASE("style variants") {
  const NetworkSpec base = make_spec({.arch = Arch::durn_p, .base_channels = 8, .num_blocks = 2});
  for (const ConnectionStyle s : {ConnectionStyle::b, ConnectionStyle::c}) {
    const NetworkSpec v = build_style_variant(s, base);
    const ParamStore params = init_params(v, 10);
    ForwardTrace trace;
    const Tensor x = random_tensor({1, 1, 16, 16}, 11, 0, 1, DType::f32);
    CHECK(forward(v, params, x, {NormMode::train, &trace}).shape() == x.shape());
    CHECK(trace.carriers.empty());
  }
  const NetworkSpec u = make_spec({.arch = Arch::durn_u, .num_blocks = 2});
  CHECK_THROWS_AS(build_style_variant(ConnectionStyle::c, u), ConfigError);
  CHECK_THROWS_AS(build_style_variant(ConnectionStyle::a, base), ConfigError);
  CHECK(build_style_variant(ConnectionStyle::b, u).connection_style == ConnectionStyle::b);
}

TEST_CASE("config text roundtrip") {
  for (const Arch a : {Arch::durn_p, Arch::durn_u, Arch::durn_us, Arch::durn_s, Arch::durn_s_p}) {
    const NetworkSpec spec = make_spec({.arch = a, .norms = a != Arch::durn_s});
    CHECK(spec_from_config(spec_to_config(spec)) == spec);
  }
  const NetworkSpec small = spec_from_config("arch = durn_p\nbase_channels = 16 # narrow\nnum_blocks = 2\n");
  CHECK(small.blocks.size() == 2);
  CHECK(small.base_channels == 16);
  CHECK_THROWS_AS(spec_from_config("arch = durn_p\ncolour = red\n"), ConfigError);
  CHECK_THROWS_AS(spec_from_config("stem = relu\n"), ConfigError);
  CHECK_THROWS_AS(spec_from_config("num_blocks = two\n"), ConfigError);
}

TEST_CASE("activation maps") {
  const Network net = build_network({.arch = Arch::durn_p, .base_channels = 8, .num_blocks = 3}, 12);
  const Tensor x = random_tensor({1, 1, 16, 16}, 13, 0, 1, DType::f32);
  const auto maps = dump_activation_maps(net.spec, net.params, x, {0, 1, 3});
  REQUIRE(maps.size() == 3);
  for (const auto& m : maps) {
    CHECK(m.shape() == Shape{16, 16});
    double lo = 1, hi = 0;
    for (double v : m.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }
  CHECK_THROWS_AS(dump_activation_maps(net.spec, net.params, x, {4}), ConfigError);
  CHECK(activation_map(Tensor::zeros({1, 4, 5, 5})).values() == std::vector<double>(25, 0.0));
}

#include "durn/durb.hpp"

#include <array>
#include <cmath>
#include <span>

#include "durn/ops.hpp"

namespace durn {

namespace {

struct KernelDilation {
  int kernel;
  int dilation;
};

// ct1 / ct2 settings per block, l = 1..n.
constexpr std::array<KernelDilation, 6> kNoiseT1{{{5, 1}, {7, 1}, {7, 2}, {11, 2}, {11, 1}, {11, 3}}};
constexpr std::array<KernelDilation, 6> kNoiseT2{{{3, 1}, {5, 1}, {5, 1}, {7, 1}, {5, 1}, {7, 1}}};
constexpr std::array<KernelDilation, 6> kBlurT1{{{3, 3}, {7, 1}, {3, 3}, {7, 1}, {3, 2}, {5, 1}}};
constexpr std::array<KernelDilation, 12> kHazeT1{{{5, 1}, {5, 1}, {7, 1}, {7, 1}, {11, 1}, {11, 1},
                                                 {11, 1}, {11, 1}, {11, 1}, {11, 1}, {11, 1}, {11, 1}}};
constexpr std::array<KernelDilation, 3> kRaindropST1{{{3, 12}, {3, 8}, {3, 6}}};
constexpr std::array<KernelDilation, 6> kRaindropPT1{{{3, 2}, {5, 1}, {3, 3}, {7, 1}, {3, 4}, {7, 1}}};
constexpr KernelDilation kDownsampleT2{3, 1};
constexpr KernelDilation kRaindropST2{3, 1};
constexpr KernelDilation kRaindropPT2{5, 1};

struct TableRows {
  std::span<const KernelDilation> t1;
  std::span<const KernelDilation> t2;  // empty: use `t2_fixed`
  KernelDilation t2_fixed{3, 1};
};

TableRows rows_for(BlockVariant variant, SpecTable table) {
  switch (table) {
    case SpecTable::noise: return {kNoiseT1, kNoiseT2};
    case SpecTable::blur: return {kBlurT1, {}, kDownsampleT2};
    case SpecTable::haze: return {kHazeT1, {}, kDownsampleT2};
    case SpecTable::raindrop:
      if (variant == BlockVariant::S) return {kRaindropST1, {}, kRaindropST2};
      if (variant == BlockVariant::P) return {kRaindropPT1, {}, kRaindropPT2};
      throw ConfigError("raindrop table only defines DuRB-S and DuRB-P rows");
  }
  throw ConfigError("unknown spec table");
}

Tensor conv(const Tensor& x, const ConvSpec& spec, const ConvParams& p) {
  return conv2d(x, spec, p.weight, p.bias);
}

Tensor inner_residual(const Tensor& x, const DuRBConfig& cfg, const DuRBParams& p, NormMode mode) {
  const ConvSpec spec = inner_conv_spec(cfg.channels);
  Tensor a = apply_norm(conv(x, spec, p.c1), cfg.norm, p.n1, mode);
  a = apply_norm(conv(relu(a), spec, p.c2), cfg.norm, p.n2, mode);
  return add(x, a);
}

Tensor container_t1(const Tensor& h, const DuRBConfig& cfg, const DuRBParams& p) {
  const Tensor in = has_upsampling(cfg.variant) ? pixel_shuffle(h, cfg.upsample_factor) : h;
  return conv(in, cfg.t1_conv, p.t1);
}

Tensor container_t2(const Tensor& v, const DuRBConfig& cfg, const DuRBParams& p, BlockTrace* trace) {
  Tensor in = v;
  if (has_attention(cfg.variant)) {
    in = se_gate(v, cfg.se_reduction, p.se);
    if (trace) trace->attention = in.detach();
  }
  return conv(in, cfg.t2_conv, p.t2);
}

void check_block_input(const Tensor& x, const DuRBConfig& cfg) {
  if (x.rank() != 4 || x.dim(1) != cfg.channels)
    throw DimensionError("DuRB expects (N, " + std::to_string(cfg.channels) + ", H, W), got " +
                         to_string(x.shape()));
}

}  // namespace

std::string to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::P: return "P";
    case BlockVariant::U: return "U";
    case BlockVariant::S: return "S";
    case BlockVariant::US: return "US";
  }
  return "?";
}

std::string to_string(NormKind n) {
  switch (n) {
    case NormKind::batch: return "batch";
    case NormKind::instance: return "instance";
    case NormKind::none: return "none";
  }
  return "?";
}

std::string to_string(SpecTable t) {
  switch (t) {
    case SpecTable::noise: return "noise";
    case SpecTable::blur: return "blur";
    case SpecTable::haze: return "haze";
    case SpecTable::raindrop: return "raindrop";
  }
  return "?";
}

BlockVariant parse_variant(const std::string& s) {
  if (s == "P") return BlockVariant::P;
  if (s == "U") return BlockVariant::U;
  if (s == "S") return BlockVariant::S;
  if (s == "US") return BlockVariant::US;
  throw ConfigError("unknown DuRB variant '" + s + "'");
}

NormKind parse_norm(const std::string& s) {
  if (s == "batch") return NormKind::batch;
  if (s == "instance") return NormKind::instance;
  if (s == "none") return NormKind::none;
  throw ConfigError("unknown norm kind '" + s + "'");
}

SpecTable parse_table(const std::string& s) {
  if (s == "noise") return SpecTable::noise;
  if (s == "blur") return SpecTable::blur;
  if (s == "haze") return SpecTable::haze;
  if (s == "raindrop") return SpecTable::raindrop;
  throw ConfigError("unknown spec table '" + s + "'");
}

bool has_upsampling(BlockVariant v) { return v == BlockVariant::U || v == BlockVariant::US; }
bool has_attention(BlockVariant v) { return v == BlockVariant::S || v == BlockVariant::US; }
NormKind default_norm(BlockVariant v) {
  return has_upsampling(v) ? NormKind::instance : NormKind::batch;
}

void DuRBConfig::validate() const {
  if (channels <= 0) throw ConfigError("DuRB channels must be positive");
  t1_conv.validate();
  t2_conv.validate();
  const int factor = has_upsampling(variant) ? 2 : 1;
  if (upsample_factor != factor)
    throw ConfigError("DuRB-" + to_string(variant) + " requires upsample factor " +
                      std::to_string(factor));
  if (has_upsampling(variant)) {
    if (channels % 4 != 0)
      throw ConfigError("DuRB-" + to_string(variant) + " needs channels divisible by 4");
    if (t2_conv.stride != 2) throw ConfigError("DuRB-" + to_string(variant) + " needs a stride-2 ct2");
    if (t1_conv.stride != 1) throw ConfigError("ct1 must have stride 1");
  } else if (t1_conv.stride != 1 || t2_conv.stride != 1) {
    throw ConfigError("DuRB-" + to_string(variant) + " needs stride-1 containers");
  }
  const int t1_in = has_upsampling(variant) ? channels / 4 : channels;
  if (t1_conv.in_channels != t1_in || t1_conv.out_channels != channels ||
      t2_conv.in_channels != channels || t2_conv.out_channels != channels)
    throw ConfigError("DuRB container channel counts do not match the block width");
  if (has_attention(variant) && (se_reduction <= 0 || channels % se_reduction != 0))
    throw ConfigError("SE reduction " + std::to_string(se_reduction) + " does not divide " +
                      std::to_string(channels) + " channels");
}

int table_rows(BlockVariant variant, SpecTable table) {
  return static_cast<int>(rows_for(variant, table).t1.size());
}

DuRBConfig make_durb(BlockVariant variant, int l, SpecTable table, int channels, NormKind norm,
                     int se_reduction) {
  const TableRows rows = rows_for(variant, table);
  if (l < 1 || l > static_cast<int>(rows.t1.size()))
    throw ConfigError("block index " + std::to_string(l) + " outside " + to_string(table) +
                      " table (1.." + std::to_string(rows.t1.size()) + ")");
  const auto row = static_cast<std::size_t>(l - 1);
  const KernelDilation t1 = rows.t1[row];
  const KernelDilation t2 = rows.t2.empty() ? rows.t2_fixed : rows.t2[row];

  DuRBConfig cfg;
  cfg.variant = variant;
  cfg.channels = channels;
  cfg.norm = norm;
  cfg.se_reduction = se_reduction;
  cfg.upsample_factor = has_upsampling(variant) ? 2 : 1;
  const int t1_in = has_upsampling(variant) ? channels / 4 : channels;
  cfg.t1_conv = ConvSpec{t1_in, channels, t1.kernel, t1.dilation, 1, true};
  cfg.t2_conv = ConvSpec{channels, channels, t2.kernel, t2.dilation,
                         has_upsampling(variant) ? 2 : 1, true};
  cfg.validate();
  return cfg;
}

ConvSpec inner_conv_spec(int channels) { return ConvSpec{channels, channels, 3, 1, 1, true}; }

ConvParams register_conv(ParamStore& store, const std::string& prefix, const ConvSpec& spec,
                         std::uint64_t seed, DType dtype) {
  spec.validate();
  // Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  const double bound =
      1.0 / std::sqrt(static_cast<double>(spec.in_channels) * spec.kernel * spec.kernel);
  Tensor w(Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, dtype);
  fill_uniform(w, bound, seed, prefix + ".weight");
  ConvParams p;
  p.weight = store.add_parameter(prefix + ".weight", std::move(w));
  if (spec.bias) {
    Tensor b(Shape{spec.out_channels}, dtype);
    fill_uniform(b, bound, seed, prefix + ".bias");
    p.bias = store.add_parameter(prefix + ".bias", std::move(b));
  }
  return p;
}

ConvParams bind_conv(const ParamStore& store, const std::string& prefix, const ConvSpec& spec) {
  ConvParams p;
  p.weight = store.get(prefix + ".weight");
  if (spec.bias) p.bias = store.get(prefix + ".bias");
  return p;
}

NormParams register_norm(ParamStore& store, const std::string& prefix, int channels, DType dtype) {
  NormParams fresh = NormParams::make(channels, dtype);
  NormParams p = fresh;
  p.scale = store.add_parameter(prefix + ".scale", fresh.scale);
  p.shift = store.add_parameter(prefix + ".shift", fresh.shift);
  p.running_mean = store.add_buffer(prefix + ".running_mean", fresh.running_mean);
  p.running_var = store.add_buffer(prefix + ".running_var", fresh.running_var);
  p.batches_tracked = store.add_buffer(prefix + ".batches_tracked", fresh.batches_tracked);
  return p;
}

NormParams bind_norm(const ParamStore& store, const std::string& prefix) {
  NormParams p;
  p.scale = store.get(prefix + ".scale");
  p.shift = store.get(prefix + ".shift");
  p.running_mean = store.get(prefix + ".running_mean");
  p.running_var = store.get(prefix + ".running_var");
  p.batches_tracked = store.get(prefix + ".batches_tracked");
  return p;
}

Tensor apply_norm(const Tensor& x, NormKind kind, const NormParams& params, NormMode mode) {
  switch (kind) {
    case NormKind::none: return x;
    case NormKind::instance: return instance_norm(x, params);
    case NormKind::batch: {
      NormParams handle = params;
      return batch_norm(x, handle, mode);
    }
  }
  return x;
}

SeParams register_se(ParamStore& store, const std::string& prefix, int channels, int reduction,
                     std::uint64_t seed, DType dtype) {
  if (reduction <= 0 || channels % reduction != 0)
    throw ConfigError("SE reduction " + std::to_string(reduction) + " does not divide " +
                      std::to_string(channels) + " channels");
  const int hidden = channels / reduction;
  auto make = [&](const std::string& name, Shape shape, double fan_in) {
    Tensor t(std::move(shape), dtype);
    fill_uniform(t, 1.0 / std::sqrt(fan_in), seed, prefix + "." + name);
    return store.add_parameter(prefix + "." + name, std::move(t));
  };
  SeParams p;
  p.fc1_weight = make("fc1.weight", Shape{channels, hidden}, channels);
  p.fc1_bias = make("fc1.bias", Shape{hidden}, channels);
  p.fc2_weight = make("fc2.weight", Shape{hidden, channels}, hidden);
  p.fc2_bias = make("fc2.bias", Shape{channels}, hidden);
  return p;
}

DuRBParams register_durb(ParamStore& store, const std::string& prefix, const DuRBConfig& cfg,
                         std::uint64_t seed, DType dtype) {
  cfg.validate();
  DuRBParams p;
  const ConvSpec inner = inner_conv_spec(cfg.channels);
  p.c1 = register_conv(store, prefix + ".c1", inner, seed, dtype);
  if (cfg.norm != NormKind::none) p.n1 = register_norm(store, prefix + ".n1", cfg.channels, dtype);
  p.c2 = register_conv(store, prefix + ".c2", inner, seed, dtype);
  if (cfg.norm != NormKind::none) p.n2 = register_norm(store, prefix + ".n2", cfg.channels, dtype);
  p.t1 = register_conv(store, prefix + ".t1", cfg.t1_conv, seed, dtype);
  if (has_attention(cfg.variant))
    p.se = register_se(store, prefix + ".se", cfg.channels, cfg.se_reduction, seed, dtype);
  p.t2 = register_conv(store, prefix + ".t2", cfg.t2_conv, seed, dtype);
  return p;
}

DuRBParams bind_durb(const ParamStore& store, const std::string& prefix, const DuRBConfig& cfg) {
  DuRBParams p;
  const ConvSpec inner = inner_conv_spec(cfg.channels);
  p.c1 = bind_conv(store, prefix + ".c1", inner);
  p.c2 = bind_conv(store, prefix + ".c2", inner);
  if (cfg.norm != NormKind::none) {
    p.n1 = bind_norm(store, prefix + ".n1");
    p.n2 = bind_norm(store, prefix + ".n2");
  }
  p.t1 = bind_conv(store, prefix + ".t1", cfg.t1_conv);
  p.t2 = bind_conv(store, prefix + ".t2", cfg.t2_conv);
  if (has_attention(cfg.variant)) {
    p.se.fc1_weight = store.get(prefix + ".se.fc1.weight");
    p.se.fc1_bias = store.get(prefix + ".se.fc1.bias");
    p.se.fc2_weight = store.get(prefix + ".se.fc2.weight");
    p.se.fc2_bias = store.get(prefix + ".se.fc2.bias");
  }
  return p;
}

Tensor se_gate(const Tensor& x, int reduction, const SeParams& params, Tensor* gate_out) {
  if (x.rank() != 4) throw DimensionError("se_gate expects NCHW input");
  const auto n = x.dim(0), c = x.dim(1);
  if (reduction <= 0 || c % reduction != 0)
    throw ConfigError("SE reduction " + std::to_string(reduction) + " does not divide " +
                      std::to_string(c) + " channels");
  Tensor squeezed = reshape(global_avg_pool(x), Shape{n, c});
  Tensor hidden = relu(dense(squeezed, params.fc1_weight, params.fc1_bias));
  Tensor gate = sigmoid(dense(hidden, params.fc2_weight, params.fc2_bias));
  gate = reshape(gate, Shape{n, c, 1, 1});
  if (gate_out) *gate_out = gate.detach();
  return mul(x, gate);
}

BlockState durb_forward(const BlockState& state, const DuRBConfig& cfg, const DuRBParams& params,
                        NormMode mode, BlockTrace* trace) {
  check_block_input(state.x, cfg);
  const Tensor h = inner_residual(state.x, cfg, params, mode);
  const Tensor u = relu(container_t1(h, cfg, params));
  if (state.r.defined() && state.r.shape() != u.shape())
    throw DimensionError("carrier shape " + to_string(state.r.shape()) + " does not match T1 output " +
                         to_string(u.shape()));
  const Tensor carrier = state.r.defined() ? add(u, state.r) : u;
  Tensor t2 = container_t2(carrier, cfg, params, trace);
  if (t2.shape() != state.x.shape())
    throw DimensionError("T2 output " + to_string(t2.shape()) + " does not match block input " +
                         to_string(state.x.shape()));
  return BlockState{relu(add(t2, state.x)), carrier};
}

Tensor durb_forward_paired(const Tensor& x, const DuRBConfig& cfg, const DuRBParams& params,
                           NormMode mode, BlockTrace* trace) {
  check_block_input(x, cfg);
  const Tensor h = inner_residual(x, cfg, params, mode);
  const Tensor u = relu(container_t1(h, cfg, params));
  return relu(add(x, container_t2(u, cfg, params, trace)));
}

Tensor durb_forward_split(const Tensor& x, const DuRBConfig& cfg, const DuRBParams& params,
                          NormMode mode, BlockTrace* trace) {
  check_block_input(x, cfg);
  if (has_upsampling(cfg.variant))
    throw ConfigError("split residuals are infeasible for DuRB-" + to_string(cfg.variant) +
                      ": T1 output and T2 input differ in size");
  const Tensor h = inner_residual(x, cfg, params, mode);
  const Tensor mid = add(x, relu(container_t1(h, cfg, params)));
  return relu(add(mid, container_t2(mid, cfg, params, trace)));
}

}  // namespace durn

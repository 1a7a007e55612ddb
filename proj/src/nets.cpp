#include "durn/nets.hpp"

#include <algorithm>
#include <limits>

#include "durn/autograd.hpp"
#include "durn/ops.hpp"

namespace durn {

namespace {

LayerDesc conv_layer(int in, int out, int stride = 1) {
  LayerDesc d;
  d.kind = LayerDesc::Kind::conv;
  d.conv = ConvSpec{in, out, 3, 1, stride, true};
  return d;
}

LayerDesc norm_layer(NormKind kind) {
  LayerDesc d;
  d.kind = LayerDesc::Kind::norm;
  d.norm = kind;
  return d;
}

LayerDesc simple_layer(LayerDesc::Kind kind) {
  LayerDesc d;
  d.kind = kind;
  return d;
}

LayerDesc shuffle_layer(int factor) {
  LayerDesc d;
  d.kind = LayerDesc::Kind::pixel_shuffle;
  d.factor = factor;
  return d;
}

bool encoder_decoder(Arch arch) { return arch != Arch::durn_p && arch != Arch::durn_s; }

// 4:1 down-sampling with two stride-2 convolutions, each followed by
// instance norm + ReLU.
std::vector<LayerDesc> encoder(int in, int c, bool norms) {
  std::vector<LayerDesc> layers;
  for (int i = 0; i < 2; ++i) {
    layers.push_back(conv_layer(i == 0 ? in : c, c, 2));
    if (norms) layers.push_back(norm_layer(NormKind::instance));
    layers.push_back(simple_layer(LayerDesc::Kind::relu));
  }
  return layers;
}

// Two x2 pixel-shuffle up-samplings, then conv + Tanh.
std::vector<LayerDesc> decoder(int c, int out, bool norms) {
  std::vector<LayerDesc> layers;
  for (int i = 0; i < 2; ++i) {
    layers.push_back(conv_layer(c, 4 * c));
    layers.push_back(shuffle_layer(2));
    if (norms) layers.push_back(norm_layer(NormKind::instance));
    layers.push_back(simple_layer(LayerDesc::Kind::relu));
  }
  layers.push_back(conv_layer(c, out));
  layers.push_back(simple_layer(LayerDesc::Kind::tanh));
  return layers;
}

std::vector<DuRBConfig> table_blocks(BlockVariant variant, SpecTable table, int c, bool norms,
                                     int se_reduction) {
  std::vector<DuRBConfig> blocks;
  const NormKind norm = norms ? default_norm(variant) : NormKind::none;
  for (int l = 1; l <= table_rows(variant, table); ++l)
    blocks.push_back(make_durb(variant, l, table, c, norm, se_reduction));
  return blocks;
}

struct FlowState {
  int channels;
  int scale_num = 1;  // spatial size multiplier = scale_num / scale_den
  int scale_den = 1;
};

void check_layers(const std::vector<LayerDesc>& layers, FlowState& s, const char* where) {
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerDesc::Kind::conv:
        l.conv.validate();
        if (l.conv.in_channels != s.channels)
          throw ConfigError(std::string(where) + ": conv expects " +
                            std::to_string(l.conv.in_channels) + " channels, receives " +
                            std::to_string(s.channels));
        s.channels = l.conv.out_channels;
        s.scale_den *= l.conv.stride;
        break;
      case LayerDesc::Kind::pixel_shuffle:
        if (l.factor <= 0 || s.channels % (l.factor * l.factor) != 0)
          throw ConfigError(std::string(where) + ": pixel shuffle factor does not divide channels");
        s.channels /= l.factor * l.factor;
        s.scale_num *= l.factor;
        break;
      case LayerDesc::Kind::norm:
      case LayerDesc::Kind::relu:
      case LayerDesc::Kind::tanh:
        break;
    }
  }
}

Tensor run_layers(const std::vector<LayerDesc>& layers, const std::string& prefix,
                  const ParamStore& params, Tensor x, NormMode mode) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string name = prefix + "." + std::to_string(i);
    switch (l.kind) {
      case LayerDesc::Kind::conv: {
        const ConvParams p = bind_conv(params, name, l.conv);
        x = conv2d(x, l.conv, p.weight, p.bias);
        break;
      }
      case LayerDesc::Kind::norm:
        if (l.norm != NormKind::none) x = apply_norm(x, l.norm, bind_norm(params, name), mode);
        break;
      case LayerDesc::Kind::relu: x = relu(x); break;
      case LayerDesc::Kind::tanh: x = durn::tanh(x); break;
      case LayerDesc::Kind::pixel_shuffle: x = pixel_shuffle(x, l.factor); break;
    }
  }
  return x;
}

void register_layers(const std::vector<LayerDesc>& layers, const std::string& prefix,
                     ParamStore& store, std::uint64_t seed, DType dtype) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string name = prefix + "." + std::to_string(i);
    if (l.kind == LayerDesc::Kind::conv) register_conv(store, name, l.conv, seed, dtype);
  }
}

void register_layer_norms(const std::vector<LayerDesc>& layers, const std::string& prefix,
                          ParamStore& store, DType dtype) {
  int channels = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerDesc::Kind::conv) channels = l.conv.out_channels;
    if (l.kind == LayerDesc::Kind::pixel_shuffle) channels /= l.factor * l.factor;
    if (l.kind == LayerDesc::Kind::norm && l.norm != NormKind::none)
      register_norm(store, prefix + "." + std::to_string(i), channels, dtype);
  }
}

std::string block_prefix(std::size_t index) { return "blocks." + std::to_string(index + 1); }

}  // namespace

std::string to_string(ConnectionStyle style) {
  switch (style) {
    case ConnectionStyle::a: return "a";
    case ConnectionStyle::b: return "b";
    case ConnectionStyle::c: return "c";
    case ConnectionStyle::d: return "d";
  }
  return "?";
}

ConnectionStyle parse_style(const std::string& text) {
  if (text == "a") return ConnectionStyle::a;
  if (text == "b") return ConnectionStyle::b;
  if (text == "c") return ConnectionStyle::c;
  if (text == "d") return ConnectionStyle::d;
  throw ConfigError("unknown connection style '" + text + "' (expected a, b, c or d)");
}

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::durn_p: return "durn_p";
    case Arch::durn_u: return "durn_u";
    case Arch::durn_us: return "durn_us";
    case Arch::durn_s: return "durn_s";
    case Arch::durn_s_p: return "durn_s_p";
  }
  return "?";
}

Arch parse_arch(const std::string& s) {
  if (s == "durn_p") return Arch::durn_p;
  if (s == "durn_u") return Arch::durn_u;
  if (s == "durn_us") return Arch::durn_us;
  if (s == "durn_s") return Arch::durn_s;
  if (s == "durn_s_p") return Arch::durn_s_p;
  throw ConfigError("unknown arch '" + s + "'");
}

std::string to_string(CarrierInit c) { return c == CarrierInit::stem ? "stem" : "zeros"; }

CarrierInit parse_carrier(const std::string& s) {
  if (s == "stem") return CarrierInit::stem;
  if (s == "zeros") return CarrierInit::zeros;
  throw ConfigError("unknown carrier init '" + s + "'");
}

int NetworkSpec::spatial_divisor() const {
  int d = 1;
  for (const auto& l : stem)
    if (l.kind == LayerDesc::Kind::conv) d *= l.conv.stride;
  return d;
}

void NetworkSpec::validate() const {
  if (in_channels != 1 && in_channels != 3)
    throw ConfigError("in_channels must be 1 or 3, got " + std::to_string(in_channels));
  if (base_channels <= 0) throw ConfigError("base_channels must be positive");
  if (blocks.empty()) throw ConfigError("network has no blocks");
  if (connection_style == ConnectionStyle::a)
    throw ConfigError("connection style a has no paired operations; use b, c or d");

  FlowState flow{in_channels};
  check_layers(stem, flow, "stem");
  if (flow.channels != base_channels)
    throw ConfigError("stem produces " + std::to_string(flow.channels) + " channels, blocks expect " +
                      std::to_string(base_channels));
  for (const auto& b : blocks) {
    b.validate();
    if (b.channels != base_channels) throw ConfigError("every block must have base_channels width");
    if (connection_style == ConnectionStyle::c && has_upsampling(b.variant))
      throw ConfigError("connection style c is infeasible for DuRB-" + to_string(b.variant));
    if (has_upsampling(b.variant) != has_upsampling(blocks.front().variant))
      throw ConfigError("blocks disagree on the carrier resolution");
  }
  check_layers(head, flow, "head");
  if (flow.channels != in_channels)
    throw ConfigError("head produces " + std::to_string(flow.channels) + " channels, expected " +
                      std::to_string(in_channels));
  if (flow.scale_num != flow.scale_den)
    throw ConfigError("head up-sampling does not undo the stem down-sampling");
}

NetworkSpec make_spec(const NetworkOptions& o) {
  NetworkSpec spec;
  spec.arch = o.arch;
  spec.in_channels = o.in_channels > 0 ? o.in_channels : (o.arch == Arch::durn_p ? 1 : 3);
  spec.base_channels = o.base_channels > 0 ? o.base_channels : (o.arch == Arch::durn_us ? 64 : 32);
  spec.global_residual = o.global_residual;
  spec.connection_style = o.connection_style;
  spec.carrier_init = o.carrier_init;
  if (spec.in_channels != 1 && spec.in_channels != 3)
    throw ConfigError("in_channels must be 1 or 3, got " + std::to_string(spec.in_channels));
  const int c = spec.base_channels;

  switch (o.arch) {
    case Arch::durn_p:
      spec.blocks = table_blocks(BlockVariant::P, SpecTable::noise, c, o.norms, o.se_reduction);
      break;
    case Arch::durn_s:
      spec.blocks = table_blocks(BlockVariant::S, SpecTable::noise, c, o.norms, o.se_reduction);
      break;
    case Arch::durn_u:
      spec.blocks = table_blocks(BlockVariant::U, SpecTable::blur, c, o.norms, o.se_reduction);
      break;
    case Arch::durn_us:
      spec.blocks = table_blocks(BlockVariant::US, SpecTable::haze, c, o.norms, o.se_reduction);
      break;
    case Arch::durn_s_p: {
      spec.blocks = table_blocks(BlockVariant::S, SpecTable::raindrop, c, o.norms, o.se_reduction);
      auto p = table_blocks(BlockVariant::P, SpecTable::raindrop, c, o.norms, o.se_reduction);
      spec.blocks.insert(spec.blocks.end(), p.begin(), p.end());
      break;
    }
  }
  if (o.num_blocks < 0) throw ConfigError("num_blocks must be non-negative");
  if (o.num_blocks > static_cast<int>(spec.blocks.size()))
    throw ConfigError(to_string(o.arch) + " has at most " + std::to_string(spec.blocks.size()) +
                      " blocks");
  if (o.num_blocks > 0) spec.blocks.resize(static_cast<std::size_t>(o.num_blocks));

  if (encoder_decoder(o.arch)) {
    spec.stem = encoder(spec.in_channels, c, o.norms);
    spec.head = decoder(c, spec.in_channels, o.norms);
  } else {
    spec.stem = {conv_layer(spec.in_channels, c)};
    if (o.norms) spec.stem.push_back(norm_layer(NormKind::batch));
    spec.stem.push_back(simple_layer(LayerDesc::Kind::relu));
    spec.head = {conv_layer(c, spec.in_channels), simple_layer(LayerDesc::Kind::tanh)};
  }
  spec.validate();
  return spec;
}

ParamStore init_params(const NetworkSpec& spec, std::uint64_t seed, DType dtype) {
  spec.validate();
  ParamStore store;
  register_layers(spec.stem, "stem", store, seed, dtype);
  register_layer_norms(spec.stem, "stem", store, dtype);
  for (std::size_t i = 0; i < spec.blocks.size(); ++i)
    register_durb(store, block_prefix(i), spec.blocks[i], seed, dtype);
  register_layers(spec.head, "head", store, seed, dtype);
  register_layer_norms(spec.head, "head", store, dtype);
  return store;
}

Network build_network(const NetworkOptions& options, std::uint64_t seed, DType dtype) {
  Network net;
  net.spec = make_spec(options);
  net.params = init_params(net.spec, seed, dtype);
  return net;
}

NetworkSpec build_style_variant(ConnectionStyle style, const NetworkSpec& base) {
  NetworkSpec spec = base;
  spec.connection_style = style;
  spec.validate();
  return spec;
}

Tensor forward(const NetworkSpec& spec, const ParamStore& params, const Tensor& batch,
               const ForwardOptions& options) {
  if (batch.rank() != 4)
    throw DimensionError("forward expects an NCHW batch, got " + to_string(batch.shape()));
  if (batch.dim(1) != spec.in_channels)
    throw DimensionError("network expects " + std::to_string(spec.in_channels) +
                         " input channels, got " + std::to_string(batch.dim(1)));
  const int div = spec.spatial_divisor();
  if (batch.dim(2) % div != 0 || batch.dim(3) % div != 0)
    throw DimensionError("input size " + std::to_string(batch.dim(2)) + "x" +
                         std::to_string(batch.dim(3)) + " is not divisible by " + std::to_string(div));

  ForwardTrace* trace = options.trace;
  if (trace) *trace = ForwardTrace{};
  Tensor x = run_layers(spec.stem, "stem", params, batch, options.mode);
  if (trace) trace->features.push_back(x.detach());

  const bool upsampled_carrier = has_upsampling(spec.blocks.front().variant);
  Tensor carrier;
  if (spec.connection_style == ConnectionStyle::d && spec.carrier_init == CarrierInit::stem)
    carrier = upsampled_carrier ? upsample_nearest(x, 2) : x;

  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const auto& cfg = spec.blocks[i];
    const DuRBParams p = bind_durb(params, block_prefix(i), cfg);
    BlockTrace block_trace;
    switch (spec.connection_style) {
      case ConnectionStyle::d: {
        BlockState out = durb_forward({x, carrier}, cfg, p, options.mode, &block_trace);
        x = std::move(out.x);
        carrier = std::move(out.r);
        if (trace) trace->carriers.push_back(carrier.detach());
        break;
      }
      case ConnectionStyle::b:
        x = durb_forward_paired(x, cfg, p, options.mode, &block_trace);
        break;
      case ConnectionStyle::c:
        x = durb_forward_split(x, cfg, p, options.mode, &block_trace);
        break;
      case ConnectionStyle::a:
        throw ConfigError("connection style a has no paired operations");
    }
    if (trace) {
      trace->features.push_back(x.detach());
      if (block_trace.attention.defined()) trace->attention = block_trace.attention;
    }
  }

  Tensor out = run_layers(spec.head, "head", params, x, options.mode);
  if (trace) trace->residual = out.detach();
  if (spec.global_residual) out = add(out, batch);
  return out;
}

std::int64_t count_parameters(const ParamStore& params) { return params.count_parameters(); }

Tensor activation_map(const Tensor& activation) {
  if (activation.rank() != 4) throw DimensionError("activation_map expects NCHW input");
  const auto c = activation.dim(1), h = activation.dim(2), w = activation.dim(3);
  Tensor map(Shape{h, w}, DType::f64);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::int64_t i = 0; i < h * w; ++i) {
    double s = 0.0;
    for (std::int64_t ch = 0; ch < c; ++ch) s += activation.at(ch * h * w + i);
    map.set(i, s);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  const double range = hi - lo;
  for (std::int64_t i = 0; i < h * w; ++i) map.set(i, range > 0.0 ? (map.at(i) - lo) / range : 0.0);
  return map;
}

std::vector<Tensor> dump_activation_maps(const NetworkSpec& spec, const ParamStore& params,
                                         const Tensor& input, const std::vector<int>& taps,
                                         NormMode mode) {
  for (int t : taps)
    if (t < 0 || t > static_cast<int>(spec.blocks.size()))
      throw ConfigError("tap " + std::to_string(t) + " outside 0.." +
                        std::to_string(spec.blocks.size()));
  NoGradGuard no_grad;
  ForwardTrace trace;
  forward(spec, params, input, ForwardOptions{mode, &trace});
  std::vector<Tensor> maps;
  maps.reserve(taps.size());
  for (int t : taps) maps.push_back(activation_map(trace.features[static_cast<std::size_t>(t)]));
  return maps;
}

}  // namespace durn

#include <sstream>

#include "durn/nets.hpp"

namespace durn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

int to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected an integer for " + what + ", got '" + s + "'");
  }
}

bool to_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true/false for " + what + ", got '" + s + "'");
}

// conv:in:out:kernel:dilation:stride:bias
std::string conv_token(const ConvSpec& c) {
  std::ostringstream o;
  o << "conv:" << c.in_channels << ':' << c.out_channels << ':' << c.kernel << ':' << c.dilation
    << ':' << c.stride << ':' << (c.bias ? 1 : 0);
  return o.str();
}

ConvSpec parse_conv(const std::string& tok) {
  const auto parts = split(tok, ':');
  if (parts.size() != 7 || parts[0] != "conv")
    throw ConfigError("bad conv token '" + tok + "' (conv:in:out:kernel:dilation:stride:bias)");
  ConvSpec c;
  c.in_channels = to_int(parts[1], tok);
  c.out_channels = to_int(parts[2], tok);
  c.kernel = to_int(parts[3], tok);
  c.dilation = to_int(parts[4], tok);
  c.stride = to_int(parts[5], tok);
  c.bias = to_bool(parts[6], tok);
  return c;
}

std::string layers_text(const std::vector<LayerDesc>& layers) {
  std::string out;
  for (const auto& l : layers) {
    if (!out.empty()) out += ' ';
    switch (l.kind) {
      case LayerDesc::Kind::conv: out += conv_token(l.conv); break;
      case LayerDesc::Kind::norm: out += "norm:" + to_string(l.norm); break;
      case LayerDesc::Kind::relu: out += "relu"; break;
      case LayerDesc::Kind::tanh: out += "tanh"; break;
      case LayerDesc::Kind::pixel_shuffle:
        out += "pixel_shuffle:" + std::to_string(l.factor);
        break;
    }
  }
  return out;
}

std::vector<LayerDesc> parse_layers(const std::string& text) {
  std::vector<LayerDesc> layers;
  for (const auto& tok : tokens(text)) {
    LayerDesc d;
    if (tok.rfind("conv:", 0) == 0) {
      d.kind = LayerDesc::Kind::conv;
      d.conv = parse_conv(tok);
    } else if (tok.rfind("norm:", 0) == 0) {
      d.kind = LayerDesc::Kind::norm;
      d.norm = parse_norm(tok.substr(5));
    } else if (tok == "relu") {
      d.kind = LayerDesc::Kind::relu;
    } else if (tok == "tanh") {
      d.kind = LayerDesc::Kind::tanh;
    } else if (tok.rfind("pixel_shuffle:", 0) == 0) {
      d.kind = LayerDesc::Kind::pixel_shuffle;
      d.factor = to_int(tok.substr(14), tok);
    } else {
      throw ConfigError("unknown layer token '" + tok + "'");
    }
    layers.push_back(d);
  }
  return layers;
}

// variant t1 t2 channels norm se upsample_factor
std::string block_text(const DuRBConfig& b) {
  std::ostringstream o;
  o << to_string(b.variant) << ' ' << conv_token(b.t1_conv) << ' ' << conv_token(b.t2_conv) << ' '
    << b.channels << ' ' << to_string(b.norm) << ' ' << b.se_reduction << ' ' << b.upsample_factor;
  return o.str();
}

DuRBConfig parse_block(const std::string& text) {
  const auto t = tokens(text);
  if (t.size() != 7)
    throw ConfigError("block line needs 7 fields (variant t1 t2 channels norm se upsample), got " +
                      std::to_string(t.size()));
  DuRBConfig b;
  b.variant = parse_variant(t[0]);
  b.t1_conv = parse_conv(t[1]);
  b.t2_conv = parse_conv(t[2]);
  b.channels = to_int(t[3], "block channels");
  b.norm = parse_norm(t[4]);
  b.se_reduction = to_int(t[5], "block se");
  b.upsample_factor = to_int(t[6], "block upsample");
  return b;
}

struct ParsedConfig {
  NetworkOptions options;
  bool has_stem = false, has_head = false;
  std::vector<LayerDesc> stem, head;
  std::vector<DuRBConfig> blocks;
};

ParsedConfig parse(const std::string& text) {
  ParsedConfig pc;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto& o = pc.options;
    if (key == "arch") o.arch = parse_arch(value);
    else if (key == "in_channels") o.in_channels = to_int(value, key);
    else if (key == "base_channels") o.base_channels = to_int(value, key);
    else if (key == "num_blocks") o.num_blocks = to_int(value, key);
    else if (key == "norms") o.norms = to_bool(value, key);
    else if (key == "connection_style") o.connection_style = parse_style(value);
    else if (key == "carrier_init") o.carrier_init = parse_carrier(value);
    else if (key == "global_residual") o.global_residual = to_bool(value, key);
    else if (key == "se_reduction") o.se_reduction = to_int(value, key);
    else if (key == "stem") {
      pc.has_stem = true;
      pc.stem = parse_layers(value);
    } else if (key == "head") {
      pc.has_head = true;
      pc.head = parse_layers(value);
    } else if (key == "block") {
      pc.blocks.push_back(parse_block(value));
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return pc;
}

}  // namespace

std::string spec_to_config(const NetworkSpec& spec) {
  std::ostringstream o;
  o << "arch = " << to_string(spec.arch) << '\n'
    << "in_channels = " << spec.in_channels << '\n'
    << "base_channels = " << spec.base_channels << '\n'
    << "connection_style = " << to_string(spec.connection_style) << '\n'
    << "carrier_init = " << to_string(spec.carrier_init) << '\n'
    << "global_residual = " << (spec.global_residual ? "true" : "false") << '\n'
    << "stem = " << layers_text(spec.stem) << '\n';
  for (const auto& b : spec.blocks) o << "block = " << block_text(b) << '\n';
  o << "head = " << layers_text(spec.head) << '\n';
  return o.str();
}

NetworkOptions options_from_config(const std::string& text) { return parse(text).options; }

NetworkSpec spec_from_config(const std::string& text) {
  ParsedConfig pc = parse(text);
  const bool explicit_layers = pc.has_stem || pc.has_head || !pc.blocks.empty();
  if (!explicit_layers) return make_spec(pc.options);
  if (!pc.has_stem || !pc.has_head || pc.blocks.empty())
    throw ConfigError("an explicit spec needs stem, head and at least one block line");

  NetworkSpec spec;
  spec.arch = pc.options.arch;
  spec.in_channels = pc.options.in_channels > 0 ? pc.options.in_channels
                                                 : (spec.arch == Arch::durn_p ? 1 : 3);
  spec.base_channels = pc.options.base_channels > 0 ? pc.options.base_channels
                                                     : pc.blocks.front().channels;
  spec.global_residual = pc.options.global_residual;
  spec.connection_style = pc.options.connection_style;
  spec.carrier_init = pc.options.carrier_init;
  spec.stem = std::move(pc.stem);
  spec.head = std::move(pc.head);
  spec.blocks = std::move(pc.blocks);
  if (pc.options.num_blocks > 0) {
    if (pc.options.num_blocks > static_cast<int>(spec.blocks.size()))
      throw ConfigError("num_blocks exceeds the listed blocks");
    spec.blocks.resize(static_cast<std::size_t>(pc.options.num_blocks));
  }
  spec.validate();
  return spec;
}

}  // namespace durn

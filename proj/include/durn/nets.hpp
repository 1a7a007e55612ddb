#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "durn/connection_style.hpp"
#include "durn/durb.hpp"
#include "durn/params.hpp"

namespace durn {

enum class Arch { durn_p, durn_u, durn_us, durn_s, durn_s_p };
/// Network-level initialisation of the carrier stream fed to the first block.
enum class CarrierInit { stem, zeros };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& s);
std::string to_string(CarrierInit c);
CarrierInit parse_carrier(const std::string& s);

/// One layer of a stem or head.
struct LayerDesc {
  enum class Kind { conv, norm, relu, tanh, pixel_shuffle };
  Kind kind = Kind::conv;
  ConvSpec conv;
  NormKind norm = NormKind::none;
  int factor = 2;

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct NetworkSpec {
  Arch arch = Arch::durn_p;
  int in_channels = 1;
  int base_channels = 32;
  std::vector<DuRBConfig> blocks;
  std::vector<LayerDesc> stem;
  std::vector<LayerDesc> head;
  bool global_residual = true;
  ConnectionStyle connection_style = ConnectionStyle::d;
  CarrierInit carrier_init = CarrierInit::stem;

  /// Input height and width must be multiples of this (product of stem strides).
  int spatial_divisor() const;
  void validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct NetworkOptions {
  Arch arch = Arch::durn_p;
  /// 0 selects the task default: 1 for durn_p (grayscale noise), 3 otherwise.
  int in_channels = 0;
  /// 0 selects 64 for durn_us, 32 otherwise.
  int base_channels = 0;
  /// 0 keeps the full table; smaller values keep the first rows.
  int num_blocks = 0;
  bool norms = true;
  ConnectionStyle connection_style = ConnectionStyle::d;
  CarrierInit carrier_init = CarrierInit::stem;
  bool global_residual = true;
  int se_reduction = 16;
};

/// Parameters plus the spec they were built for.
struct Network {
  NetworkSpec spec;
  ParamStore params;
};

NetworkSpec make_spec(const NetworkOptions& options);
/// Registers and initialises every parameter of `spec` from `seed`.
ParamStore init_params(const NetworkSpec& spec, std::uint64_t seed, DType dtype = DType::f32);
Network build_network(const NetworkOptions& options, std::uint64_t seed, DType dtype = DType::f32);

/// Swaps the connection style; style c is rejected for U / US blocks and
/// style a is not a DuRB wiring.
NetworkSpec build_style_variant(ConnectionStyle style, const NetworkSpec& base);

/// Activations captured during forward(): features[0] is the input to the
/// first block, features[l] the output of block l.
struct ForwardTrace {
  std::vector<Tensor> features;
  std::vector<Tensor> carriers;
  /// SE-gated activation of the last block with attention.
  Tensor attention;
  /// Output of the final Tanh, before the global residual.
  Tensor residual;
};

struct ForwardOptions {
  NormMode mode = NormMode::train;
  ForwardTrace* trace = nullptr;
};

/// Maps (N, C, H, W) to (N, C, H, W). With a global residual the head output
/// is added to the input; values are not clamped.
Tensor forward(const NetworkSpec& spec, const ParamStore& params, const Tensor& batch,
               const ForwardOptions& options = {});

std::int64_t count_parameters(const ParamStore& params);

/// Sum over channels of the first batch item, min-max normalised to [0, 1].
/// Returns an (H, W) tensor; constant activations map to zeros.
Tensor activation_map(const Tensor& activation);

/// Per tap (0 = input of the first block, l = output of block l), the
/// normalised channel-sum map of the first batch item.
std::vector<Tensor> dump_activation_maps(const NetworkSpec& spec, const ParamStore& params,
                                         const Tensor& input, const std::vector<int>& taps,
                                         NormMode mode = NormMode::train);

/// Key = value text form of a spec.
std::string spec_to_config(const NetworkSpec& spec);
/// Parses either a full spec (with stem/block/head lines) or an options-only
/// file; explicit layer lines override the arch defaults.
NetworkSpec spec_from_config(const std::string& text);
NetworkOptions options_from_config(const std::string& text);

}  // namespace durn

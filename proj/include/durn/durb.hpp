#pragma once

#include <cstdint>
#include <string>

#include "durn/nn_ops.hpp"
#include "durn/params.hpp"

namespace durn {

/// Container fillings: P = [conv, conv], U = [up + conv, stride-2 conv],
/// S = [conv, SE + conv], US = [up + conv, SE + stride-2 conv].
enum class BlockVariant { P, U, S, US };
enum class NormKind { batch, instance, none };
/// Per-task ct1/ct2 tables. `raindrop` holds both the DuRB-S and DuRB-P rows.
enum class SpecTable { noise, blur, haze, raindrop };

std::string to_string(BlockVariant v);
std::string to_string(NormKind n);
std::string to_string(SpecTable t);
BlockVariant parse_variant(const std::string& s);
NormKind parse_norm(const std::string& s);
SpecTable parse_table(const std::string& s);

bool has_upsampling(BlockVariant v);
bool has_attention(BlockVariant v);
/// Batch norm for P/S, instance norm for U/US.
NormKind default_norm(BlockVariant v);

struct DuRBConfig {
  BlockVariant variant = BlockVariant::P;
  ConvSpec t1_conv;
  ConvSpec t2_conv;
  int channels = 32;
  NormKind norm = NormKind::batch;
  int se_reduction = 16;
  int upsample_factor = 1;

  /// Throws ConfigError when the container layout and conv specs disagree.
  void validate() const;
  friend bool operator==(const DuRBConfig&, const DuRBConfig&) = default;
};

/// Number of rows available for `variant` in `table`.
int table_rows(BlockVariant variant, SpecTable table);

/// Block `l` (1-based) for `variant`, with ct1/ct2 taken from `table`.
DuRBConfig make_durb(BlockVariant variant, int l, SpecTable table, int channels, NormKind norm,
                     int se_reduction = 16);

struct ConvParams {
  Tensor weight;
  Tensor bias;
};

struct SeParams {
  Tensor fc1_weight, fc1_bias;  // (C, C/r), (C/r)
  Tensor fc2_weight, fc2_bias;  // (C/r, C), (C)
};

struct DuRBParams {
  ConvParams c1, c2;  // inner 3x3 convolutions
  ConvParams t1, t2;  // ct1 and ct2
  NormParams n1, n2;  // unused when norm == none
  SeParams se;        // S / US only
};

/// Main stream x and second residual carrier r (shaped like the T1 output).
struct BlockState {
  Tensor x;
  Tensor r;
};

/// Inner 3x3 convolutions: x + Norm(c2(ReLU(Norm(c1(x))))).
ConvSpec inner_conv_spec(int channels);

ConvParams register_conv(ParamStore& store, const std::string& prefix, const ConvSpec& spec,
                         std::uint64_t seed, DType dtype = DType::f32);
ConvParams bind_conv(const ParamStore& store, const std::string& prefix, const ConvSpec& spec);
NormParams register_norm(ParamStore& store, const std::string& prefix, int channels,
                         DType dtype = DType::f32);
NormParams bind_norm(const ParamStore& store, const std::string& prefix);
Tensor apply_norm(const Tensor& x, NormKind kind, const NormParams& params, NormMode mode);

SeParams register_se(ParamStore& store, const std::string& prefix, int channels, int reduction,
                     std::uint64_t seed, DType dtype = DType::f32);
DuRBParams register_durb(ParamStore& store, const std::string& prefix, const DuRBConfig& cfg,
                         std::uint64_t seed, DType dtype = DType::f32);
DuRBParams bind_durb(const ParamStore& store, const std::string& prefix, const DuRBConfig& cfg);

/// x * sigmoid(fc2(ReLU(fc1(avgpool(x))))), gate broadcast over H and W.
/// Throws ConfigError unless `reduction` divides the channel count.
Tensor se_gate(const Tensor& x, int reduction, const SeParams& params, Tensor* gate_out = nullptr);

/// Optional capture of intermediate activations.
struct BlockTrace {
  Tensor attention;  // SE-gated T2 input (S / US only)
};

/// Dual residual connection:
///   h  = x + Norm(c2(ReLU(Norm(c1(x)))))
///   u  = ReLU(T1(h))
///   r' = u + r
///   y  = ReLU(T2(r') + x)
BlockState durb_forward(const BlockState& state, const DuRBConfig& cfg, const DuRBParams& params,
                        NormMode mode, BlockTrace* trace = nullptr);

/// Paired-module residual (one residual around T2 o T1): y = ReLU(x + T2(ReLU(T1(h)))).
Tensor durb_forward_paired(const Tensor& x, const DuRBConfig& cfg, const DuRBParams& params,
                           NormMode mode, BlockTrace* trace = nullptr);

/// Two independent residuals: y' = x + ReLU(T1(h)), y = ReLU(y' + T2(y')).
/// Only valid when T1 preserves the spatial size (P / S).
Tensor durb_forward_split(const Tensor& x, const DuRBConfig& cfg, const DuRBParams& params,
                          NormMode mode, BlockTrace* trace = nullptr);

}  // namespace durn

#pragma once

// Spectral separation and low-rank reconstruction. A feature map is split
// into a pooled low-frequency part and the residual high-frequency part;
// enhanced copies of the encoder-side and decoder-side features feed a conv
// generator whose k output maps, tiled across channels, span a subspace.
// The decoder feature is then replaced by (or augmented with) its orthogonal
// projection onto that subspace: y = V (VᵀV + εI)⁻¹ Vᵀ x.

#include <cstddef>

#include "scnet/autodiff.hpp"

namespace scnet::ssr {

struct SsrConfig {
  bool enabled = false;
  std::size_t k = 8;
  double eps_relative = 1e-6;  // ε = max(eps_relative · trace(VᵀV)/k, eps_floor)
  double eps_floor = 1e-12;
  std::size_t level = 1;  // 1 = finest encoder/decoder level
  // true: X_down + Y. false replaces X_down with Y, which leaves the output
  // conv a single rank-k map and trains unreliably.
  bool residual = true;
  std::size_t enhancer_kernel = 3;
};

struct EpsRule {
  double relative = 1e-6;
  double floor = 1e-12;
};

struct ConvParams {
  Var weight;
  Var bias;
};

/// Same-size convolution with padding (K−1)/2.
Var conv_same(Tape& tape, Var x, const ConvParams& p);

struct FrequencySplit {
  Var low;   // avgpool2(F), B×C×H/2×W/2
  Var high;  // F − bilinear_up2(low)
};

FrequencySplit freq_split(Tape& tape, Var f);

struct Enhancer {
  ConvParams up_low, up_high, down_low, down_high;
};

/// X_E = [up(conv(low(x_up))), conv(high(x_up)), up(conv(low(x_down))), conv(high(x_down))]
/// concatenated along channels.
Var build_basis_input(Tape& tape, Var x_up, Var x_down, const Enhancer& enhancer);

/// Maps X_E to k maps with `generator` and tiles them into B×N×k basis
/// columns with N = channels·H·W (see ops::tile_channels).
Var generate_basis(Tape& tape, Var x_e, const ConvParams& generator, std::size_t channels);

/// y = V c with c = solve(VᵀV + εI, Vᵀx). V is B×N×k and x is B×N (or N×k
/// and N for a single item); y has x's shape.
Var project_reconstruct(Tape& tape, Var v, Var x, const EpsRule& eps);

struct SsrParams {
  Enhancer enhancer;
  ConvParams generator;
};

/// Full block: returns the reconstructed decoder feature with X_down's shape.
Var ssr_block(Tape& tape, Var x_up, Var x_down, const SsrParams& params, const SsrConfig& cfg);

}  // namespace scnet::ssr

#pragma once

// Spectral-norm estimation and clamping for convolution kernels. A kernel
// O×C×Kh×Kw is viewed as the row-major matrix O×(C·Kh·Kw); its largest
// singular value is tracked by warm-started power iteration and the kernel
// is rescaled by 1/max(1, σ̂/β) after each optimizer step.

#include <cstdint>
#include <string>
#include <vector>

#include "scnet/tensor.hpp"

namespace scnet::lipschitz {

struct SpectralNormState {
  std::string layer_id;
  std::vector<double> u;  // length O
  std::vector<double> v;  // length C·Kh·Kw
  double beta = 1.0;
  double last_estimate = 0.0;
};

/// O×(C·Kh·Kw); element (o, (c·Kh + kh)·Kw + kw) = w[o, c, kh, kw].
Tensor reshape_kernel(const Tensor& w);
Tensor unreshape_kernel(const Tensor& mat, const Shape& kernel_shape);

/// Random unit start vectors drawn from `seed`.
SpectralNormState make_state(std::string layer_id, std::size_t rows, std::size_t cols, double beta,
                             std::uint64_t seed);

/// Runs `iters` rounds of v ← Wᵀu/‖Wᵀu‖, u ← Wv/‖Wv‖ and returns
/// σ̂ = uᵀWv, also stored in state.last_estimate. A zero matrix gives 0 and
/// leaves u, v untouched.
double power_iterate(SpectralNormState& state, const Tensor& w_mat, int iters);

/// Scales `w` by β/σ̂ when σ̂ = state.last_estimate exceeds β. Returns whether
/// the kernel changed.
bool clamp_weights(Tensor& w, const SpectralNormState& state, double beta);

/// Largest singular value of a matrix by a fresh 50-round power iteration
/// (the verification estimate).
double verified_norm(const Tensor& w_mat, int iters = 50, std::uint64_t seed = 0x5eed);

/// Per-frequency operator gain of the convolution on an H×W periodic grid:
/// at each frequency, the largest singular value of the O×C matrix of
/// per-channel-pair transfer functions. Returns an H×W tensor.
Tensor per_frequency_gain(const Tensor& w, std::size_t height, std::size_t width);

}  // namespace scnet::lipschitz

#include "scnet/ssr.hpp"

#include "scnet/error.hpp"

namespace scnet::ssr {

Var conv_same(Tape& tape, Var x, const ConvParams& p) {
  const Tensor& w = tape.value(p.weight);
  require_rank(w, 4, "ssr conv");
  return ops::conv2d(tape, x, p.weight, p.bias, (w.dim(2) - 1) / 2);
}

FrequencySplit freq_split(Tape& tape, Var f) {
  const Var low = ops::avgpool2(tape, f);
  const Var high = ops::sub(tape, f, ops::bilinear_up2(tape, low));
  return {low, high};
}

namespace {

Var enhance(Tape& tape, Var x, const ConvParams& low_conv, const ConvParams& high_conv) {
  const FrequencySplit s = freq_split(tape, x);
  const Var low = ops::bilinear_up2(tape, conv_same(tape, s.low, low_conv));
  const Var high = conv_same(tape, s.high, high_conv);
  return ops::concat_channels(tape, low, high);
}

}  // namespace

Var build_basis_input(Tape& tape, Var x_up, Var x_down, const Enhancer& enhancer) {
  require_same_shape(tape.value(x_up), tape.value(x_down), "build_basis_input");
  const Var up = enhance(tape, x_up, enhancer.up_low, enhancer.up_high);
  const Var down = enhance(tape, x_down, enhancer.down_low, enhancer.down_high);
  return ops::concat_channels(tape, up, down);
}

Var generate_basis(Tape& tape, Var x_e, const ConvParams& generator, std::size_t channels) {
  const Tensor& xe = tape.value(x_e);
  require_rank(xe, 4, "generate_basis");
  const std::size_t k = tape.value(generator.weight).dim(0);
  const std::size_t n = channels * xe.dim(2) * xe.dim(3);
  if (k > n) {
    throw ShapeError("generate_basis: k = " + std::to_string(k) + " exceeds vector length N = " + std::to_string(n));
  }
  return ops::tile_channels(tape, conv_same(tape, x_e, generator), channels);
}

Var project_reconstruct(Tape& tape, Var v, Var x, const EpsRule& eps) {
  // Shapes are copied: appending nodes may move the tape's storage.
  const Shape v_shape = tape.value(v).shape();
  const Shape out_shape = tape.value(x).shape();
  if (v_shape.size() == 2) {
    require_rank(tape.value(x), 1, "project_reconstruct vector");
    v = ops::reshape(tape, v, {1, v_shape[0], v_shape[1]});
    x = ops::reshape(tape, x, {1, out_shape[0], 1});
  } else {
    require_rank(tape.value(v), 3, "project_reconstruct basis");
    require_rank(tape.value(x), 2, "project_reconstruct vector");
    x = ops::reshape(tape, x, {out_shape[0], out_shape[1], 1});
  }
  const Shape vb = tape.value(v).shape();
  if (tape.value(x).dim(0) != vb[0] || tape.value(x).dim(1) != vb[1]) {
    throw ShapeError("project_reconstruct: basis " + shape_str(vb) + " does not match vector " +
                     shape_str(out_shape));
  }
  const Var gram = ops::gram_regularized(tape, v, eps.relative, eps.floor);
  const Var rhs = ops::matmul_tn(tape, v, x);
  const Var coeff = ops::solve_small(tape, gram, rhs, "ssr projection");
  return ops::reshape(tape, ops::matmul(tape, v, coeff), out_shape);
}

Var ssr_block(Tape& tape, Var x_up, Var x_down, const SsrParams& params, const SsrConfig& cfg) {
  const Tensor& xd = tape.value(x_down);
  require_rank(xd, 4, "ssr_block");
  const std::size_t B = xd.dim(0), C = xd.dim(1), H = xd.dim(2), W = xd.dim(3);
  const Var x_e = build_basis_input(tape, x_up, x_down, params.enhancer);
  const Var basis = generate_basis(tape, x_e, params.generator, C);
  const Var flat = ops::reshape(tape, x_down, {B, C * H * W});
  const Var y = ops::reshape(tape, project_reconstruct(tape, basis, flat, {cfg.eps_relative, cfg.eps_floor}),
                             {B, C, H, W});
  return cfg.residual ? ops::add(tape, x_down, y) : y;
}

}  // namespace scnet::ssr

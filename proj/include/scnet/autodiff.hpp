#pragma once

// Reverse-mode differentiation over the handful of primitives the denoiser
// needs. A Tape records one forward pass; backward() replays it in reverse
// append order. Tapes are single use.

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "scnet/tensor.hpp"

namespace scnet {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is always populated after backward().
  Var parameter(Tensor value);

  /// Appends a primitive application. `fn` runs during backward() with the
  /// node's upstream gradient and must accumulate into its inputs through
  /// accumulate(). Nodes none of whose inputs need a gradient drop `fn`.
  Var record(Tensor value, std::vector<Var> inputs, Backward fn);

  /// Attaches a backward closure to an already recorded node, for ops whose
  /// adjoint needs the node's own output. No-op when `v` needs no gradient.
  void set_backward(Var v, Backward fn);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds `g` into the gradient of `v` if `v` participates in differentiation.
  void accumulate(Var v, const Tensor& g);
  /// Mutable gradient buffer for `v`, allocated as zeros on first use.
  /// Returns nullptr when `v` does not need a gradient.
  Tensor* grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a scalar.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_parameter = false;
    Backward backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

namespace ops {

/// Cross-correlation of x (B×C×H×W) with w (O×C×Kh×Kw) plus bias b (O),
/// zero padding `padding` on every side. Kernels must have odd extents.
Var conv2d(Tape& tape, Var x, Var w, Var b, std::size_t padding);

/// Mean over non-overlapping 2×2 cells. H and W must be even.
Var avgpool2(Tape& tape, Var x);

/// 2× bilinear upsampling with half-pixel centres (align_corners = false).
/// Along one axis, output index j maps to source coordinate s = j/2 − 1/4,
/// clamped to [0, n−1]; the value is (1−f)·x[floor(s)] + f·x[floor(s)+1]
/// with f = s − floor(s) and the right index clamped. Interior even outputs
/// are 0.25·x[i−1] + 0.75·x[i], odd outputs 0.75·x[i] + 0.25·x[i+1].
Var bilinear_up2(Tape& tape, Var x);

Var relu(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul_scalar(Tape& tape, Var x, double s);
/// Concatenation along axis 1 (channels) of two B×C×H×W tensors.
Var concat_channels(Tape& tape, Var a, Var b);
/// Mean of squared differences; returns a rank-0 tensor with one element.
Var mse(Tape& tape, Var a, Var b);
/// Same data, new shape.
Var reshape(Tape& tape, Var x, Shape shape);

/// Batched products over rank-3 operands with a leading batch axis.
/// matmul: (B×n×k)·(B×k×m) → B×n×m. matmul_tn: (B×n×k)ᵀ·(B×n×m) → B×k×m.
Var matmul(Tape& tape, Var a, Var b);
Var matmul_tn(Tape& tape, Var a, Var b);

/// Regularized Gram matrix VᵀV + εI for V of shape B×N×k, with
/// ε = max(relative · trace(VᵀV)/k, floor) evaluated per batch item.
/// ε participates in differentiation on the relative branch.
Var gram_regularized(Tape& tape, Var v, double relative, double floor);

/// Solves A·X = Bm for symmetric positive definite A by Cholesky.
/// Shapes: A k×k with Bm k×M, or batched A B×k×k with Bm B×k×M.
/// `label` names the caller in numeric-failure diagnostics.
Var solve_small(Tape& tape, Var a, Var bm, const std::string& label = "solve_small");

/// Turns k maps (B×k×H×W) into basis columns of length N = C·H·W (B×N×k)
/// by repeating each map across C channel slots: V[b, c·H·W + p, j] = G[b, j, p].
Var tile_channels(Tape& tape, Var g, std::size_t channels);

}  // namespace ops

/// Plain (untaped) solve used by ops::solve_small and tests. Overwrites `bm`
/// with A⁻¹·Bm for a single k×k system with M right-hand sides.
void cholesky_solve_inplace(std::span<const double> a, std::size_t k, std::span<double> bm,
                            std::size_t m, const std::string& label);

}  // namespace scnet

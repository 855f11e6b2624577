#include <algorithm>

#include "scnet/autodiff.hpp"
#include "scnet/error.hpp"

namespace scnet {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, true, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, Backward fn) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](Var v) { return node(v).requires_grad; });
  nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(fn) : Backward{}});
  return Var{nodes_.size() - 1};
}

void Tape::set_backward(Var v, Backward fn) {
  Node& n = node(v);
  if (n.requires_grad && !n.is_parameter) n.backward = std::move(fn);
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw Error("tape: invalid variable handle");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw Error("tape: invalid variable handle");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty() && n.value.size() != 0) throw Error("tape: no gradient recorded for variable");
  return n.grad;
}

bool Tape::has_grad(Var v) const { return !node(v).grad.empty(); }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor* Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return &n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Tensor* buf = grad_buffer(v);
  if (!buf) return;
  require_same_shape(*buf, g, "tape.accumulate");
  auto dst = buf->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (backward_done_) throw Error("tape: backward already ran on this tape");
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(root.value.shape()));
  }
  backward_done_ = true;
  if (root.requires_grad) {
    root.grad = Tensor(root.value.shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      // The closure may touch other nodes' grads but never appends, so
      // references into nodes_ stay valid.
      n.backward(*this, n.grad);
    }
  }
  for (Node& n : nodes_) {
    if (n.is_parameter && n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  }
}

}  // namespace scnet

#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "glyphnet/tensor.hpp"

namespace glyphnet {

/// A value in the computation graph together with the gradient of the loss
/// with respect to it. Parameters carry a stable name; intermediates don't.
///
/// Gradient buffers start empty and are allocated on first write: an empty
/// grad reads as "no gradient has reached this node", which lets backward
/// closures skip dead branches and keeps forward-only passes allocation-free.
template <typename Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // empty until backward first touches it
  bool requires_grad = true;
  std::string name;      // parameter name ("" for intermediates)
  std::string producer;  // op that produced this node ("" for leaves)
  std::vector<std::shared_ptr<Node>> producer_inputs;

  explicit Node(Tensor<Real> v, std::string n = "")
      : value(std::move(v)), name(std::move(n)) {}

  bool has_grad() const { return grad.numel() != 0; }

  /// The gradient buffer, allocated (zeroed) on first use.
  Tensor<Real>& grad_buf() {
    if (!has_grad()) grad = Tensor<Real>(value.shape());
    return grad;
  }

  void zero_grad() {
    if (has_grad()) grad.fill(Real(0));
  }
};

template <typename Real>
using NodePtr = std::shared_ptr<Node<Real>>;

template <typename Real>
NodePtr<Real> make_node(Tensor<Real> v, std::string name = "") {
  return std::make_shared<Node<Real>>(std::move(v), std::move(name));
}

/// Records the forward pass as an ordered list of backward closures and
/// replays them in reverse exactly once. Closures accumulate into input
/// gradients with +=, so a node feeding several ops collects every
/// contribution (y = x + x yields dy/dx = 2).
///
/// Each closure is recorded together with the node it produced. Replay runs
/// newest-first, and once a node's own closure has run nothing can read that
/// node again (its consumers all ran earlier), so its value and gradient are
/// dropped on the spot. That caps backward's footprint at roughly the live
/// frontier of the graph instead of the whole graph. Leaves — parameters and
/// inputs — record no closure and keep value and gradient.
template <typename Real>
class Tape {
 public:
  void record(NodePtr<Real> out, std::function<void()> backward_step) {
    if (ran_) throw std::logic_error("tape already replayed; build a fresh tape");
    steps_.push_back({std::move(out), std::move(backward_step)});
  }

  /// Seeds d(loss)/d(loss) = 1 and replays all recorded steps newest-first.
  void backward(const NodePtr<Real>& loss) {
    if (ran_) throw std::logic_error("tape backward may run only once");
    if (loss->value.numel() != 1)
      throw ShapeError("backward expects a scalar loss, got " + shape_str(loss->value.shape()));
    bool on_tape = false;
    for (const auto& s : steps_)
      if (s.out == loss) {
        on_tape = true;
        break;
      }
    if (!on_tape) throw std::logic_error("loss was not produced on this tape");
    ran_ = true;
    loss->grad_buf()[0] = Real(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
      it->fn();
      it->out->value = Tensor<Real>();
      it->out->grad = Tensor<Real>();
    }
  }

  size_t size() const { return steps_.size(); }
  bool replayed() const { return ran_; }

  void reset() {
    steps_.clear();
    ran_ = false;
  }

 private:
  struct Step {
    NodePtr<Real> out;
    std::function<void()> fn;
  };
  std::vector<Step> steps_;
  bool ran_ = false;
};

}  // namespace glyphnet

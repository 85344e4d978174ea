#pragma once

// Minimal reverse-mode differentiation over vector-valued nodes.
//
// Nodes are appended in evaluation order, so replaying the backward closures
// in reverse insertion order is a valid topological sweep. Every node value is
// checked for finiteness on insertion; the first offending primitive is
// reported through NumericalError.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cosdpo {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  /// Receives the gradient flowing into a node's output and distributes it to its inputs.
  using Backward = std::function<void(Tape&, std::span<const double> out_grad)>;

  Var constant(std::vector<double> value);
  Var variable(std::vector<double> value);

  /// Records a primitive. `needs_grad` should be true if any input requires a gradient;
  /// otherwise the backward closure is dropped.
  Var record(std::string op, std::vector<double> value, bool needs_grad, Backward backward);

  const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  const std::vector<double>& grad(Var v) const { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds `g` to the gradient buffer of `v`. No-op for constants.
  void accumulate(Var v, std::span<const double> g);

  /// Seeds d(output)/d(output) = 1 for a scalar output and runs the reverse sweep.
  void backward(Var output);

 private:
  struct Node {
    std::string op;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable primitives. Scalars are one-element nodes.

/// a*x + b*y, elementwise; x and y must have equal length.
Var axpby(Tape& tape, double a, Var x, double b, Var y);
Var add(Tape& tape, Var x, Var y);
Var sub(Tape& tape, Var x, Var y);
Var scale(Tape& tape, Var x, double c);
/// Max-subtracted log-softmax.
Var log_softmax(Tape& tape, Var x);
/// sum_i w_i x_i with constant weights.
Var dot(Tape& tape, Var x, std::span<const double> w);
/// Concatenates scalar nodes into one vector.
Var stack(Tape& tape, std::span<const Var> scalars);
/// sum_k c_k s_k over scalar nodes with constant coefficients.
Var weighted_sum(Tape& tape, std::span<const Var> scalars, std::span<const double> coeffs);
/// (w.x) / (|w| |x|) with constant w. A zero-norm x yields 0 with zero gradient.
Var cosine_similarity(Tape& tape, Var x, std::span<const double> w);

}  // namespace cosdpo

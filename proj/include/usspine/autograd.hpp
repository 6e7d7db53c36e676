#pragma once

#include <functional>
#include <vector>

#include "usspine/tensor.hpp"

namespace usspine {

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode computation record.
///
/// Nodes are appended in evaluation order, which is a topological order of
/// the graph; backward() walks them once in reverse. Parameters registered
/// with watch() receive their gradient into Parameter::grad (accumulating).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  /// With record_grad = false no backward closures are kept (inference).
  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  Var watch(Parameter& param);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  bool recording() const { return record_grad_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. loss must hold one element.
  void backward(Var loss);

  /// Appends an op result. fn is dropped when no input requires grad.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);

  /// Gradient buffer for v, allocated on first use. Used by op closures.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::vector<Var> inputs;
    BackwardFn backward;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  bool record_grad_;
  std::vector<Node> nodes_;
};

namespace ops {

/// Cross-correlation. weight is [Cout, Cin, kh, kw], bias is [Cout].
Var conv2d(Tape& tape, Var input, Var weight, Var bias, int stride, int padding);

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major
/// window order.
Var maxpool2(Tape& tape, Var input);

Var upsample_nearest2(Tape& tape, Var input);
Var relu(Tape& tape, Var input);
Var add(Tape& tape, Var a, Var b);

/// Mean over all elements of (pred - target)^2; returns a [1] tensor.
Var mse_loss(Tape& tape, Var pred, Var target);

/// Sum of all elements; returns a [1] tensor.
Var sum(Tape& tape, Var input);

/// Sum of elementwise product with a constant tensor; returns a [1] tensor.
Var dot_const(Tape& tape, Var input, const Tensor& weights);

/// Per-channel normalization with batch statistics followed by a learned
/// affine map (gamma, beta are [C]).
Var channel_norm(Tape& tape, Var input, Var gamma, Var beta, Real eps = 1e-5);

}  // namespace ops

/// Output extent of a convolution along one axis.
int conv_output_extent(int in, int kernel, int stride, int padding);

}  // namespace usspine

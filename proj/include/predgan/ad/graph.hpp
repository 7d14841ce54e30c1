#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "predgan/ad/tensor.hpp"

namespace predgan::ad {

using NodeId = std::size_t;

enum class OpKind {
  Input,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  AddBias,
  Affine,
  Tanh,
  Sigmoid,
  LeakyRelu,
  LeakySlope,
  Transpose,
  Log,
  Reshape,
  Slice,
  Concat,
  Sum,
  Mean,
};

const char* op_name(OpKind kind);

/// A define-then-run computation graph with reverse-mode differentiation.
///
/// Nodes are appended in construction order, so the node list is always
/// topologically sorted. Shapes are resolved on every forward pass from the
/// bound input values; a graph built once can be evaluated for any batch
/// size its primitives accept. Input values are owned by the graph and may be
/// updated in place between passes (optimizers do this for parameters).
class Graph {
 public:
  NodeId input(const std::string& name);
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  /// x of shape [..., k] plus bias of shape [k], broadcast over leading axes.
  NodeId add_bias(NodeId x, NodeId bias);
  /// scale * x + shift, elementwise.
  NodeId affine(NodeId x, double scale, double shift = 0.0);
  NodeId tanh(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId leaky_relu(NodeId x, double negative_slope = 0.2);
  /// Derivative of leaky_relu: 1 where x > 0, negative_slope elsewhere. It is
  /// piecewise constant, so its own adjoint is zero. Together with transpose
  /// this lets input gradients be built as graph nodes and differentiated.
  NodeId leaky_slope(NodeId x, double negative_slope = 0.2);
  /// Transpose of a rank-2 tensor.
  NodeId transpose(NodeId x);
  /// Natural log of max(x, floor); the adjoint is zero where x < floor.
  NodeId log(NodeId x, double floor = 1e-12);
  NodeId reshape(NodeId x, Shape shape);
  /// Elements [begin, end) along `axis`.
  NodeId slice(NodeId x, std::size_t axis, std::size_t begin, std::size_t end);
  NodeId concat(std::span<const NodeId> parts, std::size_t axis);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);

  void set_label(NodeId id, std::string label);
  const std::string& label(NodeId id) const { return nodes_.at(id).label; }

  NodeId input_id(const std::string& name) const;
  bool has_input(const std::string& name) const;
  void set_input(NodeId id, Tensor value);
  void set_input(const std::string& name, Tensor value) { set_input(input_id(name), std::move(value)); }
  /// Mutable access to a bound input value (parameters are updated through this).
  Tensor& input_value(NodeId id);

  /// Evaluates every node. Inputs in `inputs` are bound first.
  void forward(const std::map<std::string, Tensor>& inputs = {});
  /// Evaluates only the ancestors of `targets`.
  void forward(std::span<const NodeId> targets);

  const Tensor& value(NodeId id) const;

  /// Gradients of the scalar `output` with respect to each node in `wrt`.
  /// The forward pass must already have evaluated `output`.
  std::vector<Tensor> backward(NodeId output, std::span<const NodeId> wrt) const;
  /// Vector-Jacobian product: gradients of sum(seed * output) for an output
  /// of any shape. `seed` must match the output's shape.
  std::vector<Tensor> backward(NodeId output, const Tensor& seed,
                               std::span<const NodeId> wrt) const;
  std::map<std::string, Tensor> backward(NodeId output,
                                         const std::vector<std::string>& wrt_inputs) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::span<const NodeId> operands(NodeId id) const { return nodes_.at(id).inputs; }

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    double a = 0.0;
    double b = 0.0;
    std::size_t axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    Shape shape;
    std::string label;
    Tensor value;
    bool bound = false;
  };

  NodeId push(Node node);
  void check_operand(NodeId id) const;
  void evaluate(NodeId id);
  std::string describe(NodeId id) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> inputs_;
};

}  // namespace predgan::ad

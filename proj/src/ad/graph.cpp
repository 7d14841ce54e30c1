#include "predgan/ad/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cassert>
#include <cmath>

#include "predgan/util/error.hpp"

namespace predgan::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t dim = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.dim = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void accumulate(Tensor& into, bool& present, const Tensor& contribution) {
  if (!present) {
    into = contribution;
    present = true;
    return;
  }
  auto dst = into.data();
  auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Affine: return "affine";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::LeakySlope: return "leaky_slope";
    case OpKind::Transpose: return "transpose";
    case OpKind::Log: return "log";
    case OpKind::Reshape: return "reshape";
    case OpKind::Slice: return "slice";
    case OpKind::Concat: return "concat";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
  }
  return "?";
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) check_operand(in);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Graph::check_operand(NodeId id) const {
  if (id >= nodes_.size()) throw Error("graph operand " + std::to_string(id) + " does not exist");
}

std::string Graph::describe(NodeId id) const {
  const Node& n = nodes_[id];
  std::string s = "node " + std::to_string(id) + " (" + op_name(n.kind);
  if (!n.label.empty()) s += " '" + n.label + "'";
  return s + ")";
}

NodeId Graph::input(const std::string& name) {
  if (inputs_.contains(name)) throw Error("duplicate graph input '" + name + "'");
  Node n{.kind = OpKind::Input};
  n.label = name;
  NodeId id = push(std::move(n));
  inputs_[name] = id;
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n{.kind = OpKind::Constant};
  n.value = std::move(value);
  n.bound = true;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) { return push({.kind = OpKind::MatMul, .inputs = {a, b}}); }
NodeId Graph::add(NodeId a, NodeId b) { return push({.kind = OpKind::Add, .inputs = {a, b}}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push({.kind = OpKind::Sub, .inputs = {a, b}}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push({.kind = OpKind::Mul, .inputs = {a, b}}); }
NodeId Graph::add_bias(NodeId x, NodeId bias) {
  return push({.kind = OpKind::AddBias, .inputs = {x, bias}});
}
NodeId Graph::affine(NodeId x, double scale, double shift) {
  return push({.kind = OpKind::Affine, .inputs = {x}, .a = scale, .b = shift});
}
NodeId Graph::tanh(NodeId x) { return push({.kind = OpKind::Tanh, .inputs = {x}}); }
NodeId Graph::sigmoid(NodeId x) { return push({.kind = OpKind::Sigmoid, .inputs = {x}}); }
NodeId Graph::leaky_relu(NodeId x, double negative_slope) {
  return push({.kind = OpKind::LeakyRelu, .inputs = {x}, .a = negative_slope});
}

NodeId Graph::leaky_slope(NodeId x, double negative_slope) {
  return push({.kind = OpKind::LeakySlope, .inputs = {x}, .a = negative_slope});
}

NodeId Graph::transpose(NodeId x) { return push({.kind = OpKind::Transpose, .inputs = {x}}); }
NodeId Graph::log(NodeId x, double floor) {
  return push({.kind = OpKind::Log, .inputs = {x}, .a = floor});
}
NodeId Graph::reshape(NodeId x, Shape shape) {
  return push({.kind = OpKind::Reshape, .inputs = {x}, .shape = std::move(shape)});
}
NodeId Graph::slice(NodeId x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (end < begin) throw ShapeError("slice with end < begin");
  return push({.kind = OpKind::Slice, .inputs = {x}, .axis = axis, .begin = begin, .end = end});
}
NodeId Graph::concat(std::span<const NodeId> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  return push({.kind = OpKind::Concat,
               .inputs = std::vector<NodeId>(parts.begin(), parts.end()),
               .axis = axis});
}
NodeId Graph::sum(NodeId x) { return push({.kind = OpKind::Sum, .inputs = {x}}); }
NodeId Graph::mean(NodeId x) { return push({.kind = OpKind::Mean, .inputs = {x}}); }

void Graph::set_label(NodeId id, std::string label) { nodes_.at(id).label = std::move(label); }

NodeId Graph::input_id(const std::string& name) const {
  auto it = inputs_.find(name);
  if (it == inputs_.end()) throw Error("graph has no input named '" + name + "'");
  return it->second;
}

bool Graph::has_input(const std::string& name) const { return inputs_.contains(name); }

void Graph::set_input(NodeId id, Tensor value) {
  Node& n = nodes_.at(id);
  if (n.kind != OpKind::Input) throw Error(describe(id) + " is not an input");
  n.value = std::move(value);
  n.bound = true;
}

Tensor& Graph::input_value(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.kind != OpKind::Input) throw Error(describe(id) + " is not an input");
  if (!n.bound) throw Error("input '" + n.label + "' is not bound");
  return n.value;
}

const Tensor& Graph::value(NodeId id) const { return nodes_.at(id).value; }

void Graph::forward(const std::map<std::string, Tensor>& inputs) {
  for (const auto& [name, t] : inputs) set_input(name, t);
  for (NodeId id = 0; id < nodes_.size(); ++id) evaluate(id);
}

void Graph::forward(std::span<const NodeId> targets) {
  std::vector<char> needed(nodes_.size(), 0);
  for (NodeId t : targets) needed.at(t) = 1;
  for (NodeId id = nodes_.size(); id-- > 0;) {
    if (!needed[id]) continue;
    for (NodeId in : nodes_[id].inputs) needed[in] = 1;
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (needed[id]) evaluate(id);
  }
}

void Graph::evaluate(NodeId id) {
  Node& n = nodes_[id];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  auto fail = [&](const std::string& why) { throw ShapeError(describe(id) + ": " + why); };
  auto same_shape = [&]() {
    if (in(0).shape() != in(1).shape()) {
      fail("operand shapes " + shape_str(in(0).shape()) + " and " + shape_str(in(1).shape()) +
           " differ");
    }
  };
  auto unary = [&](auto f) {
    const Tensor& x = in(0);
    Tensor out(x.shape());
    auto xs = x.data();
    auto ys = out.data();
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
    n.value = std::move(out);
  };

  switch (n.kind) {
    case OpKind::Input:
      if (!n.bound) fail("input not bound");
      break;
    case OpKind::Constant:
      break;
    case OpKind::MatMul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        fail("cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
      }
      Tensor out(Shape{a.dim(0), b.dim(1)});
      MatMap(out.data().data(), a.dim(0), b.dim(1)).noalias() =
          ConstMatMap(a.data().data(), a.dim(0), a.dim(1)) *
          ConstMatMap(b.data().data(), b.dim(0), b.dim(1));
      n.value = std::move(out);
      break;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      same_shape();
      Tensor out(in(0).shape());
      auto x = in(0).data();
      auto y = in(1).data();
      auto o = out.data();
      if (n.kind == OpKind::Add) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
      } else if (n.kind == OpKind::Sub) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
      } else {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::AddBias: {
      const Tensor& x = in(0);
      const Tensor& bias = in(1);
      if (x.rank() == 0 || bias.size() != x.shape().back()) {
        fail("bias of shape " + shape_str(bias.shape()) + " does not broadcast over " +
             shape_str(x.shape()));
      }
      Tensor out = x;
      const std::size_t k = bias.size();
      auto o = out.data();
      auto bv = bias.data();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % k];
      n.value = std::move(out);
      break;
    }
    case OpKind::Affine:
      unary([s = n.a, t = n.b](double v) { return s * v + t; });
      break;
    case OpKind::Tanh:
      unary([](double v) { return std::tanh(v); });
      break;
    case OpKind::Sigmoid:
      unary([](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      });
      break;
    case OpKind::LeakyRelu:
      unary([s = n.a](double v) { return v > 0 ? v : s * v; });
      break;
    case OpKind::LeakySlope:
      unary([s = n.a](double v) { return v > 0 ? 1.0 : s; });
      break;
    case OpKind::Transpose: {
      const Tensor& x = in(0);
      if (x.rank() != 2) fail("cannot transpose " + shape_str(x.shape()));
      Tensor out(Shape{x.dim(1), x.dim(0)});
      MatMap(out.data().data(), x.dim(1), x.dim(0)).noalias() =
          ConstMatMap(x.data().data(), x.dim(0), x.dim(1)).transpose();
      n.value = std::move(out);
      break;
    }
    case OpKind::Log:
      unary([f = n.a](double v) { return std::log(std::max(v, f)); });
      break;
    case OpKind::Reshape: {
      if (shape_size(n.shape) != in(0).size()) {
        fail("cannot reshape " + shape_str(in(0).shape()) + " to " + shape_str(n.shape));
      }
      n.value = in(0).reshaped(n.shape);
      break;
    }
    case OpKind::Slice: {
      const Tensor& x = in(0);
      if (n.axis >= x.rank() || n.end > x.dim(n.axis)) {
        fail("slice [" + std::to_string(n.begin) + "," + std::to_string(n.end) + ") on axis " +
             std::to_string(n.axis) + " out of range for " + shape_str(x.shape()));
      }
      AxisSplit s = split_axis(x.shape(), n.axis);
      Shape shape = x.shape();
      shape[n.axis] = n.end - n.begin;
      Tensor out(shape);
      const std::size_t width = (n.end - n.begin) * s.inner;
      auto src = x.data();
      auto dst = out.data();
      for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((o * s.dim + n.begin) * s.inner),
                    width, dst.begin() + static_cast<std::ptrdiff_t>(o * width));
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::Concat: {
      const Tensor& first = in(0);
      if (n.axis >= first.rank()) fail("concat axis out of range");
      Shape shape = first.shape();
      shape[n.axis] = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Shape& sk = in(k).shape();
        bool ok = sk.size() == shape.size();
        for (std::size_t d = 0; ok && d < sk.size(); ++d) {
          if (d != n.axis && sk[d] != first.shape()[d]) ok = false;
        }
        if (!ok) fail("operand " + shape_str(sk) + " incompatible with " + shape_str(first.shape()));
        shape[n.axis] += sk[n.axis];
      }
      Tensor out(shape);
      AxisSplit total = split_axis(shape, n.axis);
      auto dst = out.data();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        AxisSplit s = split_axis(in(k).shape(), n.axis);
        auto src = in(k).data();
        const std::size_t width = s.dim * s.inner;
        for (std::size_t o = 0; o < total.outer; ++o) {
          std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(o * width), width,
                      dst.begin() + static_cast<std::ptrdiff_t>((o * total.dim + offset) * total.inner));
        }
        offset += s.dim;
      }
      n.value = std::move(out);
      break;
    }
    case OpKind::Sum:
    case OpKind::Mean: {
      double acc = 0.0;
      for (double v : in(0).data()) acc += v;
      if (n.kind == OpKind::Mean) {
        if (in(0).size() == 0) fail("mean of empty tensor");
        acc /= static_cast<double>(in(0).size());
      }
      n.value = Tensor::scalar(acc);
      break;
    }
  }
#ifndef NDEBUG
  if (n.kind != OpKind::Input && n.kind != OpKind::Constant) {
    bool inputs_finite = true;
    for (NodeId i : n.inputs) inputs_finite = inputs_finite && nodes_[i].value.all_finite();
    assert(!inputs_finite || n.value.all_finite());
  }
#endif
}

std::vector<Tensor> Graph::backward(NodeId output, std::span<const NodeId> wrt) const {
  check_operand(output);
  const Tensor& out_value = nodes_[output].value;
  if (out_value.rank() != 0) {
    throw ShapeError("backward from " + describe(output) + " with non-scalar shape " +
                     shape_str(out_value.shape()));
  }
  return backward(output, Tensor::scalar(1.0), wrt);
}

std::vector<Tensor> Graph::backward(NodeId output, const Tensor& seed,
                                    std::span<const NodeId> wrt) const {
  check_operand(output);
  if (seed.shape() != nodes_[output].value.shape()) {
    throw ShapeError("backward seed of shape " + shape_str(seed.shape()) + " does not match " +
                     describe(output) + " of shape " + shape_str(nodes_[output].value.shape()));
  }

  std::vector<char> needs(output + 1, 0);
  for (NodeId w : wrt) {
    check_operand(w);
    if (w <= output) needs[w] = 1;
  }
  for (NodeId id = 0; id <= output; ++id) {
    for (NodeId in : nodes_[id].inputs) {
      if (needs[in]) needs[id] = 1;
    }
  }

  std::vector<Tensor> adj(output + 1);
  std::vector<char> present(output + 1, 0);
  adj[output] = seed;
  present[output] = 1;

  for (NodeId id = output + 1; id-- > 0;) {
    if (!present[id] || !needs[id]) continue;
    const Node& n = nodes_[id];
    const Tensor& g = adj[id];
    auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
    auto wants = [&](std::size_t k) { return needs[n.inputs[k]] != 0; };
    auto give = [&](std::size_t k, const Tensor& t) {
      NodeId target = n.inputs[k];
      bool p = present[target] != 0;
      accumulate(adj[target], p, t);
      present[target] = 1;
    };
    auto unary_grad = [&](auto dfdx) {
      if (!wants(0)) return;
      const Tensor& x = in(0);
      const Tensor& y = n.value;
      Tensor d(x.shape());
      auto xs = x.data();
      auto ys = y.data();
      auto gs = g.data();
      auto ds = d.data();
      for (std::size_t i = 0; i < ds.size(); ++i) ds[i] = gs[i] * dfdx(xs[i], ys[i]);
      give(0, d);
    };

    switch (n.kind) {
      case OpKind::Input:
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        ConstMatMap G(g.data().data(), a.dim(0), b.dim(1));
        if (wants(0)) {
          Tensor da(a.shape());
          MatMap(da.data().data(), a.dim(0), a.dim(1)).noalias() =
              G * ConstMatMap(b.data().data(), b.dim(0), b.dim(1)).transpose();
          give(0, da);
        }
        if (wants(1)) {
          Tensor db(b.shape());
          MatMap(db.data().data(), b.dim(0), b.dim(1)).noalias() =
              ConstMatMap(a.data().data(), a.dim(0), a.dim(1)).transpose() * G;
          give(1, db);
        }
        break;
      }
      case OpKind::Add:
        if (wants(0)) give(0, g);
        if (wants(1)) give(1, g);
        break;
      case OpKind::Sub:
        if (wants(0)) give(0, g);
        if (wants(1)) {
          Tensor d = g;
          for (double& v : d.data()) v = -v;
          give(1, d);
        }
        break;
      case OpKind::Mul:
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants(k)) continue;
          Tensor d = g;
          auto other = in(1 - k).data();
          auto ds = d.data();
          for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= other[i];
          give(k, d);
        }
        break;
      case OpKind::AddBias:
        if (wants(0)) give(0, g);
        if (wants(1)) {
          Tensor d(in(1).shape());
          const std::size_t k = d.size();
          auto gs = g.data();
          auto ds = d.data();
          for (std::size_t i = 0; i < gs.size(); ++i) ds[i % k] += gs[i];
          give(1, d);
        }
        break;
      case OpKind::Affine:
        unary_grad([s = n.a](double, double) { return s; });
        break;
      case OpKind::Tanh:
        unary_grad([](double, double y) { return 1.0 - y * y; });
        break;
      case OpKind::Sigmoid:
        unary_grad([](double, double y) { return y * (1.0 - y); });
        break;
      case OpKind::LeakyRelu:
        unary_grad([s = n.a](double x, double) { return x > 0 ? 1.0 : s; });
        break;
      case OpKind::LeakySlope:
        break;
      case OpKind::Transpose:
        if (wants(0)) {
          const Tensor& x = in(0);
          Tensor d(x.shape());
          MatMap(d.data().data(), x.dim(0), x.dim(1)).noalias() =
              ConstMatMap(g.data().data(), x.dim(1), x.dim(0)).transpose();
          give(0, d);
        }
        break;
      case OpKind::Log:
        unary_grad([f = n.a](double x, double) { return x >= f ? 1.0 / x : 0.0; });
        break;
      case OpKind::Reshape:
        if (wants(0)) give(0, g.reshaped(in(0).shape()));
        break;
      case OpKind::Slice: {
        if (!wants(0)) break;
        const Tensor& x = in(0);
        AxisSplit s = split_axis(x.shape(), n.axis);
        Tensor d(x.shape());
        const std::size_t width = (n.end - n.begin) * s.inner;
        auto gs = g.data();
        auto ds = d.data();
        for (std::size_t o = 0; o < s.outer; ++o) {
          std::copy_n(gs.begin() + static_cast<std::ptrdiff_t>(o * width), width,
                      ds.begin() + static_cast<std::ptrdiff_t>((o * s.dim + n.begin) * s.inner));
        }
        give(0, d);
        break;
      }
      case OpKind::Concat: {
        AxisSplit total = split_axis(n.value.shape(), n.axis);
        auto gs = g.data();
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          AxisSplit s = split_axis(in(k).shape(), n.axis);
          if (wants(k)) {
            Tensor d(in(k).shape());
            auto ds = d.data();
            const std::size_t width = s.dim * s.inner;
            for (std::size_t o = 0; o < total.outer; ++o) {
              std::copy_n(gs.begin() + static_cast<std::ptrdiff_t>((o * total.dim + offset) * total.inner),
                          width, ds.begin() + static_cast<std::ptrdiff_t>(o * width));
            }
            give(k, d);
          }
          offset += s.dim;
        }
        break;
      }
      case OpKind::Sum:
      case OpKind::Mean:
        if (wants(0)) {
          double v = g.item();
          if (n.kind == OpKind::Mean) v /= static_cast<double>(in(0).size());
          give(0, Tensor(in(0).shape(), v));
        }
        break;
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (NodeId w : wrt) {
    if (w <= output && present[w]) {
      result.push_back(adj[w]);
    } else {
      result.emplace_back(nodes_[w].value.shape(), 0.0);
    }
  }
  return result;
}

std::map<std::string, Tensor> Graph::backward(NodeId output,
                                              const std::vector<std::string>& wrt_inputs) const {
  std::vector<NodeId> ids;
  ids.reserve(wrt_inputs.size());
  for (const auto& name : wrt_inputs) ids.push_back(input_id(name));
  auto grads = backward(output, ids);
  std::map<std::string, Tensor> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(wrt_inputs[i], std::move(grads[i]));
  return out;
}

}  // namespace predgan::ad

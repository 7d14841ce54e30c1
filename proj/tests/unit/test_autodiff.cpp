#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "fd_oracle.hpp"
#include "predgan/ad/adam.hpp"
#include "predgan/ad/checkpoint.hpp"
#include "predgan/ad/graph.hpp"
#include "predgan/util/error.hpp"

using namespace predgan;
using namespace predgan::ad;
using predgan::testing::central_differences;
using predgan::testing::max_relative_error;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Wraps `body` so that the output is sum(weights * body(inputs)), which gives
// every element of the body's output a distinct upstream adjoint.
struct Harness {
  Graph g;
  std::vector<NodeId> inputs;
  NodeId loss = 0;
};

// Checks the gradient with respect to every input of `h` against central
// differences of the forward pass.
void expect_gradients_match(Harness& h, const std::vector<Tensor>& values, double tol = 1e-5) {
  for (std::size_t k = 0; k < values.size(); ++k) h.g.set_input(h.inputs[k], values[k]);
  h.g.forward();
  auto grads = h.g.backward(h.loss, h.inputs);
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto f = [&](const std::vector<double>& x) {
      for (std::size_t j = 0; j < values.size(); ++j) {
        h.g.set_input(h.inputs[j], j == k ? Tensor(values[k].shape(), x) : values[j]);
      }
      h.g.forward();
      return h.g.value(h.loss).item();
    };
    auto fd = central_differences(f, values[k].values());
    EXPECT_LT(max_relative_error(grads[k].values(), fd), tol) << "input " << k;
  }
}

Harness wrap(std::function<NodeId(Graph&, std::vector<NodeId>&)> body, std::size_t n_inputs,
             const Shape& out_shape, std::mt19937_64& rng) {
  Harness h;
  for (std::size_t k = 0; k < n_inputs; ++k) h.inputs.push_back(h.g.input("x" + std::to_string(k)));
  NodeId out = body(h.g, h.inputs);
  NodeId w = h.g.constant(random_tensor(out_shape, rng));
  h.loss = h.g.sum(h.g.mul(out, w));
  return h;
}

}  // namespace

TEST(Forward, ElementwiseAdd) {
  Graph g;
  auto x = g.input("x");
  auto y = g.input("y");
  auto s = g.add(x, y);
  g.forward({{"x", Tensor::vector({1, 2})}, {"y", Tensor::vector({3, 4})}});
  EXPECT_EQ(g.value(s).values(), (std::vector<double>{4, 6}));
}

TEST(Forward, IdentityMatmul) {
  Graph g;
  auto i3 = g.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  auto v = g.input("v");
  auto out = g.matmul(i3, v);
  g.forward({{"v", Tensor::matrix(3, 1, {1, 2, 3})}});
  EXPECT_EQ(g.value(out).values(), (std::vector<double>{1, 2, 3}));
}

TEST(Forward, TanhOfZero) {
  Graph g;
  auto t = g.tanh(g.input("x"));
  g.forward({{"x", Tensor::scalar(0.0)}});
  EXPECT_EQ(g.value(t).item(), 0.0);
}

TEST(Forward, ShapeMismatchNamesTheNode) {
  Graph g;
  auto a = g.input("a");
  auto b = g.input("b");
  auto m = g.matmul(a, b);
  g.set_label(m, "layer1");
  try {
    g.forward({{"a", Tensor(Shape{2, 3})}, {"b", Tensor(Shape{2, 3})}});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
  }
}

TEST(Forward, UnboundInputFails) {
  Graph g;
  g.tanh(g.input("x"));
  EXPECT_THROW(g.forward(), ShapeError);
}

TEST(Forward, SliceAndConcatAlongColumns) {
  Graph g;
  auto x = g.input("x");
  auto left = g.slice(x, 1, 0, 1);
  auto right = g.slice(x, 1, 1, 3);
  std::vector<NodeId> parts{right, left};
  auto swapped = g.concat(parts, 1);
  g.forward({{"x", Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6})}});
  EXPECT_EQ(g.value(left).values(), (std::vector<double>{1, 4}));
  EXPECT_EQ(g.value(swapped).values(), (std::vector<double>{2, 3, 1, 5, 6, 4}));
  EXPECT_EQ(g.value(swapped).shape(), (Shape{2, 3}));
}

TEST(Backward, PowerRule) {
  Graph g;
  auto x = g.input("x");
  auto y = g.mul(x, x);
  auto s = g.sum(y);
  g.forward({{"x", Tensor::scalar(3.0)}});
  std::vector<NodeId> wrt{x};
  EXPECT_DOUBLE_EQ(g.backward(s, wrt)[0].item(), 6.0);
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  auto x = g.input("x");
  auto s = g.sum(x);
  g.forward({{"x", Tensor(Shape{2, 3, 4}, 0.7)}});
  std::vector<NodeId> wrt{x};
  auto grad = g.backward(s, wrt)[0];
  EXPECT_EQ(grad.shape(), (Shape{2, 3, 4}));
  for (double v : grad.data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, NonScalarOutputFails) {
  Graph g;
  auto x = g.input("x");
  auto y = g.tanh(x);
  g.forward({{"x", Tensor::vector({1, 2})}});
  std::vector<NodeId> wrt{x};
  EXPECT_THROW(g.backward(y, wrt), ShapeError);
}

TEST(Backward, UnrelatedInputGetsZeroGradient) {
  Graph g;
  auto x = g.input("x");
  auto y = g.input("y");
  auto s = g.sum(g.tanh(x));
  g.forward({{"x", Tensor::vector({0.5})}, {"y", Tensor::vector({1, 2})}});
  std::vector<NodeId> wrt{y};
  auto grad = g.backward(s, wrt)[0];
  EXPECT_EQ(grad.values(), (std::vector<double>{0, 0}));
}

TEST(Backward, SeededPullbackMatchesWeightedSum) {
  std::mt19937_64 rng(99);
  Graph g;
  auto x = g.input("x");
  auto w = g.input("w");
  auto y = g.tanh(g.matmul(x, w));
  auto seed_node = g.input("seed");
  auto s = g.sum(g.mul(y, seed_node));
  Tensor seed = random_tensor({2, 3}, rng);
  g.forward({{"x", random_tensor({2, 4}, rng)}, {"w", random_tensor({4, 3}, rng)}, {"seed", seed}});
  std::vector<NodeId> wrt{x, w};
  auto via_sum = g.backward(s, wrt);
  auto via_seed = g.backward(y, seed, wrt);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_LT(max_relative_error(via_seed[k].values(), via_sum[k].values(), 1e-14), 1e-13);
  }
  EXPECT_THROW(g.backward(y, Tensor::vector({1.0}), wrt), ShapeError);
}

// Every primitive, random inputs in [-2, 2], against central differences.
class PrimitiveGradient : public ::testing::Test {
 protected:
  std::mt19937_64 rng{20240611};
};

TEST_F(PrimitiveGradient, MatMul) {
  auto h = wrap([](Graph& g, auto& in) { return g.matmul(in[0], in[1]); }, 2, {3, 5}, rng);
  expect_gradients_match(h, {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng)});
}

TEST_F(PrimitiveGradient, AddSubMul) {
  for (int op = 0; op < 3; ++op) {
    auto h = wrap(
        [op](Graph& g, auto& in) {
          if (op == 0) return g.add(in[0], in[1]);
          if (op == 1) return g.sub(in[0], in[1]);
          return g.mul(in[0], in[1]);
        },
        2, {2, 3}, rng);
    expect_gradients_match(h, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
  }
}

TEST_F(PrimitiveGradient, AddBias) {
  auto h = wrap([](Graph& g, auto& in) { return g.add_bias(in[0], in[1]); }, 2, {4, 3}, rng);
  expect_gradients_match(h, {random_tensor({4, 3}, rng), random_tensor({3}, rng)});
}

TEST_F(PrimitiveGradient, Affine) {
  auto h = wrap([](Graph& g, auto& in) { return g.affine(in[0], -1.7, 0.3); }, 1, {5}, rng);
  expect_gradients_match(h, {random_tensor({5}, rng)});
}

TEST_F(PrimitiveGradient, Tanh) {
  auto h = wrap([](Graph& g, auto& in) { return g.tanh(in[0]); }, 1, {3, 3}, rng);
  expect_gradients_match(h, {random_tensor({3, 3}, rng)});
}

TEST_F(PrimitiveGradient, Sigmoid) {
  auto h = wrap([](Graph& g, auto& in) { return g.sigmoid(in[0]); }, 1, {3, 3}, rng);
  expect_gradients_match(h, {random_tensor({3, 3}, rng)});
}

TEST_F(PrimitiveGradient, LeakyRelu) {
  auto h = wrap([](Graph& g, auto& in) { return g.leaky_relu(in[0], 0.2); }, 1, {4, 4}, rng);
  expect_gradients_match(h, {random_tensor({4, 4}, rng)});
}

TEST_F(PrimitiveGradient, Log) {
  auto h = wrap([](Graph& g, auto& in) { return g.log(in[0]); }, 1, {6}, rng);
  expect_gradients_match(h, {random_tensor({6}, rng, 0.1, 2.0)});
}

TEST_F(PrimitiveGradient, ReshapeSliceConcat) {
  auto h = wrap(
      [](Graph& g, auto& in) {
        auto r = g.reshape(in[0], {3, 4});
        auto a = g.slice(r, 0, 1, 3);
        auto b = g.slice(in[1], 1, 0, 4);
        std::vector<NodeId> parts{a, b};
        return g.concat(parts, 0);
      },
      2, {4, 4}, rng);
  expect_gradients_match(h, {random_tensor({12}, rng), random_tensor({2, 5}, rng)});
}

TEST_F(PrimitiveGradient, SumAndMean) {
  auto h = wrap(
      [](Graph& g, auto& in) {
        std::vector<NodeId> parts{g.reshape(g.sum(in[0]), {1}), g.reshape(g.mean(in[0]), {1})};
        return g.concat(parts, 0);
      },
      1, {2}, rng);
  expect_gradients_match(h, {random_tensor({3, 2}, rng)});
}

TEST_F(PrimitiveGradient, Transpose) {
  auto h = wrap([](Graph& g, auto& in) { return g.matmul(g.transpose(in[0]), in[1]); }, 2, {4, 2},
                rng);
  expect_gradients_match(h, {random_tensor({3, 4}, rng), random_tensor({3, 2}, rng)});
}

TEST_F(PrimitiveGradient, LeakySlopeIsPiecewiseConstant) {
  Graph g;
  auto x = g.input("x");
  auto m = g.leaky_slope(x, 0.25);
  auto s = g.sum(g.mul(m, x));
  g.forward({{"x", Tensor::vector({-2.0, 0.0, 3.0})}});
  EXPECT_EQ(g.value(m).values(), (std::vector<double>{0.25, 0.25, 1.0}));
  std::vector<NodeId> wrt{x};
  // d/dx (slope(x) * x) = slope(x) away from the kink.
  EXPECT_EQ(g.backward(s, wrt)[0].values(), (std::vector<double>{0.25, 0.25, 1.0}));
}

// Second order: the squared norm of an input gradient, assembled from graph
// nodes, differentiated with respect to the weights.
TEST_F(PrimitiveGradient, InputGradientPenaltyThroughTwoLayers) {
  auto h = wrap(
      [](Graph& g, auto& in) {
        auto pre = g.matmul(in[0], in[1]);
        auto act = g.leaky_relu(pre, 0.2);
        auto logit = g.matmul(act, in[2]);
        (void)logit;
        auto ones = g.affine(logit, 0.0, 1.0);
        auto gx = g.matmul(g.mul(g.matmul(ones, g.transpose(in[2])), g.leaky_slope(pre, 0.2)),
                           g.transpose(in[1]));
        return g.reshape(g.sum(g.mul(gx, gx)), {1});
      },
      3, {1}, rng);
  expect_gradients_match(h, {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng),
                             random_tensor({5, 1}, rng)});
}

TEST_F(PrimitiveGradient, LogBelowFloorHasZeroAdjoint) {
  Graph g;
  auto x = g.input("x");
  auto s = g.sum(g.log(x, 1e-12));
  g.forward({{"x", Tensor::vector({0.0, -1.0, 2.0})}});
  EXPECT_NEAR(g.value(s).item(), 2.0 * std::log(1e-12) + std::log(2.0), 1e-12);
  std::vector<NodeId> wrt{x};
  EXPECT_EQ(g.backward(s, wrt)[0].values(), (std::vector<double>{0.0, 0.0, 0.5}));
}

// Composed graphs: adjoint chains multiply correctly.
TEST_F(PrimitiveGradient, RandomThreeLayerNetwork) {
  auto h = wrap(
      [](Graph& g, auto& in) {
        auto h1 = g.tanh(g.add_bias(g.matmul(in[0], in[1]), in[2]));
        auto h2 = g.leaky_relu(g.add_bias(g.matmul(h1, in[3]), in[4]), 0.2);
        return g.sigmoid(g.add_bias(g.matmul(h2, in[5]), in[6]));
      },
      7, {4, 2}, rng);
  expect_gradients_match(h, {random_tensor({4, 5}, rng), random_tensor({5, 7}, rng),
                             random_tensor({7}, rng), random_tensor({7, 6}, rng),
                             random_tensor({6}, rng), random_tensor({6, 2}, rng),
                             random_tensor({2}, rng)});
}

TEST_F(PrimitiveGradient, DiscriminatorStyleLoss) {
  // -mean(log(sigmoid(x w))) - mean(log(1 - sigmoid(y w)))
  auto h = wrap(
      [](Graph& g, auto& in) {
        auto real = g.sigmoid(g.matmul(in[0], in[2]));
        auto fake = g.sigmoid(g.matmul(in[1], in[2]));
        auto lr = g.mean(g.log(real));
        auto lf = g.mean(g.log(g.affine(fake, -1.0, 1.0)));
        return g.reshape(g.affine(g.add(lr, lf), -1.0), {1});
      },
      3, {1}, rng);
  expect_gradients_match(h, {random_tensor({5, 3}, rng), random_tensor({5, 3}, rng),
                             random_tensor({3, 1}, rng)});
}

TEST_F(PrimitiveGradient, SharedSubexpression) {
  // x feeds three branches; adjoints must accumulate.
  auto h = wrap(
      [](Graph& g, auto& in) {
        auto a = g.tanh(in[0]);
        auto b = g.mul(a, in[0]);
        return g.add(g.sub(b, a), g.mul(in[0], in[0]));
      },
      1, {3}, rng);
  expect_gradients_match(h, {random_tensor({3}, rng)});
}

TEST(Determinism, RepeatedPassesAreBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(7);
    auto h = wrap(
        [](Graph& g, auto& in) { return g.tanh(g.matmul(in[0], in[1])); }, 2, {8, 8}, rng);
    h.g.set_input(h.inputs[0], random_tensor({8, 16}, rng));
    h.g.set_input(h.inputs[1], random_tensor({16, 8}, rng));
    h.g.forward();
    auto grads = h.g.backward(h.loss, h.inputs);
    return std::make_pair(h.g.value(h.loss).item(), grads);
  };
  auto a = run();
  auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::vector({1.0, -2.0});
  std::vector<Tensor*> params{&p};
  auto state = AdamState::zeros_like(std::vector<const Tensor*>{&p});
  std::vector<Tensor> grads{Tensor::vector({0.0, 0.0})};
  adam_step(params, grads, state, {});
  EXPECT_EQ(p.values(), (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ConstantGradientMovesAgainstSign) {
  Tensor p = Tensor::scalar(0.0);
  std::vector<Tensor*> params{&p};
  auto state = AdamState::zeros_like(std::vector<const Tensor*>{&p});
  std::vector<Tensor> grads{Tensor::scalar(0.3)};
  double prev = p.item();
  for (int i = 0; i < 100; ++i) {
    adam_step(params, grads, state, {});
    EXPECT_LT(p.item(), prev);
    prev = p.item();
  }
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor p = Tensor::vector({1.0, 2.0});
  std::vector<Tensor*> params{&p};
  auto state = AdamState::zeros_like(std::vector<const Tensor*>{&p});
  std::vector<Tensor> grads{Tensor::vector({1.0})};
  EXPECT_THROW(adam_step(params, grads, state, {}), ShapeError);
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  Tensor x = Tensor::vector({1.5, -0.7, 0.3});
  std::vector<Tensor*> params{&x};
  auto state = AdamState::zeros_like(std::vector<const Tensor*>{&x});
  AdamConfig cfg{.lr = 1e-2, .beta1 = 0.9, .beta2 = 0.999};
  for (int i = 0; i < 5000; ++i) {
    Tensor g = x;
    for (double& v : g.data()) v *= 2.0;
    std::vector<Tensor> grads{g};
    adam_step(params, grads, state, cfg);
  }
  double norm = 0;
  for (double v : x.data()) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  Checkpoint ck;
  ck.tensors["g.w0"] = random_tensor({7, 5}, rng);
  ck.tensors["g.b0"] = random_tensor({5}, rng);
  ck.tensors["scalar"] = Tensor::scalar(std::nextafter(1.0, 2.0));
  ck.metadata["config_digest"] = "abc123";
  auto path = std::filesystem::temp_directory_path() / "predgan_ckpt_test.bin";
  ck.save(path);
  auto back = Checkpoint::load(path);
  EXPECT_EQ(back.tensors, ck.tensors);
  EXPECT_EQ(back.metadata, ck.metadata);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  auto path = std::filesystem::temp_directory_path() / "predgan_ckpt_garbage.bin";
  {
    std::ofstream os(path);
    os << "not a checkpoint";
  }
  EXPECT_THROW(Checkpoint::load(path), IoError);
  std::filesystem::remove(path);
}

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "seqadv/core/adam.hpp"
#include "seqadv/core/checkpoint.hpp"
#include "seqadv/core/grad_check.hpp"
#include "seqadv/core/ops.hpp"
#include "seqadv/core/rng.hpp"

using namespace seqadv;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Weighted sum so every output coordinate gets a distinct upstream gradient.
NodeId weighted_sum(Graph& g, NodeId y, std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdef);
  Tensor w = random_tensor(rng, g.value(y).shape());
  return ops::sum(g, ops::mul(g, y, g.constant(std::move(w))));
}

}  // namespace

TEST(Primitives, SoftmaxOfEqualLogitsIsUniform) {
  Graph g;
  NodeId y = ops::softmax(g, g.constant(Tensor(Shape{3}, 0.0)));
  for (double v : g.value(y).data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Primitives, SigmoidAtZero) {
  Graph g;
  EXPECT_EQ(g.value(ops::sigmoid(g, g.constant(Tensor::scalar(0.0))))[0], 0.5);
}

TEST(Primitives, IdentityMatmul) {
  Rng rng(3);
  Graph g;
  Tensor eye = Tensor::matrix(3, 3);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Tensor a = random_tensor(rng, {3, 4});
  NodeId y = ops::matmul(g, g.constant(eye), g.constant(a));
  EXPECT_EQ(g.value(y), a);
}

TEST(Primitives, ShapeMismatchNamesOperationAndShapes) {
  Graph g;
  NodeId a = g.constant(Tensor::matrix(2, 3));
  NodeId b = g.constant(Tensor::matrix(3, 2));
  try {
    ops::add(g, a, b);
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[3x2]"), std::string::npos);
  }
  EXPECT_THROW(ops::matmul(g, a, a), std::invalid_argument);
}

TEST(Primitives, LogOfNonPositiveIsError) {
  Graph g;
  EXPECT_THROW(ops::log(g, g.constant(Tensor(Shape{2}, std::vector<double>{1.0, 0.0}))),
               std::domain_error);
  EXPECT_THROW(ops::log(g, g.constant(Tensor::scalar(-2.0))), std::domain_error);
}

TEST(Primitives, SoftmaxRowsSumToOneAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, {4, 7}, -20.0, 20.0);
    const double c = rng.uniform(-50, 50);
    Graph g;
    const Tensor y = g.value(ops::softmax(g, g.constant(x)));
    const Tensor ys = g.value(ops::softmax(g, ops::add_scalar(g, g.constant(x), c)));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (double v : y.row(r)) {
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ys[i], 1e-12);
  }
}

TEST(Backward, SumOfSquares) {
  ParameterStore p;
  p.add("x", Tensor(Shape{3}, std::vector<double>{1, 2, 3}));
  Graph g;
  NodeId x = g.parameter(p, "x");
  g.backward(ops::sum(g, ops::mul(g, x, x)));
  EXPECT_EQ(g.grad(x), Tensor(Shape{3}, std::vector<double>({2, 4, 6})));
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  ParameterStore p;
  p.add("w", Tensor(Shape{2}, 0.7));
  Graph g;
  g.parameter(p, "w");
  g.backward(g.constant(Tensor::scalar(4.0)));
  const Gradients grads = g.gradients_for(p);
  for (double v : grads.at("w").data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LogSigmoidMatchesFiniteDifference) {
  // Independent oracle: central difference of the closed form.
  auto f = [](double w) { return std::log(1.0 / (1.0 + std::exp(-w))); };
  const double h = 1e-6;
  const double oracle = (f(h) - f(-h)) / (2 * h);
  EXPECT_NEAR(oracle, 0.5, 1e-9);

  ParameterStore p;
  p.add("w", Tensor::scalar(0.0));
  Graph g;
  NodeId w = g.parameter(p, "w");
  g.backward(ops::log(g, ops::sigmoid(g, w)));
  EXPECT_NEAR(g.grad(w)[0], oracle, 1e-9);
}

TEST(Backward, NonScalarLossIsError) {
  Graph g;
  NodeId x = g.parameter("x", Tensor(Shape{2}, 1.0));
  EXPECT_THROW(g.backward(x), std::invalid_argument);
}

TEST(Backward, ReachableNodesGetMatchingGradientShapes) {
  Rng rng(1);
  ParameterStore p;
  p.add("a", random_tensor(rng, {2, 3}));
  p.add("b", random_tensor(rng, {3, 4}));
  Graph g;
  NodeId a = g.parameter(p, "a");
  NodeId b = g.parameter(p, "b");
  NodeId y = ops::tanh(g, ops::matmul(g, a, b));
  NodeId loss = ops::mean(g, y);
  g.backward(loss);
  for (NodeId n : {a, b, y}) EXPECT_EQ(g.grad(n).shape(), g.value(n).shape());
}

// Every primitive against central differences on random inputs.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  const int op = GetParam();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed * 131 + op);
    const std::size_t R = rng.between(1, 3), C = rng.between(1, 4), K = rng.between(1, 3);
    ParameterStore p;
    p.add("a", random_tensor(rng, {R, C}));
    p.add("b", random_tensor(rng, {R, C}));
    p.add("m", random_tensor(rng, {C, K}));
    p.add("row", random_tensor(rng, {1, C}));
    p.add("pos", random_tensor(rng, {R, C}, 0.5, 2.0));
    p.add("s", random_tensor(rng, {R, 1}));
    std::vector<std::uint8_t> rows(R), keep(R * C, 1);
    for (auto& v : rows) v = rng.index(2);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 1; c < C; ++c) keep[r * C + c] = rng.index(3) != 0;

    LossBuilder f = [&](Graph& g, const ParameterStore& ps) {
      NodeId a = g.parameter(ps, "a"), b = g.parameter(ps, "b");
      NodeId y{};
      switch (op) {
        case 0: y = ops::matmul(g, a, g.parameter(ps, "m")); break;
        case 1: y = ops::add(g, a, b); break;
        case 2: y = ops::sub(g, a, b); break;
        case 3: y = ops::mul(g, a, b); break;
        case 4: y = ops::tanh(g, a); break;
        case 5: y = ops::sigmoid(g, a); break;
        case 6: y = ops::log(g, g.parameter(ps, "pos")); break;
        case 7: y = ops::exp(g, a); break;
        case 8: y = ops::softmax(g, a); break;
        case 9: y = ops::concat_cols(g, {a, b, a}); break;
        case 10: y = ops::slice_cols(g, a, C / 2, C); break;
        case 11: y = ops::mean(g, ops::mul(g, a, b)); break;
        case 12: y = ops::add_row(g, a, g.parameter(ps, "row")); break;
        case 13: y = ops::scale(g, ops::add_scalar(g, a, 0.3), -1.7); break;
        case 14: y = ops::select_rows(g, rows, a, b); break;
        case 15: y = ops::gather_rows(g, {a, b}, std::vector<std::size_t>(rows.begin(), rows.end())); break;
        case 16: y = ops::scale_rows(g, a, g.parameter(ps, "s")); break;
        case 17: y = ops::masked_softmax(g, a, keep); break;
        case 18: y = ops::clamp(g, a, -0.5, 0.5); break;
      }
      return weighted_sum(g, y, seed);
    };
    if (op == 18) {
      // Keep coordinates away from the kinks.
      for (double& v : p.at("a").data())
        if (std::abs(std::abs(v) - 0.5) < 1e-3) v += 0.01;
    }
    GradCheckReport rep = grad_check(f, p);
    ASSERT_TRUE(rep.passed) << "op " << op << " seed " << seed << " max error " << rep.max_error;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, PrimitiveGradients, ::testing::Range(0, 19));

TEST(GradCheck, QuadraticFormPassesTightly) {
  Rng rng(9);
  ParameterStore p;
  p.add("x", random_tensor(rng, {1, 4}));
  Tensor q = random_tensor(rng, {4, 4});
  LossBuilder f = [&](Graph& g, const ParameterStore& ps) {
    NodeId x = g.parameter(ps, "x");
    return ops::sum(g, ops::mul(g, ops::matmul(g, x, g.constant(q)), x));
  };
  GradCheckReport rep = grad_check(f, p);
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.max_error, 1e-7);
}

TEST(GradCheck, WrongBackwardRuleFails) {
  ParameterStore p;
  p.add("x", Tensor(Shape{3}, std::vector<double>{0.3, -1.2, 2.0}));
  LossBuilder f = [](Graph& g, const ParameterStore& ps) {
    NodeId x = g.parameter(ps, "x");
    Tensor sq = g.value(x);
    for (double& v : sq.data()) v *= v;
    // d(x^2)/dx is 2x; this rule claims x.
    NodeId y = g.record(OpKind::Custom, sq, {x}, [x](Graph& gr, NodeId, const Tensor& gy) {
      Tensor& gx = gr.grad_slot(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * gr.value(x)[i];
    });
    return ops::sum(g, y);
  };
  GradCheckReport rep = grad_check(f, p);
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.failures.size(), 3u);
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputsAndGradients) {
  auto run = [] {
    Rng rng(77);
    ParameterStore p;
    p.add("a", random_tensor(rng, {3, 5}));
    p.add("m", random_tensor(rng, {5, 5}));
    Graph g;
    NodeId y = ops::softmax(g, ops::tanh(g, ops::matmul(g, g.parameter(p, "a"), g.parameter(p, "m"))));
    NodeId loss = ops::sum(g, ops::log(g, y));
    g.backward(loss);
    return std::pair{g.value(loss), g.gradients_for(p)};
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  EXPECT_EQ(std::memcmp(l1.data().data(), l2.data().data(), sizeof(double)), 0);
  EXPECT_EQ(g1, g2);
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  ParameterStore p;
  p.add("w", Tensor(Shape{3}, std::vector<double>{1, -2, 3}));
  const ParameterStore before = p;
  Adam adam({.lr = 0.1});
  Gradients g{{"w", Tensor(Shape{3}, 0.0)}};
  adam.step(p, g);
  EXPECT_EQ(p, before);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Hand-evaluated at t = 1: m = 0.1, v = 0.001, mhat = 1, vhat = 1,
  // update = 0.1 * 1 / (1 + 1e-8).
  ParameterStore p;
  p.add("w", Tensor::scalar(2.0));
  Adam adam({.lr = 0.1});
  adam.step(p, {{"w", Tensor::scalar(1.0)}});
  const double expected = 2.0 - 0.1 / (1.0 + 1e-8);
  EXPECT_NEAR(p.at("w")[0], expected, 1e-15);
  EXPECT_NEAR(2.0 - p.at("w")[0], 0.1, 1e-8);
}

TEST(Adam, MissingGradientIsError) {
  ParameterStore p;
  p.add("w", Tensor::scalar(1.0));
  p.add("v", Tensor::scalar(1.0));
  Adam adam;
  EXPECT_THROW(adam.step(p, {{"w", Tensor::scalar(1.0)}}), std::invalid_argument);
}

TEST(Adam, RepeatedRunsAreBitIdentical) {
  auto run = [] {
    Rng rng(5);
    ParameterStore p;
    p.add("w", random_tensor(rng, {2, 2}));
    Adam adam({.lr = 0.01});
    for (int s = 0; s < 2; ++s) adam.step(p, {{"w", random_tensor(rng, {2, 2})}});
    return p;
  };
  ParameterStore a = run(), b = run();
  EXPECT_EQ(std::memcmp(a.at("w").data().data(), b.at("w").data().data(), 4 * sizeof(double)), 0);
}

TEST(Checkpoint, HeaderLayoutAndLittleEndianPayload) {
  ParameterStore p;
  p.add("b", Tensor(Shape{2}, std::vector<double>{1.0, -2.0}));
  p.add("a", Tensor::matrix(1, 1, std::vector<double>{0.5}));
  const std::string bytes = encode_checkpoint(p);
  const std::string header =
      "seqadv-checkpoint 1\ntensors 2\na 1,1 0\nb 2 8\npayload\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  ASSERT_EQ(bytes.size(), header.size() + 24);
  // 0.5 == 0x3FE0000000000000, little-endian: last byte 0x3F.
  const auto* payload = reinterpret_cast<const unsigned char*>(bytes.data() + header.size());
  EXPECT_EQ(payload[7], 0x3F);
  EXPECT_EQ(payload[6], 0xE0);
  EXPECT_EQ(payload[0], 0x00);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Rng rng(11);
  ParameterStore p;
  p.add("enc.Wx", random_tensor(rng, {5, 12}, -1e3, 1e3));
  p.add("tiny", Tensor(Shape{4}, std::vector<double>{-0.0, std::numeric_limits<double>::denorm_min(),
                                                     1e-300, -7.25}));
  const auto path = std::filesystem::temp_directory_path() / "seqadv_ckpt_test.bin";
  save_checkpoint(path, p);
  ParameterStore q = load_checkpoint(path);
  ASSERT_EQ(encode_checkpoint(q), encode_checkpoint(p));
  EXPECT_TRUE(std::signbit(q.at("tiny")[0]));
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedPayloadIsRejected) {
  ParameterStore p;
  p.add("w", Tensor(Shape{3}, 1.0));
  std::string bytes = encode_checkpoint(p);
  bytes.resize(bytes.size() - 1);
  EXPECT_THROW(decode_checkpoint(bytes), std::runtime_error);
}

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "consensus/ops.hpp"
#include "test_util.hpp"

using namespace consensus;
using consensus::testing::expect_gradients_match;
using consensus::testing::expect_near;
using consensus::testing::random_tensor;

namespace {

Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (double& v : t.data()) v += v >= 0 ? 0.1 : -0.1;  // keep relu kinks out of the stencil
  return t;
}

}  // namespace

TEST(Tape, GradOfUnreachedLeafIsZero) {
  Tape tape;
  Var a = tape.leaf(Tensor::ones({2}), true);
  Var b = tape.leaf(Tensor::ones({2}), true);
  tape.backward(ops::sum(a));
  EXPECT_EQ(tape.grad(b), Tensor::zeros({2}));
  EXPECT_EQ(tape.grad(a), Tensor::ones({2}));
}

TEST(Tape, BackwardRequiresScalarLoss) {
  Tape tape;
  Var a = tape.leaf(Tensor::ones({2}), true);
  EXPECT_THROW(tape.backward(a), ShapeError);
}

TEST(Tape, BackwardIsSingleUse) {
  Tape tape;
  Var a = tape.leaf(Tensor::ones({2}), true);
  Var loss = ops::sum(a);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);
}

TEST(Tape, GradOfConstantThrows) {
  Tape tape;
  Var a = tape.leaf(Tensor::ones({2}), true);
  Var c = tape.constant(Tensor::ones({2}));
  tape.backward(ops::sum(ops::mul(a, c)));
  EXPECT_THROW(tape.grad(c), std::logic_error);
}

TEST(Tape, FanOutAccumulates) {
  Tape tape;
  Var a = tape.leaf(Tensor({1}, std::vector<double>{3.0}), true);
  tape.backward(ops::sum(ops::mul(a, a)));
  EXPECT_DOUBLE_EQ(tape.grad(a)[0], 6.0);
}

TEST(Tape, CheckedModeRejectsNonFinite) {
  Tape checked(TapeOptions{.checked = true});
  Var a = checked.leaf(Tensor({1}, std::vector<double>{1e308}), true);
  EXPECT_THROW(ops::scale(a, 10.0), NumericError);

  Tape unchecked(TapeOptions{.checked = false});
  Var b = unchecked.leaf(Tensor({1}, std::vector<double>{1e308}), true);
  EXPECT_TRUE(std::isinf(ops::scale(b, 10.0).value()[0]));
}

TEST(Tape, EvaluationModeRecordsNothing) {
  Tape tape(TapeOptions{.checked = true, .record = false});
  Var a = tape.leaf(Tensor::ones({3}), true);
  ops::sum(ops::tanh(a));
  EXPECT_EQ(tape.node_count(), 0u);
}

TEST(Ops, ShapeMismatchThrows) {
  Tape tape;
  Var a = tape.constant(Tensor::ones({2, 3}));
  Var b = tape.constant(Tensor::ones({3, 2}));
  EXPECT_THROW(ops::add(a, b), ShapeError);
  EXPECT_THROW(ops::matmul(a, a), ShapeError);
  EXPECT_THROW(ops::reshape(a, {5}), ShapeError);
  EXPECT_THROW(ops::unfold(tape.constant(Tensor::ones({1, 3, 3})), 4), std::invalid_argument);
}

TEST(OpsGradients, Elementwise) {
  std::mt19937_64 rng(11);
  const Tensor a = away_from_zero({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::add(v[0], v[1]); }, {a, b}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::sub(v[0], v[1]); }, {a, b}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::divide(v[0], -3.0); }, {a}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::mul(v[0], v[1]); }, {a, b}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::scale(v[0], -1.7); }, {a}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::sigmoid(v[0]); }, {a}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::tanh(v[0]); }, {a}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::relu(v[0]); }, {a}, rng);
}

TEST(OpsGradients, Broadcasts) {
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({3, 4, 5}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::add_channel_bias(v[0], v[1]); },
                         {x, random_tensor({3}, rng)}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::mul_trailing(v[0], v[1]); },
                         {x, random_tensor({5}, rng)}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::mul_trailing(v[0], v[1]); },
                         {x, random_tensor({4, 5}, rng)}, rng);
}

TEST(OpsGradients, Shaping) {
  std::mt19937_64 rng(13);
  const Tensor x = random_tensor({3, 4, 5}, rng), y = random_tensor({3, 2, 5}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::reshape(v[0], {12, 5}); }, {x}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::transpose(ops::reshape(v[0], {12, 5})); }, {x},
                         rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::concat({v[0], v[1], v[0]}, 1); }, {x, y}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::narrow(v[0], 2, 1, 3); }, {x}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::select(v[0], 1, 2); }, {x}, rng);
  expect_gradients_match(
      [](const std::vector<Var>& v) { return ops::stack({ops::select(v[0], 2, 0), ops::select(v[0], 2, 4)}, 1); },
      {x}, rng);
}

TEST(OpsGradients, Reductions) {
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor({3, 4, 5}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::sum(v[0]); }, {x}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::mean(v[0]); }, {x}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::sum_last_axis(v[0]); }, {x}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::matmul(v[0], v[1]); },
                         {random_tensor({3, 4}, rng), random_tensor({4, 6}, rng)}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::softmax_rows(v[0]); },
                         {random_tensor({3, 6}, rng, 3.0)}, rng);
}

TEST(OpsGradients, ConvolutionAndWindows) {
  std::mt19937_64 rng(15);
  const Tensor x = random_tensor({3, 5, 6}, rng);
  for (std::size_t stride : {1, 2}) {
    for (std::size_t dilation : {1, 2}) {
      expect_gradients_match(
          [&](const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], v[2], {stride, dilation}); },
          {x, random_tensor({2, 3, 3, 3}, rng), random_tensor({2}, rng)}, rng);
    }
  }
  expect_gradients_match([](const std::vector<Var>& v) { return ops::conv2d(v[0], v[1], Var{}); },
                         {x, random_tensor({4, 3, 1, 1}, rng)}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::unfold(v[0], 3); }, {x}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::upsample_nearest(v[0], 4); }, {x}, rng);
  expect_gradients_match([](const std::vector<Var>& v) { return ops::upsample_bilinear(v[0], 4); }, {x}, rng);
}

// reshape is a bijection on the flat data: reshaping back is the identity
// and the flat order never changes.
TEST(OpsProperties, ReshapeBijection) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({2, 3, 4}, rng);
    Tape tape;
    Var y = ops::reshape(ops::reshape(tape.constant(x), {6, 4}), {2, 3, 4});
    EXPECT_EQ(y.value(), x);
    const Tensor flat = ops::reshape(tape.constant(x), {24}).value();
    EXPECT_TRUE(std::ranges::equal(flat.data(), x.data()));
  }
}

TEST(OpsProperties, ConvIsLinearInInput) {
  std::mt19937_64 rng(17);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_tensor({2, 6, 5}, rng), b = random_tensor({2, 6, 5}, rng);
    const double alpha = 0.3 + trial, beta = -1.1;
    Tape tape;
    Var wv = tape.constant(w);
    Var lhs = ops::conv2d(ops::add(ops::scale(tape.constant(a), alpha), ops::scale(tape.constant(b), beta)), wv, Var{});
    Var rhs = ops::add(ops::scale(ops::conv2d(tape.constant(a), wv, Var{}), alpha),
                       ops::scale(ops::conv2d(tape.constant(b), wv, Var{}), beta));
    expect_near(lhs.value(), rhs.value(), 1e-12);
  }
}

TEST(OpsProperties, UnfoldOfDeltaPicksNeighbours) {
  Tensor x = Tensor::zeros({1, 3, 3});
  x.at(0, 1, 1) = 1.0;
  Tape tape;
  const Tensor u = ops::unfold(tape.constant(x), 3).value();
  // The centre pixel appears at offset (+1,+1) from (0,0), i.e. slot (1+1)*3 + (1+1).
  EXPECT_EQ(u[(0 * 9 + 0) * 9 + 8], 1.0);
  EXPECT_EQ(u[(0 * 9 + 4) * 9 + 4], 1.0);
  EXPECT_EQ(u[(0 * 9 + 8) * 9 + 0], 1.0);
  double total = 0;
  for (double v : u.data()) total += v;
  EXPECT_EQ(total, 9.0);
}

TEST(OpsProperties, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(18);
  Tape tape;
  const Tensor s = ops::softmax_rows(tape.constant(random_tensor({4, 7}, rng, 30.0))).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < 7; ++j) row += s.at(i, j);
    EXPECT_NEAR(row, 1.0, 1e-12);
  }
}

TEST(OpsProperties, BilinearUpsampleOfConstantIsConstant) {
  Tape tape;
  const Tensor y = ops::upsample_bilinear(tape.constant(Tensor({2, 3, 3}, 0.25)), 4).value();
  expect_near(y, Tensor({2, 12, 12}, 0.25), 1e-15);
}

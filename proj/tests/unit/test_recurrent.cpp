#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "consensus/ops.hpp"
#include "consensus/recurrent.hpp"
#include "test_util.hpp"

using namespace consensus;
using consensus::testing::expect_gradients_match;
using consensus::testing::expect_near;
using consensus::testing::random_tensor;

namespace {

struct CellTensors {
  Tensor w, b;
};

CellTensors random_cell(std::size_t c, std::size_t d, std::mt19937_64& rng, double bound = 1.0) {
  return {random_tensor({4 * d, c + d}, rng, bound), random_tensor({4 * d}, rng, bound)};
}

BiLstmParams constant_bilstm(Tape& tape, const CellTensors& f, const CellTensors& b) {
  return {{tape.constant(f.w), tape.constant(f.b)}, {tape.constant(b.w), tape.constant(b.b)}};
}

Tensor transpose_hw(const Tensor& x) {
  Tensor out({x.dim(0), x.dim(2), x.dim(1)});
  for (std::size_t c = 0; c < x.dim(0); ++c) {
    for (std::size_t i = 0; i < x.dim(1); ++i) {
      for (std::size_t j = 0; j < x.dim(2); ++j) out.at(c, j, i) = x.at(c, i, j);
    }
  }
  return out;
}

}  // namespace

TEST(Lstm, StepMatchesScalarRecurrence) {
  std::mt19937_64 rng(21);
  for (bool prev : {false, true}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t c = 1 + trial % 4, d = 1 + trial % 3, lanes = 1 + trial % 5;
      const auto cell = random_cell(c, d, rng);
      const Tensor h = random_tensor({d, lanes}, rng), cs = random_tensor({d, lanes}, rng, 2.0);
      const Tensor x = random_tensor({c, lanes}, rng);
      Tape tape;
      const SweepState s = lstm_step({tape.constant(cell.w), tape.constant(cell.b)},
                                     {tape.constant(h), tape.constant(cs)}, tape.constant(x), {prev});
      const auto ref = oracle::naive_lstm_step(cell.w, cell.b, h, cs, x, prev);
      expect_near(s.h.value(), ref.h, 1e-12);
      expect_near(s.c.value(), ref.c, 1e-12);
    }
  }
}

TEST(Lstm, HiddenStateBoundedByOne) {
  std::mt19937_64 rng(22);
  const auto cell = random_cell(3, 4, rng, 5.0);
  Tape tape;
  SweepState s = zero_state(tape, 4, 6);
  for (int t = 0; t < 30; ++t) {
    s = lstm_step({tape.constant(cell.w), tape.constant(cell.b)}, s, tape.constant(random_tensor({3, 6}, rng, 10.0)));
    for (double v : s.h.value().data()) EXPECT_LT(std::abs(v), 1.0);
  }
}

// Known single step: zero weights and state, bias sets every gate.
TEST(Lstm, HandComputedStep) {
  const std::size_t d = 1;
  Tensor w = Tensor::zeros({4, 2});
  Tensor b({4}, std::vector<double>{0.0, 0.0, 0.0, 0.5});  // i, f, o, g pre-activations
  Tape tape;
  const SweepState s = lstm_step({tape.constant(w), tape.constant(b)}, zero_state(tape, d, 1),
                                 tape.constant(Tensor::ones({1, 1})));
  const double c = 0.5 * std::tanh(0.5);
  EXPECT_NEAR(s.c.value()[0], c, 1e-15);
  EXPECT_NEAR(s.h.value()[0], 0.5 * std::tanh(c), 1e-15);
}

TEST(Lstm, PrintedVariantChangesOutputs) {
  std::mt19937_64 rng(23);
  const auto cell = random_cell(2, 3, rng);
  const Tensor x = random_tensor({2, 4}, rng);
  Tape tape;
  const LstmCellParams p{tape.constant(cell.w), tape.constant(cell.b)};
  const SweepState standard = lstm_step(p, zero_state(tape, 3, 4), tape.constant(x), {false});
  const SweepState printed = lstm_step(p, zero_state(tape, 3, 4), tape.constant(x), {true});
  // From a zero cell state the printed form emits tanh(0) = 0.
  EXPECT_GT(max_abs_diff(standard.h.value(), printed.h.value()), 1e-3);
  EXPECT_EQ(printed.h.value(), Tensor::zeros({3, 4}));
}

TEST(Lstm, LanePermutationEquivariance) {
  std::mt19937_64 rng(24);
  const auto cell = random_cell(3, 2, rng);
  const std::size_t lanes = 5;
  const Tensor h = random_tensor({2, lanes}, rng), c = random_tensor({2, lanes}, rng), x = random_tensor({3, lanes}, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  auto permute = [&](const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t r = 0; r < t.dim(0); ++r) {
      for (std::size_t l = 0; l < lanes; ++l) out.at(r, l) = t.at(r, perm[l]);
    }
    return out;
  };
  Tape tape;
  const LstmCellParams p{tape.constant(cell.w), tape.constant(cell.b)};
  const SweepState a = lstm_step(p, {tape.constant(h), tape.constant(c)}, tape.constant(x));
  const SweepState b = lstm_step(p, {tape.constant(permute(h)), tape.constant(permute(c))}, tape.constant(permute(x)));
  expect_near(b.h.value(), permute(a.h.value()), 1e-15);
  expect_near(b.c.value(), permute(a.c.value()), 1e-15);
}

TEST(BiLstm, SweepsMatchOracle) {
  std::mt19937_64 rng(25);
  for (bool prev : {false, true}) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t c = 1 + trial % 3, d = 1 + trial % 2, h = 1 + trial % 5, w = 2 + trial % 3;
      const auto f = random_cell(c, d, rng), b = random_cell(c, d, rng);
      const Tensor x = random_tensor({c, h, w}, rng);
      Tape tape;
      const BiLstmParams p = constant_bilstm(tape, f, b);
      expect_near(bilstm_vertical(p, tape.constant(x), {prev}).value(),
                  oracle::naive_bilstm(f.w, f.b, b.w, b.b, x, 1, prev), 1e-12);
      expect_near(bilstm_horizontal(p, tape.constant(x), {prev}).value(),
                  oracle::naive_bilstm(f.w, f.b, b.w, b.b, x, 2, prev), 1e-12);
    }
  }
}

TEST(BiLstm, SingleRowGivesIdenticalHalves) {
  std::mt19937_64 rng(26);
  const auto cell = random_cell(2, 3, rng);
  Tape tape;
  const Tensor y = bilstm_vertical(constant_bilstm(tape, cell, cell), tape.constant(random_tensor({2, 1, 5}, rng))).value();
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(y.at(k, 0, j), y.at(k + 3, 0, j));
  }
}

TEST(BiLstm, HorizontalIsTransposedVertical) {
  std::mt19937_64 rng(27);
  const auto f = random_cell(2, 2, rng), b = random_cell(2, 2, rng);
  const Tensor x = random_tensor({2, 3, 5}, rng);
  Tape tape;
  const BiLstmParams p = constant_bilstm(tape, f, b);
  const Tensor horizontal = bilstm_horizontal(p, tape.constant(x)).value();
  const Tensor vertical = bilstm_vertical(p, tape.constant(transpose_hw(x))).value();
  expect_near(horizontal, transpose_hw(vertical), 1e-15);
}

TEST(BiLstm, GradientsThroughThreeStepSweep) {
  std::mt19937_64 rng(28);
  for (bool prev : {false, true}) {
    // vertical: 2 -> 2x2 channels, horizontal: 4 -> 2x2 channels
    expect_gradients_match(
        [prev](const std::vector<Var>& v) {
          const BiLstmParams vert{{v[1], v[2]}, {v[3], v[4]}};
          const BiLstmParams horiz{{v[5], v[6]}, {v[7], v[8]}};
          return bilstm_horizontal(horiz, bilstm_vertical(vert, v[0], {prev}), {prev});
        },
        {random_tensor({2, 3, 3}, rng), random_tensor({8, 4}, rng), random_tensor({8}, rng), random_tensor({8, 4}, rng),
         random_tensor({8}, rng), random_tensor({8, 6}, rng), random_tensor({8}, rng), random_tensor({8, 6}, rng),
         random_tensor({8}, rng)},
        rng);
  }
}

TEST(BiLstm, RejectsMismatchedInput) {
  std::mt19937_64 rng(29);
  const auto cell = random_cell(3, 2, rng);
  Tape tape;
  EXPECT_THROW(bilstm_vertical(constant_bilstm(tape, cell, cell), tape.constant(Tensor::zeros({2, 3, 3}))),
               ShapeError);
}

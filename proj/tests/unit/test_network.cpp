#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "consensus/network.hpp"
#include "consensus/ops.hpp"
#include "consensus/optim.hpp"
#include "test_util.hpp"

using namespace consensus;
using consensus::testing::expect_near;
using consensus::testing::random_tensor;

namespace {

ModelConfig small_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.channels = 8;
  c.height = c.width = 16;
  c.ict.window = 3;
  c.cct.hidden = 2;
  return c;
}

ModelOutput run(const ToyModel& model, const ParameterStore& params, const Tensor& image, Tape& tape) {
  Binding bound(tape, params, false);
  return model.forward(bound, tape.constant(image));
}

}  // namespace

TEST(Model, ParseVariantNames) {
  for (Variant v : {Variant::kBaseline, Variant::kIct, Variant::kCct, Variant::kCfnet, Variant::kNonLocal}) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_THROW(parse_variant("psp"), std::invalid_argument);
}

TEST(Model, OutputsAtInputResolution) {
  std::mt19937_64 rng(61);
  for (Variant v : {Variant::kBaseline, Variant::kCfnet, Variant::kNonLocal}) {
    const ToyModel model(small_config(v));
    Tape tape;
    const ModelOutput out = run(model, model.init_params(1), random_tensor({3, 16, 16}, rng), tape);
    EXPECT_EQ(out.main_logits.shape(), (Shape{4, 16, 16}));
    EXPECT_EQ(out.aux_logits.shape(), (Shape{4, 16, 16}));
    EXPECT_EQ(out.phi.has_value(), v == Variant::kCfnet);
  }
}

TEST(Model, IndivisibleSizeRejected) {
  ModelConfig c = small_config(Variant::kBaseline);
  c.height = 18;
  EXPECT_THROW(ToyModel{c}, std::invalid_argument);
}

TEST(Model, AllZeroParametersGiveZeroLogits) {
  std::mt19937_64 rng(62);
  const ToyModel model(small_config(Variant::kCfnet));
  ParameterStore params = model.init_params(3);
  for (const auto& name : params.names()) params.get(name).fill(0.0);
  Tape tape;
  const ModelOutput out = run(model, params, random_tensor({3, 16, 16}, rng), tape);
  EXPECT_EQ(out.main_logits.value(), Tensor::zeros({4, 16, 16}));
  EXPECT_EQ(out.aux_logits.value(), Tensor::zeros({4, 16, 16}));
}

TEST(Model, UnitsAreIdentityAtInitialisation) {
  std::mt19937_64 rng(63);
  const ToyModel baseline(small_config(Variant::kBaseline));
  const ParameterStore base_params = baseline.init_params(5);
  const Tensor image = random_tensor({3, 16, 16}, rng);
  Tape base_tape;
  const ModelOutput want = run(baseline, base_params, image, base_tape);
  for (Variant v : {Variant::kIct, Variant::kCct, Variant::kCfnet, Variant::kNonLocal}) {
    const ToyModel model(small_config(v));
    const ParameterStore params = model.init_params(5);
    for (const auto& name : base_params.names()) EXPECT_EQ(params.get(name), base_params.get(name)) << name;
    Tape tape;
    const ModelOutput got = run(model, params, image, tape);
    EXPECT_EQ(got.main_logits.value(), want.main_logits.value()) << variant_name(v);
    EXPECT_EQ(got.aux_logits.value(), want.aux_logits.value()) << variant_name(v);
  }
}

TEST(Model, DeterministicForward) {
  std::mt19937_64 rng(64);
  const ToyModel model(small_config(Variant::kCfnet));
  const Tensor image = random_tensor({3, 16, 16}, rng);
  Tape a, b;
  EXPECT_EQ(run(model, model.init_params(9), image, a).main_logits.value(),
            run(model, model.init_params(9), image, b).main_logits.value());
  EXPECT_FALSE(model.init_params(9) == model.init_params(10));
}

TEST(CrossEntropy, UniformLogitsTwoClasses) {
  Tape tape;
  const std::vector<int> labels{0, 1, 1, 0};
  EXPECT_NEAR(cross_entropy(tape.constant(Tensor::zeros({2, 2, 2})), labels).value().item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, LargeMarginGoesToZero) {
  Tensor logits = Tensor::zeros({3, 1, 2});
  logits.at(1, 0, 0) = 800.0;
  logits.at(2, 0, 1) = 800.0;
  Tape tape;
  EXPECT_LT(cross_entropy(tape.constant(logits), std::vector<int>{1, 2}).value().item(), 1e-300);
}

TEST(CrossEntropy, MatchesOracleAndSkipsIgnore) {
  std::mt19937_64 rng(65);
  const Tensor logits = random_tensor({3, 2, 2}, rng, 2.0);
  const std::vector<int> labels{2, kIgnoreLabel, 0, 1};
  Tape tape;
  EXPECT_NEAR(cross_entropy(tape.constant(logits), labels).value().item(), oracle::naive_softmax_xent(logits, labels),
              1e-12);
}

TEST(CrossEntropy, RejectsOutOfRangeLabel) {
  Tape tape;
  EXPECT_THROW(cross_entropy(tape.constant(Tensor::zeros({2, 1, 2})), std::vector<int>{0, 2}), std::out_of_range);
  EXPECT_THROW(cross_entropy(tape.constant(Tensor::zeros({2, 1, 2})), std::vector<int>{0, -1}), std::out_of_range);
}

TEST(CrossEntropy, Gradient) {
  std::mt19937_64 rng(66);
  const Tensor logits = random_tensor({4, 3, 3}, rng, 2.0);
  std::vector<int> labels(9);
  for (std::size_t k = 0; k < 9; ++k) labels[k] = k == 4 ? kIgnoreLabel : static_cast<int>(k % 4);
  Tape tape;
  Var x = tape.leaf(logits, true);
  tape.backward(cross_entropy(x, labels));
  const Tensor numeric = oracle::finite_diff_grad(
      [&](const Tensor& probe) { return oracle::naive_softmax_xent(probe, labels); }, logits);
  EXPECT_LT(oracle::compare_gradients("xent", tape.grad(x), numeric).max_rel_error, 1e-7);
}

TEST(TotalLoss, Weights) {
  EXPECT_EQ(total_loss(1.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(total_loss(0.0, 1.0), 0.4);
  EXPECT_DOUBLE_EQ(total_loss(0.5, 0.5), 0.7);
}

TEST(TotalLoss, AuxGradientScaledByPointFour) {
  Tape tape;
  Var main = tape.leaf(Tensor::scalar(0.3), true);
  Var aux = tape.leaf(Tensor::scalar(0.9), true);
  tape.backward(total_loss(main, aux));
  EXPECT_DOUBLE_EQ(tape.grad(main)[0], 1.0);
  EXPECT_DOUBLE_EQ(tape.grad(aux)[0], 0.4);
}

TEST(ArgmaxLabels, PicksLargestPerPixel) {
  Tensor logits = Tensor::zeros({3, 1, 2});
  logits.at(2, 0, 0) = 1.0;
  logits.at(1, 0, 1) = 1.0;
  EXPECT_EQ(argmax_labels(logits), (std::vector<int>{2, 1}));
}

TEST(PolyLr, ScheduleValues) {
  EXPECT_EQ(poly_lr(0.01, 0, 100), 0.01);
  EXPECT_EQ(poly_lr(0.01, 100, 100), 0.0);
  EXPECT_NEAR(poly_lr(0.01, 50, 100), 0.01 * std::pow(0.5, 0.9), 1e-12);
  EXPECT_NEAR(poly_lr(0.01, 50, 100), 0.005359, 1e-6);
  EXPECT_THROW(poly_lr(0.01, 101, 100), std::out_of_range);
  EXPECT_THROW(poly_lr(0.01, 0, 0), std::invalid_argument);
}

TEST(PolyLr, MonotoneNonIncreasing) {
  double last = poly_lr(0.02, 0, 37);
  for (std::size_t it = 1; it <= 37; ++it) {
    const double lr = poly_lr(0.02, it, 37);
    EXPECT_LE(lr, last);
    last = lr;
  }
}

TEST(Sgd, DecayOnlyShrinksParameters) {
  ParameterStore params;
  params.add("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
  SgdConfig cfg;
  cfg.total_iter = 1000;
  cfg.momentum = 0.0;
  SgdOptimizer opt(cfg);
  const double lr = opt.step(params, {{"w", Tensor::zeros({2})}});
  EXPECT_DOUBLE_EQ(lr, 0.01);
  EXPECT_DOUBLE_EQ(params.get("w")[0], 1.0 * (1 - 0.01 * 1e-4));
  EXPECT_DOUBLE_EQ(params.get("w")[1], -2.0 * (1 - 0.01 * 1e-4));
}

TEST(Sgd, PlainGradientDescentWithoutMomentumOrDecay) {
  ParameterStore params;
  params.add("w", Tensor::scalar(3.0));
  SgdOptimizer opt(SgdConfig{0.1, 0.0, 0.0, 0.9, 10});
  opt.step(params, {{"w", Tensor::scalar(2.0)}});
  EXPECT_DOUBLE_EQ(params.get("w").item(), 3.0 - 0.1 * 2.0);
}

// f(w) = 0.5 * a * w^2, two steps with momentum and decay, by hand.
TEST(Sgd, TwoStepsOnQuadratic) {
  const double a = 2.0, w0 = 1.5, base = 0.1, m = 0.9, wd = 1e-4;
  const std::size_t total = 4;
  ParameterStore params;
  params.add("w", Tensor::scalar(w0));
  SgdOptimizer opt(SgdConfig{base, m, wd, 0.9, total});

  double w = w0, v = 0.0;
  for (std::size_t it = 0; it < 2; ++it) {
    const double g = a * params.get("w").item();
    opt.step(params, {{"w", Tensor::scalar(g)}});
    const double lr = base * std::pow(1.0 - static_cast<double>(it) / total, 0.9);
    v = m * v + a * w + wd * w;
    w -= lr * v;
    EXPECT_NEAR(params.get("w").item(), w, 1e-12);
    EXPECT_NEAR(opt.velocity("w").item(), v, 1e-12);
  }
  EXPECT_EQ(opt.iteration(), 2u);
}

TEST(Sgd, ConvexScalarLossDecreasesMonotonically) {
  ParameterStore params;
  params.add("w", Tensor::scalar(4.0));
  SgdOptimizer opt(SgdConfig{0.05, 0.0, 0.0, 0.9, 200});
  double last = INFINITY;
  for (int it = 0; it < 200; ++it) {
    const double w = params.get("w").item();
    const double loss = (w - 1.0) * (w - 1.0);
    EXPECT_LE(loss, last);
    last = loss;
    opt.step(params, {{"w", Tensor::scalar(2.0 * (w - 1.0))}});
  }
  EXPECT_LT(last, 1e-3);
}

TEST(Sgd, CheckedModeRejectsNanGradient) {
  ParameterStore params;
  params.add("w", Tensor::scalar(1.0));
  SgdOptimizer opt(SgdConfig{0.1, 0.9, 0.0, 0.9, 10}, true);
  EXPECT_THROW(opt.step(params, {{"w", Tensor::scalar(std::nan(""))}}), NumericError);
}

TEST(Sgd, GradientShapeMismatchThrows) {
  ParameterStore params;
  params.add("w", Tensor::zeros({2}));
  SgdOptimizer opt(SgdConfig{});
  EXPECT_THROW(opt.step(params, {{"w", Tensor::zeros({3})}}), ShapeError);
}

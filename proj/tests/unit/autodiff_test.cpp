#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "divco/autodiff/adam.hpp"
#include "divco/autodiff/tape.hpp"
#include "divco/error.hpp"
#include "support.hpp"

namespace divco::ad {
namespace {

using testing::check_gradients;
using testing::random_tensor;

constexpr double kTol = 1e-4;

TEST(Tensor, CopiesAliasAndDetachSharesStorage) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = a;
  b.mutable_values()[0] = 9.0;
  EXPECT_EQ(a.at(0, 0), 9.0);
  const Tensor d = a.detach();
  EXPECT_TRUE(d.shares_storage_with(a));
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(d.at(1, 1), 4.0);
}

TEST(Tensor, FromRejectsWrongValueCount) {
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2, 3}), DimensionError);
}

TEST(Tape, RecordsOnlyWhenAnInputIsTracked) {
  Tape tape;
  const Tensor a = Tensor::from({1, 3}, {1, 2, 3});
  const Tensor y = tape.square(a);
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
  const Tensor b = Tensor::from({1, 3}, {1, 2, 3}, true);
  tape.mul(tape.square(b), a);
  EXPECT_EQ(tape.size(), 2u);
}

TEST(Tape, SecondBackwardWithoutResetThrows) {
  Tape tape;
  const Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = tape.square(x);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_THROW(tape.backward(y), StateError);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  tape.reset();
  x.zero_grad();
  tape.backward(tape.square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(Tape, BackwardNeedsScalarTrackedLoss) {
  Tape tape;
  const Tensor x = Tensor::from({1, 2}, {1, 2}, true);
  EXPECT_THROW(tape.backward(tape.square(x)), DimensionError);
  Tape other;
  EXPECT_THROW(other.backward(Tensor::scalar(1.0)), StateError);
}

TEST(Tape, NonFiniteForwardThrows) {
  Tape tape;
  const Tensor x = Tensor::scalar(1000.0, true);
  EXPECT_THROW(tape.exp(x), NumericError);
  const Tensor nan = Tensor::scalar(std::numeric_limits<double>::quiet_NaN(), true);
  EXPECT_THROW(tape.neg(nan), NumericError);
}

TEST(Tape, DomainErrors) {
  Tape tape;
  EXPECT_THROW(tape.log(Tensor::scalar(0.0, true)), DomainError);
  EXPECT_THROW(tape.sqrt(Tensor::scalar(-1.0, true)), DomainError);
  EXPECT_THROW(tape.div(Tensor::scalar(1.0, true), Tensor::scalar(0.0)), DomainError);
}

TEST(Tape, ShapeMismatchThrows) {
  Tape tape;
  const Tensor a = Tensor::zeros({2, 3}, true);
  EXPECT_THROW(tape.add(a, Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(tape.matmul(a, Tensor::zeros({2, 2})), DimensionError);
  EXPECT_THROW(tape.add_row(a, Tensor::zeros({1, 2})), DimensionError);
  EXPECT_THROW(tape.slice_rows(a, 1, 2), DimensionError);
  EXPECT_THROW(tape.reshape(a, {5, 1}), DimensionError);
}

TEST(Tape, ScalarBroadcast) {
  Tape tape;
  const Tensor a = Tensor::from({1, 3}, {1, 2, 3}, true);
  const Tensor s = Tensor::scalar(2.0, true);
  const Tensor y = tape.sum(tape.mul(a, s));
  EXPECT_DOUBLE_EQ(y.item(), 12.0);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(s.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(a.grad()[2], 2.0);
}

TEST(Tape, L2NormSubgradientIsZeroAtOrigin) {
  Tape tape;
  const Tensor x = Tensor::zeros({1, 3}, true);
  tape.backward(tape.l2_norm(x));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Tape, NormalizeRowsKeepsZeroRowsZero) {
  Tape tape;
  const Tensor x = Tensor::from({2, 2}, {3, 4, 0, 0}, true);
  const Tensor y = tape.normalize_rows(x);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(y.at(0, 1), 0.8);
  EXPECT_EQ(y.at(1, 0), 0.0);
  tape.backward(tape.sum(y));
  EXPECT_EQ(x.grad()[2], 0.0);
  EXPECT_EQ(x.grad()[3], 0.0);
}

TEST(Tape, LogSumExpIsStableForLargeInputs) {
  Tape tape;
  const Tensor x = Tensor::from({1, 2}, {1000.0, 1000.0}, true);
  EXPECT_NEAR(tape.logsumexp_rows(x).item(), 1000.0 + std::log(2.0), 1e-9);
}

TEST(Tape, LeakyReluDefaultSlope) {
  Tape tape;
  const Tensor y = tape.leaky_relu(Tensor::from({1, 2}, {-1.0, 2.0}, true));
  EXPECT_DOUBLE_EQ(y.at(0, 0), -0.2);
  EXPECT_DOUBLE_EQ(y.at(0, 1), 2.0);
}

TEST(Tape, RowLayoutOps) {
  Tape tape;
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  const Tensor b = Tensor::from({1, 2}, {5, 6}, true);
  const Tensor rows[] = {a, b};
  const Tensor c = tape.concat_rows(rows);
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  EXPECT_EQ(c.at(2, 1), 6.0);
  const Tensor r = tape.repeat_rows(b, 3);
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r.at(2, 0), 5.0);
  const Tensor cols[] = {a, a};
  const Tensor cc = tape.concat_cols(cols);
  EXPECT_EQ(cc.shape(), (Shape{2, 4}));
  EXPECT_EQ(cc.at(1, 3), 4.0);
  EXPECT_EQ(tape.slice_cols(cc, 1, 2).at(0, 1), 1.0);
  EXPECT_EQ(tape.reshape(a, {1, 4}).at(0, 3), 4.0);
}

// ---- gradient oracle, small sample per op (the acceptance suite runs 100) ---

struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  testing::ScalarFn fn;
  bool kinked = false;
  double lo = -1.0, hi = 1.0;
};

std::vector<OpCase> op_cases() {
  using V = std::vector<Tensor>;
  auto w = [](Tape& t, const Tensor& y) {
    // Weighted sum so every output element gets a distinct upstream gradient.
    std::vector<double> c(y.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return t.sum(t.mul(y, Tensor::from(y.shape(), c)));
  };
  return {
      {"matmul", {{3, 4}, {4, 2}}, [w](Tape& t, const V& x) { return w(t, t.matmul(x[0], x[1])); }},
      {"add", {{2, 3}, {2, 3}}, [w](Tape& t, const V& x) { return w(t, t.add(x[0], x[1])); }},
      {"sub", {{2, 3}, {1, 1}}, [w](Tape& t, const V& x) { return w(t, t.sub(x[0], x[1])); }},
      {"mul", {{2, 3}, {2, 3}}, [w](Tape& t, const V& x) { return w(t, t.mul(x[0], x[1])); }},
      {"div", {{2, 3}, {2, 3}}, [w](Tape& t, const V& x) { return w(t, t.div(x[0], x[1])); }, false, 0.5, 2.0},
      {"scale", {{2, 3}}, [w](Tape& t, const V& x) { return w(t, t.scale(x[0], -1.7)); }},
      {"add_scalar", {{2, 3}}, [w](Tape& t, const V& x) { return w(t, t.add_scalar(x[0], 0.4)); }},
      {"relu", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.relu(x[0])); }, true},
      {"leaky_relu", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.leaky_relu(x[0])); }, true},
      {"tanh", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.tanh(x[0])); }},
      {"sigmoid", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.sigmoid(x[0])); }},
      {"log", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.log(x[0])); }, false, 0.2, 2.0},
      {"exp", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.exp(x[0])); }},
      {"abs", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.abs(x[0])); }, true},
      {"square", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.square(x[0])); }},
      {"sqrt", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.sqrt(x[0])); }, false, 0.2, 2.0},
      {"neg", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.neg(x[0])); }},
      {"clamp", {{3, 3}}, [w](Tape& t, const V& x) { return w(t, t.clamp(x[0], -0.5, 0.5)); }},
      {"sum_axis0", {{3, 4}}, [w](Tape& t, const V& x) { return w(t, t.sum(x[0], 0)); }},
      {"mean_axis1", {{3, 4}}, [w](Tape& t, const V& x) { return w(t, t.mean(x[0], 1)); }},
      {"mean_all", {{3, 4}}, [](Tape& t, const V& x) { return t.mean(t.square(x[0])); }},
      {"l2_norm", {{3, 4}}, [w](Tape& t, const V& x) { return w(t, t.l2_norm(x[0], 1)); }},
      {"l1_norm", {{3, 4}}, [w](Tape& t, const V& x) { return w(t, t.l1_norm(x[0], 0)); }, true},
      {"add_row", {{3, 4}, {1, 4}}, [w](Tape& t, const V& x) { return w(t, t.add_row(x[0], x[1])); }},
      {"row_dot", {{3, 4}, {3, 4}}, [w](Tape& t, const V& x) { return w(t, t.row_dot(x[0], x[1])); }},
      {"normalize_rows", {{3, 4}}, [w](Tape& t, const V& x) { return w(t, t.normalize_rows(x[0])); }},
      {"logsumexp_rows", {{3, 4}}, [w](Tape& t, const V& x) { return w(t, t.logsumexp_rows(x[0])); }},
      {"concat_rows", {{2, 3}, {1, 3}}, [w](Tape& t, const V& x) {
         const Tensor p[] = {x[0], x[1]};
         return w(t, t.concat_rows(p));
       }},
      {"concat_cols", {{2, 3}, {2, 1}}, [w](Tape& t, const V& x) {
         const Tensor p[] = {x[0], x[1]};
         return w(t, t.concat_cols(p));
       }},
      {"slice_rows", {{4, 3}}, [w](Tape& t, const V& x) { return w(t, t.slice_rows(x[0], 1, 2)); }},
      {"slice_cols", {{4, 3}}, [w](Tape& t, const V& x) { return w(t, t.slice_cols(x[0], 1, 2)); }},
      {"repeat_rows", {{2, 3}}, [w](Tape& t, const V& x) { return w(t, t.repeat_rows(x[0], 3)); }},
      {"reshape", {{2, 3}}, [w](Tape& t, const V& x) { return w(t, t.reshape(x[0], {3, 2})); }},
  };
}

TEST(GradientOracle, EveryOpMatchesCentralDifferences) {
  RngStream rng(2024);
  for (const auto& c : op_cases()) {
    SCOPED_TRACE(c.name);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) {
        Tensor t = random_tensor(rng, s, c.lo, c.hi);
        if (c.kinked) testing::avoid_zero(t, 1e-3);
        inputs.push_back(t);
      }
      EXPECT_LE(check_gradients(c.fn, inputs).worst_relative, kTol);
    }
  }
}

// ---- Adam -------------------------------------------------------------------

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  Tensor p = Tensor::from({1, 2}, {1.0, -1.0}, true);
  p.mutable_grad()[0] = 3.0;
  p.mutable_grad()[1] = -0.5;
  Adam opt({p}, {});
  opt.step();
  // Bias-corrected first step: m̂ = g, v̂ = g², update = lr·g/(|g| + ε).
  EXPECT_NEAR(p.values()[0], 1.0 - 2e-4 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.values()[1], -1.0 + 2e-4 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, MatchesHandComputedSecondStep) {
  Tensor p = Tensor::scalar(0.0, true);
  AdamOptions o{0.1, 0.9, 0.99, 1e-8};
  Adam opt({p}, o);
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? 1.0 : -2.0;
    p.zero_grad();
    p.mutable_grad()[0] = g;
    opt.step();
    m = 0.9 * m + 0.1 * g;
    v = 0.99 * v + 0.01 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.99, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p.item(), x, 1e-14);
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  Tensor a = Tensor::scalar(1.0, true);
  a.set_name("layer.weight");
  Tensor b = Tensor::scalar(2.0, true);
  b.mutable_grad()[0] = 1.0;
  a.mutable_grad()[0] = std::numeric_limits<double>::infinity();
  Adam opt({b, a}, {});
  try {
    opt.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
  EXPECT_EQ(b.item(), 2.0);
  EXPECT_EQ(opt.steps(), 0);
}

TEST(Adam, MissingGradientCountsAsZero) {
  Tensor p = Tensor::scalar(5.0, true);
  Adam opt({p}, {});
  opt.step();
  EXPECT_EQ(p.item(), 5.0);
}

TEST(Adam, InvalidOptionsRejected) {
  EXPECT_THROW((Adam({}, AdamOptions{-1.0})), ConfigError);
  EXPECT_THROW((Adam({}, AdamOptions{1e-3, 1.0})), ConfigError);
}

TEST(Adam, ZeroGradClearsEveryParameter) {
  Tensor p = Tensor::from({1, 2}, {1, 2}, true);
  p.mutable_grad()[1] = 4.0;
  Adam opt({p}, {});
  opt.zero_grad();
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

}  // namespace
}  // namespace divco::ad

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "divco/autodiff/tensor.hpp"

namespace divco::ad {

enum class Unary {
  kRelu,
  kLeakyRelu,
  kTanh,
  kSigmoid,
  kLog,
  kExp,
  kAbs,
  kSquare,
  kSqrt,
  kNeg,
};

enum class Binary { kAdd, kSub, kMul, kDiv };

enum class Reduction { kSum, kMean, kL2Norm, kL1Norm };

inline constexpr double kDefaultLeakySlope = 0.2;

// Records differentiable operations in execution order and replays their
// backward rules in exact reverse order.
//
// An operation is recorded only when at least one input requires a gradient;
// forwards over detached tensors therefore leave the tape untouched. Every
// forward result is checked for NaN/Inf.
//
// A tape supports one backward pass. A second call without reset() throws
// StateError instead of accumulating twice.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor matmul(const Tensor& a, const Tensor& b);

  // Same-shape operands, or one operand 1×1 broadcast against the other.
  Tensor binary(Binary op, const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::kAdd, a, b); }
  Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::kSub, a, b); }
  Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::kMul, a, b); }
  Tensor div(const Tensor& a, const Tensor& b) { return binary(Binary::kDiv, a, b); }

  Tensor scale(const Tensor& a, double factor);
  Tensor add_scalar(const Tensor& a, double offset);

  Tensor unary(Unary op, const Tensor& a, double slope = kDefaultLeakySlope);
  Tensor relu(const Tensor& a) { return unary(Unary::kRelu, a); }
  Tensor leaky_relu(const Tensor& a, double slope = kDefaultLeakySlope) {
    return unary(Unary::kLeakyRelu, a, slope);
  }
  Tensor tanh(const Tensor& a) { return unary(Unary::kTanh, a); }
  Tensor sigmoid(const Tensor& a) { return unary(Unary::kSigmoid, a); }
  Tensor log(const Tensor& a) { return unary(Unary::kLog, a); }
  Tensor exp(const Tensor& a) { return unary(Unary::kExp, a); }
  Tensor abs(const Tensor& a) { return unary(Unary::kAbs, a); }
  Tensor square(const Tensor& a) { return unary(Unary::kSquare, a); }
  Tensor sqrt(const Tensor& a) { return unary(Unary::kSqrt, a); }
  Tensor neg(const Tensor& a) { return unary(Unary::kNeg, a); }

  // Values outside [lo, hi] are clipped and receive zero gradient.
  Tensor clamp(const Tensor& a, double lo, double hi);

  // axis 0 collapses rows (result 1×cols), axis 1 collapses columns
  // (result rows×1), no axis collapses everything (1×1).
  Tensor reduce(Reduction op, const Tensor& a, std::optional<int> axis = std::nullopt);
  Tensor sum(const Tensor& a, std::optional<int> axis = std::nullopt) {
    return reduce(Reduction::kSum, a, axis);
  }
  Tensor mean(const Tensor& a, std::optional<int> axis = std::nullopt) {
    return reduce(Reduction::kMean, a, axis);
  }
  Tensor l2_norm(const Tensor& a, std::optional<int> axis = std::nullopt) {
    return reduce(Reduction::kL2Norm, a, axis);
  }
  Tensor l1_norm(const Tensor& a, std::optional<int> axis = std::nullopt) {
    return reduce(Reduction::kL1Norm, a, axis);
  }

  // a[m×n] + bias[1×n] on every row.
  Tensor add_row(const Tensor& a, const Tensor& bias);
  // Row-wise inner products of two m×n tensors, m×1 result.
  Tensor row_dot(const Tensor& a, const Tensor& b);
  // Scales each row to unit L2 norm; all-zero rows stay zero with zero gradient.
  Tensor normalize_rows(const Tensor& a);
  // Numerically stable log Σ_j exp(a_ij), m×1 result.
  Tensor logsumexp_rows(const Tensor& a);

  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor concat_cols(std::span<const Tensor> parts);
  Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
  // Each row repeated `times` times consecutively.
  Tensor repeat_rows(const Tensor& a, std::size_t times);
  Tensor reshape(const Tensor& a, Shape shape);

  void backward(const Tensor& loss);
  void reset();

  std::size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Op {
    std::string_view name;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> rule;
  };

  Tensor finish(std::string_view name, Tensor out, std::vector<Tensor> inputs,
                std::function<void()> rule);

  std::vector<Op> ops_;
  bool consumed_ = false;
};

}  // namespace divco::ad

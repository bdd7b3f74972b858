#include "divco/autodiff/tape.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include <fmt/format.h>

#include "divco/error.hpp"
#include "divco/kernels/kernels.hpp"

namespace divco::ad {
namespace {

bool any_tracked(std::span<const Tensor> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

void require_defined(const Tensor& t, std::string_view op) {
  if (!t.defined()) throw StateError(fmt::format("{}: undefined input tensor", op));
}

void check_finite(std::string_view op, std::span<const double> values,
                  std::string_view what) {
  // Branch-free scan first; the exponent field is all ones only for Inf/NaN.
  // Compared on the high 32-bit word so it vectorizes on baseline SSE2.
  std::uint32_t bad = 0;
  for (double v : values) {
    const auto hi = static_cast<std::uint32_t>(std::bit_cast<std::uint64_t>(v) >> 32);
    bad |= static_cast<std::uint32_t>((hi & 0x7ff00000U) == 0x7ff00000U);
  }
  if (bad == 0) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(fmt::format("{}: non-finite {} at flat index {} ({})", op,
                                     what, i, values[i]));
    }
  }
}

Tensor make_output(Shape shape, std::vector<double> values,
                   std::span<const Tensor> inputs) {
  return Tensor::from(shape, std::move(values), any_tracked(inputs));
}

// Scalar-vs-tensor broadcasting only.
Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (b.is_scalar()) return a;
  if (a.is_scalar()) return b;
  throw DimensionError(fmt::format("{}: cannot broadcast {} with {}", op, a.str(), b.str()));
}

// Accumulates a full-size gradient into a possibly 1×1 operand.
void accumulate_broadcast(const Tensor& target, std::span<const double> g,
                          const std::vector<double>& factor, double sign) {
  auto dst = target.mutable_grad();
  if (dst.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += sign * g[i] * factor[i];
  } else {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * factor[i];
    dst[0] += sign * s;
  }
}

std::string_view unary_name(Unary op) {
  switch (op) {
    case Unary::kRelu: return "relu";
    case Unary::kLeakyRelu: return "leaky_relu";
    case Unary::kTanh: return "tanh";
    case Unary::kSigmoid: return "sigmoid";
    case Unary::kLog: return "log";
    case Unary::kExp: return "exp";
    case Unary::kAbs: return "abs";
    case Unary::kSquare: return "square";
    case Unary::kSqrt: return "sqrt";
    case Unary::kNeg: return "neg";
  }
  return "unary";
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor Tape::finish(std::string_view name, Tensor out, std::vector<Tensor> inputs,
                    std::function<void()> rule) {
  check_finite(name, out.values(), "value");
  if (out.requires_grad()) {
    if (consumed_) {
      throw StateError(fmt::format("{}: recording on a tape that already ran backward; reset() it first", name));
    }
    ops_.push_back(Op{name, std::move(inputs), out, std::move(rule)});
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError(fmt::format("matmul: inner dimensions differ, {} x {}",
                                     a.shape().str(), b.shape().str()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n);
  const auto& kt = kernels::active();
  kt.gemm_nn(m, k, n, a.values().data(), b.values().data(), c.data(), true);  // c is already zeroed
  const std::vector<Tensor> in{a, b};
  Tensor out = make_output({m, n}, std::move(c), in);
  return finish("matmul", out, in, [a, b, out, m, k, n]() mutable {
    if (!out.has_grad()) return;
    const auto& kt = kernels::active();
    const double* g = out.grad().data();
    if (a.requires_grad()) kt.gemm_nt_acc(m, n, k, g, b.values().data(), a.mutable_grad().data());
    if (b.requires_grad()) kt.gemm_tn_acc(m, k, n, a.values().data(), g, b.mutable_grad().data());
  });
}

Tensor Tape::binary(Binary op, const Tensor& a, const Tensor& b) {
  static constexpr std::string_view kNames[] = {"add", "sub", "mul", "div"};
  const std::string_view name = kNames[static_cast<int>(op)];
  require_defined(a, name);
  require_defined(b, name);
  const Shape shape = broadcast_shape(name, a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  const bool a_scalar = a.size() != shape.size();
  const bool b_scalar = b.size() != shape.size();
  std::vector<double> y(shape.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x0 = av[a_scalar ? 0 : i];
    const double x1 = bv[b_scalar ? 0 : i];
    switch (op) {
      case Binary::kAdd: y[i] = x0 + x1; break;
      case Binary::kSub: y[i] = x0 - x1; break;
      case Binary::kMul: y[i] = x0 * x1; break;
      case Binary::kDiv:
        if (x1 == 0.0) throw DomainError(fmt::format("div: zero divisor at flat index {}", i));
        y[i] = x0 / x1;
        break;
    }
  }
  const std::vector<Tensor> in{a, b};
  Tensor out = make_output(shape, std::move(y), in);
  return finish(name, out, in, [op, a, b, out, a_scalar, b_scalar]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    const std::size_t n = g.size();
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> fa(n), fb(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = av[a_scalar ? 0 : i];
      const double x1 = bv[b_scalar ? 0 : i];
      switch (op) {
        case Binary::kAdd: fa[i] = 1.0; fb[i] = 1.0; break;
        case Binary::kSub: fa[i] = 1.0; fb[i] = -1.0; break;
        case Binary::kMul: fa[i] = x1; fb[i] = x0; break;
        case Binary::kDiv: fa[i] = 1.0 / x1; fb[i] = -x0 / (x1 * x1); break;
      }
    }
    if (a.requires_grad()) accumulate_broadcast(a, g, fa, 1.0);
    if (b.requires_grad()) accumulate_broadcast(b, g, fb, 1.0);
  });
}

Tensor Tape::scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> y(a.values().begin(), a.values().end());
  for (double& v : y) v *= factor;
  const std::vector<Tensor> in{a};
  Tensor out = make_output(a.shape(), std::move(y), in);
  return finish("scale", out, in, [a, out, factor]() mutable {
    if (!out.has_grad()) return;
    kernels::active().axpy(out.size(), factor, out.grad().data(), a.mutable_grad().data());
  });
}

Tensor Tape::add_scalar(const Tensor& a, double offset) {
  require_defined(a, "add_scalar");
  std::vector<double> y(a.values().begin(), a.values().end());
  for (double& v : y) v += offset;
  const std::vector<Tensor> in{a};
  Tensor out = make_output(a.shape(), std::move(y), in);
  return finish("add_scalar", out, in, [a, out]() mutable {
    if (!out.has_grad()) return;
    auto dst = a.mutable_grad();
    const auto g = out.grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

namespace {

// The op switch sits outside the element loops so each loop is a single
// branch-free map the compiler can vectorize.
template <typename F>
void map_into(std::span<const double> x, std::vector<double>& y, F f) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
}

template <typename F>
void accumulate_scaled(std::span<const double> g, std::span<double> dst, F deriv) {
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * deriv(i);
}

void require_positive(std::string_view op, std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw DomainError(fmt::format("{}: non-positive input {} at flat index {}", op, x[i], i));
    }
  }
}

}  // namespace

Tensor Tape::unary(Unary op, const Tensor& a, double slope) {
  const std::string_view name = unary_name(op);
  require_defined(a, name);
  const auto x = a.values();
  std::vector<double> y(x.size());
  switch (op) {
    case Unary::kRelu: map_into(x, y, [](double v) { return v > 0.0 ? v : 0.0; }); break;
    case Unary::kLeakyRelu:
      map_into(x, y, [slope](double v) { return v > 0.0 ? v : slope * v; });
      break;
    case Unary::kTanh: map_into(x, y, [](double v) { return std::tanh(v); }); break;
    case Unary::kSigmoid:
      map_into(x, y, [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
      break;
    case Unary::kLog:
      require_positive("log", x);
      map_into(x, y, [](double v) { return std::log(v); });
      break;
    case Unary::kExp: map_into(x, y, [](double v) { return std::exp(v); }); break;
    case Unary::kAbs: map_into(x, y, [](double v) { return std::fabs(v); }); break;
    case Unary::kSquare: map_into(x, y, [](double v) { return v * v; }); break;
    case Unary::kSqrt:
      require_positive("sqrt", x);
      map_into(x, y, [](double v) { return std::sqrt(v); });
      break;
    case Unary::kNeg: map_into(x, y, [](double v) { return -v; }); break;
  }
  const std::vector<Tensor> in{a};
  Tensor out = make_output(a.shape(), std::move(y), in);
  return finish(name, out, in, [op, a, out, slope]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    const double* x = a.values().data();
    const double* y = out.values().data();
    const auto dst = a.mutable_grad();
    switch (op) {
      case Unary::kRelu:
        accumulate_scaled(g, dst, [x](std::size_t i) { return x[i] > 0.0 ? 1.0 : 0.0; });
        break;
      case Unary::kLeakyRelu:
        accumulate_scaled(g, dst, [x, slope](std::size_t i) { return x[i] > 0.0 ? 1.0 : slope; });
        break;
      case Unary::kTanh:
        accumulate_scaled(g, dst, [y](std::size_t i) { return 1.0 - y[i] * y[i]; });
        break;
      case Unary::kSigmoid:
        accumulate_scaled(g, dst, [y](std::size_t i) { return y[i] * (1.0 - y[i]); });
        break;
      case Unary::kLog:
        accumulate_scaled(g, dst, [x](std::size_t i) { return 1.0 / x[i]; });
        break;
      case Unary::kExp: accumulate_scaled(g, dst, [y](std::size_t i) { return y[i]; }); break;
      case Unary::kAbs:
        accumulate_scaled(g, dst, [x](std::size_t i) { return sign_of(x[i]); });
        break;
      case Unary::kSquare:
        accumulate_scaled(g, dst, [x](std::size_t i) { return 2.0 * x[i]; });
        break;
      case Unary::kSqrt:
        accumulate_scaled(g, dst, [y](std::size_t i) { return 0.5 / y[i]; });
        break;
      case Unary::kNeg: accumulate_scaled(g, dst, [](std::size_t) { return -1.0; }); break;
    }
  });
}

Tensor Tape::clamp(const Tensor& a, double lo, double hi) {
  require_defined(a, "clamp");
  if (!(lo <= hi)) throw DomainError(fmt::format("clamp: empty range [{}, {}]", lo, hi));
  std::vector<double> y(a.values().begin(), a.values().end());
  for (double& v : y) v = std::clamp(v, lo, hi);
  const std::vector<Tensor> in{a};
  Tensor out = make_output(a.shape(), std::move(y), in);
  return finish("clamp", out, in, [a, out, lo, hi]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    const auto x = a.values();
    auto dst = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] >= lo && x[i] <= hi) dst[i] += g[i];
    }
  });
}

Tensor Tape::reduce(Reduction op, const Tensor& a, std::optional<int> axis) {
  static constexpr std::string_view kNames[] = {"sum", "mean", "l2_norm", "l1_norm"};
  const std::string_view name = kNames[static_cast<int>(op)];
  require_defined(a, name);
  if (axis && (*axis < 0 || *axis > 1)) {
    throw DimensionError(fmt::format("{}: axis {} is invalid for a rank-2 tensor", name, *axis));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  Shape shape{1, 1};
  if (axis && *axis == 0) shape = {1, cols};
  if (axis && *axis == 1) shape = {rows, 1};
  // Maps an input flat index to its output slot.
  auto slot = [axis, cols](std::size_t i) -> std::size_t {
    if (!axis) return 0;
    return *axis == 0 ? i % cols : i / cols;
  };
  const std::size_t group = shape.size() == 1 ? rows * cols : (*axis == 0 ? rows : cols);

  const auto x = a.values();
  std::vector<double> y(shape.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (op) {
      case Reduction::kSum:
      case Reduction::kMean: y[slot(i)] += x[i]; break;
      case Reduction::kL2Norm: y[slot(i)] += x[i] * x[i]; break;
      case Reduction::kL1Norm: y[slot(i)] += std::fabs(x[i]); break;
    }
  }
  for (double& v : y) {
    if (op == Reduction::kMean) v /= static_cast<double>(group);
    if (op == Reduction::kL2Norm) v = std::sqrt(v);
  }
  const std::vector<Tensor> in{a};
  Tensor out = make_output(shape, std::move(y), in);
  return finish(name, out, in, [op, a, out, slot, group]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    const auto y = out.values();
    const auto x = a.values();
    auto dst = a.mutable_grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t s = slot(i);
      switch (op) {
        case Reduction::kSum: dst[i] += g[s]; break;
        case Reduction::kMean: dst[i] += g[s] / static_cast<double>(group); break;
        case Reduction::kL2Norm:
          // Subgradient 0 at the origin.
          if (y[s] > 0.0) dst[i] += g[s] * x[i] / y[s];
          break;
        case Reduction::kL1Norm: dst[i] += g[s] * sign_of(x[i]); break;
      }
    }
  });
}

Tensor Tape::add_row(const Tensor& a, const Tensor& bias) {
  require_defined(a, "add_row");
  require_defined(bias, "add_row");
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw DimensionError(fmt::format("add_row: bias {} does not match {}",
                                     bias.shape().str(), a.shape().str()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<double> y(a.values().begin(), a.values().end());
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += bv[c];
  }
  const std::vector<Tensor> in{a, bias};
  Tensor out = make_output(a.shape(), std::move(y), in);
  return finish("add_row", out, in, [a, bias, out, rows, cols]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    if (a.requires_grad()) {
      auto dst = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto dst = bias.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c] += g[r * cols + c];
      }
    }
  });
}

Tensor Tape::row_dot(const Tensor& a, const Tensor& b) {
  require_defined(a, "row_dot");
  require_defined(b, "row_dot");
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("row_dot: shapes differ, {} vs {}", a.shape().str(),
                                     b.shape().str()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto& kt = kernels::active();
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = kt.dot(a.values().data() + r * cols, b.values().data() + r * cols, cols);
  }
  const std::vector<Tensor> in{a, b};
  Tensor out = make_output({rows, 1}, std::move(y), in);
  return finish("row_dot", out, in, [a, b, out, rows, cols]() mutable {
    if (!out.has_grad()) return;
    const auto& kt = kernels::active();
    const auto g = out.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      if (a.requires_grad()) kt.axpy(cols, g[r], b.values().data() + r * cols, a.mutable_grad().data() + r * cols);
      if (b.requires_grad()) kt.axpy(cols, g[r], a.values().data() + r * cols, b.mutable_grad().data() + r * cols);
    }
  });
}

Tensor Tape::normalize_rows(const Tensor& a) {
  require_defined(a, "normalize_rows");
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto x = a.values();
  std::vector<double> norms(rows, 0.0);
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x[r * cols + c] * x[r * cols + c];
    norms[r] = std::sqrt(s);
    if (norms[r] > 0.0) {
      for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] / norms[r];
    }
  }
  const std::vector<Tensor> in{a};
  Tensor out = make_output(a.shape(), std::move(y), in);
  return finish("normalize_rows", out, in, [a, out, rows, cols, norms = std::move(norms)]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    const auto y = out.values();
    auto dst = a.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      if (!(norms[r] > 0.0)) continue;
      double proj = 0.0;
      for (std::size_t c = 0; c < cols; ++c) proj += y[r * cols + c] * g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        dst[i] += (g[i] - y[i] * proj) / norms[r];
      }
    }
  });
}

Tensor Tape::logsumexp_rows(const Tensor& a) {
  require_defined(a, "logsumexp_rows");
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto x = a.values();
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(row[c] - mx);
    y[r] = mx + std::log(s);
  }
  const std::vector<Tensor> in{a};
  Tensor out = make_output({rows, 1}, std::move(y), in);
  return finish("logsumexp_rows", out, in, [a, out, rows, cols]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    const auto y = out.values();
    const auto x = a.values();
    auto dst = a.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        dst[i] += g[r] * std::exp(x[i] - y[r]);
      }
    }
  });
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat_rows");
    if (p.cols() != cols) {
      throw DimensionError(fmt::format("concat_rows: column counts differ, {} vs {}",
                                       parts.front().shape().str(), p.shape().str()));
    }
    rows += p.rows();
  }
  std::vector<double> y;
  y.reserve(rows * cols);
  for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> in(parts.begin(), parts.end());
  Tensor out = make_output({rows, cols}, std::move(y), in);
  return finish("concat_rows", out, in, [in, out]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    std::size_t offset = 0;
    for (auto& p : in) {
      if (p.requires_grad()) {
        auto dst = p.mutable_grad();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[offset + i];
      }
      offset += p.size();
    }
  });
}

Tensor Tape::concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_defined(p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError(fmt::format("concat_cols: row counts differ, {} vs {}",
                                       parts.front().shape().str(), p.shape().str()));
    }
    cols += p.cols();
  }
  std::vector<double> y(rows * cols);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const auto v = p.values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * p.cols(), p.cols(), y.data() + r * cols + c0);
    }
    c0 += p.cols();
  }
  std::vector<Tensor> in(parts.begin(), parts.end());
  Tensor out = make_output({rows, cols}, std::move(y), in);
  return finish("concat_cols", out, in, [in, out, rows, cols]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    std::size_t c0 = 0;
    for (auto& p : in) {
      const std::size_t pc = p.cols();
      if (p.requires_grad()) {
        auto dst = p.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < pc; ++c) dst[r * pc + c] += g[r * cols + c0 + c];
        }
      }
      c0 += pc;
    }
  });
}

Tensor Tape::slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_defined(a, "slice_rows");
  if (count == 0 || begin + count > a.rows()) {
    throw DimensionError(fmt::format("slice_rows: [{}, {}) outside {}", begin, begin + count,
                                     a.shape().str()));
  }
  const std::size_t cols = a.cols();
  const auto x = a.values();
  std::vector<double> y(x.begin() + begin * cols, x.begin() + (begin + count) * cols);
  const std::vector<Tensor> in{a};
  Tensor out = make_output({count, cols}, std::move(y), in);
  return finish("slice_rows", out, in, [a, out, begin, cols]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dst = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[begin * cols + i] += g[i];
  });
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_defined(a, "slice_cols");
  if (count == 0 || begin + count > a.cols()) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) outside {}", begin, begin + count,
                                     a.shape().str()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto x = a.values();
  std::vector<double> y(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data() + r * cols + begin, count, y.data() + r * count);
  }
  const std::vector<Tensor> in{a};
  Tensor out = make_output({rows, count}, std::move(y), in);
  return finish("slice_cols", out, in, [a, out, begin, count, rows, cols]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dst = a.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) dst[r * cols + begin + c] += g[r * count + c];
    }
  });
}

Tensor Tape::repeat_rows(const Tensor& a, std::size_t times) {
  require_defined(a, "repeat_rows");
  if (times == 0) throw DimensionError("repeat_rows: times must be positive");
  const std::size_t rows = a.rows(), cols = a.cols();
  const auto x = a.values();
  std::vector<double> y;
  y.reserve(rows * times * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < times; ++t) {
      y.insert(y.end(), x.begin() + r * cols, x.begin() + (r + 1) * cols);
    }
  }
  const std::vector<Tensor> in{a};
  Tensor out = make_output({rows * times, cols}, std::move(y), in);
  return finish("repeat_rows", out, in, [a, out, rows, cols, times]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dst = a.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t t = 0; t < times; ++t) {
        const double* src = g.data() + (r * times + t) * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] += src[c];
      }
    }
  });
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape.size() != a.size()) {
    throw DimensionError(fmt::format("reshape: {} cannot become {}", a.shape().str(), shape.str()));
  }
  std::vector<double> y(a.values().begin(), a.values().end());
  const std::vector<Tensor> in{a};
  Tensor out = make_output(shape, std::move(y), in);
  return finish("reshape", out, in, [a, out]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dst = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (consumed_) {
    throw StateError("backward: tape already ran backward; reset() it before reuse");
  }
  if (!loss.shape().is_scalar()) {
    throw DimensionError("backward: loss must be 1x1, got " + loss.shape().str());
  }
  if (ops_.empty()) throw StateError("backward: tape is empty");
  if (!loss.requires_grad()) {
    throw StateError("backward: loss does not depend on any tensor that requires a gradient");
  }
  consumed_ = true;
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->rule();
    for (const auto& input : it->inputs) {
      if (input.requires_grad() && input.has_grad()) {
        check_finite(it->name, input.grad(), "gradient");
      }
    }
  }
}

void Tape::reset() {
  ops_.clear();
  consumed_ = false;
}

}  // namespace divco::ad

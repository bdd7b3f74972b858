#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "divco/autodiff/tape.hpp"
#include "divco/autodiff/tensor.hpp"
#include "divco/rng.hpp"

namespace divco::testing {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

inline Tensor random_tensor(RngStream& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape.size());
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(shape, std::move(v), requires_grad);
}

inline Tensor copy_of(const Tensor& t, bool requires_grad) {
  return Tensor::from(t.shape(), {t.values().begin(), t.values().end()}, requires_grad);
}

struct GradCheck {
  double worst_relative = 0.0;  // max over inputs of ‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)
};

// Reverse-mode gradients of f against central differences with step h. The
// relative error of each input's gradient is taken over the whole vector;
// gradients that are both below 1e-10 in norm count as agreeing.
inline GradCheck check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                 double h = 1e-5) {
  std::vector<Tensor> tracked;
  for (const auto& t : inputs) tracked.push_back(copy_of(t, true));
  Tape tape;
  const Tensor loss = f(tape, tracked);
  tape.backward(loss);

  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> analytic(inputs[k].size(), 0.0);
    if (tracked[k].has_grad()) {
      const auto g = tracked[k].grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    std::vector<double> numeric(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval_at = [&](double delta) {
        std::vector<Tensor> probe;
        for (const auto& t : inputs) probe.push_back(copy_of(t, false));
        probe[k].mutable_values()[i] += delta;
        Tape t;
        return f(t, probe).item();
      };
      numeric[i] = (eval_at(h) - eval_at(-h)) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale < 1e-10) continue;
    out.worst_relative = std::max(out.worst_relative, std::sqrt(diff) / scale);
  }
  return out;
}

// Same comparison for tensors a closure reads by handle, such as network
// parameters: they are perturbed in place and restored afterwards.
inline GradCheck check_parameter_gradients(const std::function<Tensor(Tape&)>& f,
                                           const std::vector<Tensor>& params, double h = 1e-5) {
  for (const auto& p : params) p.zero_grad();
  {
    Tape tape;
    tape.backward(f(tape));
  }
  GradCheck out;
  for (auto p : params) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.values()[i];
      auto eval_at = [&](double delta) {
        p.mutable_values()[i] = keep + delta;
        Tape t;
        return f(t).item();
      };
      const double numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
      p.mutable_values()[i] = keep;
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
    p.zero_grad();
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    if (scale < 1e-10) continue;
    out.worst_relative = std::max(out.worst_relative, std::sqrt(diff) / scale);
  }
  return out;
}

// Pushes entries away from 0 so kinked functions are probed off their kinks.
inline void avoid_zero(Tensor& t, double margin) {
  for (double& v : t.mutable_values()) {
    if (std::fabs(v) < margin) v = v < 0.0 ? -margin - std::fabs(v) : margin + std::fabs(v);
  }
}

}  // namespace divco::testing

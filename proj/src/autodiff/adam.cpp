#include "divco/autodiff/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::ad {

void AdamOptions::validate() const {
  if (!(lr > 0.0)) throw ConfigError(fmt::format("adam: lr must be positive, got {}", lr));
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError(fmt::format("adam: beta1 must be in [0,1), got {}", beta1));
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError(fmt::format("adam: beta2 must be in [0,1), got {}", beta2));
  if (!(eps > 0.0)) throw ConfigError(fmt::format("adam: eps must be positive, got {}", eps));
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  options_.validate();
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].grad();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        const std::string& name = params_[i].name();
        throw NumericError(fmt::format("adam: non-finite gradient in parameter '{}' at index {}",
                                       name.empty() ? fmt::format("#{}", i) : name, j));
      }
    }
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto values = p.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has_grad = p.has_grad();
    const auto g = has_grad ? p.grad() : std::span<const double>{};
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      values[j] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::restore(std::int64_t steps, std::vector<std::vector<double>> first,
                   std::vector<std::vector<double>> second) {
  if (steps < 0) throw StateError("adam: negative step count in restored state");
  if (first.size() != params_.size() || second.size() != params_.size()) {
    throw DimensionError(fmt::format("adam: restored state has {} / {} buffers for {} parameters",
                                     first.size(), second.size(), params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (first[i].size() != params_[i].size() || second[i].size() != params_[i].size()) {
      throw DimensionError(fmt::format("adam: restored moments for parameter '{}' have wrong length",
                                       params_[i].name()));
    }
  }
  step_ = steps;
  m_ = std::move(first);
  v_ = std::move(second);
}

}  // namespace divco::ad

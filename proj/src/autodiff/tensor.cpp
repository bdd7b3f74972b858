#include "divco/autodiff/tensor.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::ad {

std::string Shape::str() const { return fmt::format("[{}x{}]", rows, cols); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(shape, 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(shape.size(), value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.rows == 0 || shape.cols == 0) {
    throw DimensionError("tensor extents must be positive, got " + shape.str());
  }
  if (values.size() != shape.size()) {
    throw DimensionError(fmt::format("tensor shape {} needs {} values, got {}",
                                     shape.str(), shape.size(), values.size()));
  }
  auto storage = std::make_shared<Storage>();
  storage->shape = shape;
  storage->values = std::move(values);
  return Tensor(std::move(storage), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!storage_) throw StateError("use of an undefined tensor");
  return storage_->shape;
}

std::span<const double> Tensor::values() const {
  if (!storage_) throw StateError("use of an undefined tensor");
  return storage_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!storage_) throw StateError("use of an undefined tensor");
  return storage_->values;
}

double Tensor::item() const {
  if (!shape().is_scalar()) {
    throw DimensionError("item() needs a 1x1 tensor, got " + shape().str());
  }
  return storage_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& s = shape();
  if (r >= s.rows || c >= s.cols) {
    throw DimensionError(fmt::format("index ({}, {}) outside {}", r, c, s.str()));
  }
  return storage_->values[r * s.cols + c];
}

bool Tensor::has_grad() const { return storage_ && !storage_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!storage_) throw StateError("use of an undefined tensor");
  return storage_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  if (!storage_) throw StateError("use of an undefined tensor");
  if (storage_->grad.empty()) storage_->grad.assign(storage_->values.size(), 0.0);
  return storage_->grad;
}

void Tensor::zero_grad() const {
  if (storage_ && !storage_->grad.empty()) {
    std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
  }
}

Tensor Tensor::detach() const { return Tensor(storage_, false); }

const std::string& Tensor::name() const {
  static const std::string empty;
  return storage_ ? storage_->name : empty;
}

void Tensor::set_name(std::string name) {
  if (!storage_) throw StateError("use of an undefined tensor");
  storage_->name = std::move(name);
}

}  // namespace divco::ad

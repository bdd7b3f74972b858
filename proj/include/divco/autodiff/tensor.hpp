#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace divco::ad {

// Rank-2 extents. Vectors are 1×n rows, scalars are 1×1.
struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Shared handle to a dense row-major array of doubles with a gradient slot.
//
// Copies of a Tensor alias the same storage. detach() yields a handle that
// reads the same values but is invisible to gradient tracking, which is how
// a network's parameters are used as constants inside another network's loss.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
  std::size_t size() const { return shape().size(); }

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return tracked_; }
  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zeroed gradient on first use. Handles alias storage, so this
  // is const like the other accessors of the shared state.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  Tensor detach() const;
  bool shares_storage_with(const Tensor& other) const {
    return storage_ == other.storage_;
  }

  const std::string& name() const;
  void set_name(std::string name);

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    std::string name;
  };

  Tensor(std::shared_ptr<Storage> storage, bool tracked)
      : storage_(std::move(storage)), tracked_(tracked) {}

  std::shared_ptr<Storage> storage_;
  bool tracked_ = false;
};

}  // namespace divco::ad

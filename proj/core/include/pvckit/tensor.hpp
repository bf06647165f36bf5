#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "pvckit/errors.hpp"

namespace pvckit {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool finite_checks_enabled();  // PVCKIT_CHECK_FINITE=1

// Dense N-dimensional array of f64, row-major with the last index fastest.
// Copies share storage; by convention a tensor is not mutated once it has
// been handed to an op or another owner (build, then treat as a value).
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size() const;
  int64_t dim(int64_t axis) const;

  const double* data() const { return data_->data(); }
  double* data() { return data_->data(); }

  // Value of a single-element tensor.
  double value() const;

  double at(std::initializer_list<int64_t> idx) const;
  double& at(std::initializer_list<int64_t> idx);

  // Same storage, new extents (element count must match).
  Tensor reshaped(Shape shape) const;
  Tensor clone() const;

  bool all_finite() const;
  void check_finite(const std::string& where) const;

private:
  int64_t offset(std::initializer_list<int64_t> idx) const;

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
};

}  // namespace pvckit

#include "pvckit/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

namespace pvckit {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

bool finite_checks_enabled() {
  static const bool on = [] {
    const char* v = std::getenv("PVCKIT_CHECK_FINITE");
    return v != nullptr && v[0] == '1';
  }();
  return on;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (int64_t d : shape_)
    if (d <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape_));
  data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  for (int64_t d : shape_)
    if (d <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape_));
  if (numel(shape_) != static_cast<int64_t>(values.size()))
    throw ShapeError("data length " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape_));
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

int64_t Tensor::size() const { return defined() ? static_cast<int64_t>(data_->size()) : 0; }

int64_t Tensor::dim(int64_t axis) const {
  if (axis < 0) axis += ndim();
  if (axis < 0 || axis >= ndim())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  return shape_[static_cast<size_t>(axis)];
}

double Tensor::value() const {
  if (!defined() || size() != 1)
    throw ContractError("value() requires a single-element tensor, got shape " + shape_str(shape_));
  return (*data_)[0];
}

int64_t Tensor::offset(std::initializer_list<int64_t> idx) const {
  if (static_cast<int64_t>(idx.size()) != ndim())
    throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match shape " +
                     shape_str(shape_));
  int64_t off = 0;
  size_t axis = 0;
  for (int64_t i : idx) {
    if (i < 0 || i >= shape_[axis])
      throw ShapeError("index " + std::to_string(i) + " out of bounds on axis " + std::to_string(axis));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double Tensor::at(std::initializer_list<int64_t> idx) const { return (*data_)[static_cast<size_t>(offset(idx))]; }
double& Tensor::at(std::initializer_list<int64_t> idx) { return (*data_)[static_cast<size_t>(offset(idx))]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  if (data_) t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

bool Tensor::all_finite() const {
  if (!defined()) return true;
  for (double v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(const std::string& where) const {
  if (!all_finite()) throw NonFiniteError("non-finite value in " + where);
}

}  // namespace pvckit

#include "consensus/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace consensus {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " + std::to_string(data_.size()) +
                     " values");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

double& Tensor::at(std::size_t c, std::size_t i, std::size_t j) {
  return data_[(c * shape_[1] + i) * shape_[2] + j];
}
double Tensor::at(std::size_t c, std::size_t i, std::size_t j) const {
  return data_[(c * shape_[1] + i) * shape_[2] + j];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("tensor: item() on " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace consensus

// SPDX-License-Identifier: Apache-2.0
#include "actrec/tensor.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "actrec/errors.hpp"

namespace actrec {

Shape::Shape(std::initializer_list<std::size_t> dims)
    : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 4) {
    throw ShapeError("shape rank must be between 1 and 4, got " +
                     std::to_string(dims_.size()));
  }
  count_ = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw ShapeError("shape has a zero dimension: " + str());
    if (count_ > std::numeric_limits<std::size_t>::max() / d) {
      throw ShapeError("shape element count overflows: " + str());
    }
    count_ *= d;
  }
}

std::string Shape::str() const {
  std::string s;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims_[i]);
  }
  return s;
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_.element_count(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.element_count()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

bool Tensor::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor tensor_new(const Shape& shape, float fill) { return Tensor(shape, fill); }

Tensor flatten(const Tensor& t) {
  return Tensor(Shape{t.size()}, t.storage());
}

}  // namespace actrec

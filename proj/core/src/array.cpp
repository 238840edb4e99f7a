#include "lumamba/array.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lumamba {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Array::Array(Shape shape, Real fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw std::invalid_argument("Array: zero extent in shape " + shape_string(shape_));
  }
}

Array::Array(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument("Array: shape " + shape_string(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
  }
}

std::size_t Array::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw std::out_of_range("Array::at: rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) throw std::out_of_range("Array::at: index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

Real& Array::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
Real Array::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

Array Array::reshaped(Shape shape) const& {
  Array copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Array Array::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(shape_) + " as " +
                                shape_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Array::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

bool Array::all_finite() const {
  for (Real v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace lumamba

#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lumamba {

#ifdef LUMAMBA_USE_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Buffers start on a 64-byte boundary so vectorized kernels split their work the
// same way regardless of where the heap places them.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Storage = std::vector<Real, AlignedAllocator<Real>>;

// Dense row-major array. Value semantics; cheap to move.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, Real fill = Real(0));
  Array(Shape shape, std::vector<Real> data);

  static Array zeros(Shape shape) { return Array(std::move(shape)); }
  static Array scalar(Real v) { return Array(Shape{}, std::vector<Real>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::initializer_list<std::size_t> idx);
  Real at(std::initializer_list<std::size_t> idx) const;

  // Same data, new shape with equal element count.
  Array reshaped(Shape shape) const&;
  Array reshaped(Shape shape) &&;

  void fill(Real v);
  bool all_finite() const;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const;

  Shape shape_;
  Storage data_;
};

}  // namespace lumamba

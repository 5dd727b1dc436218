#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace orion::nn {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorized reductions peel a prefix that depends on
/// the start address, so without a fixed alignment the summation order (and the
/// rounding) would change from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t num_elements(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array with an optional gradient slot of identical shape.
/// The last axis is contiguous. Network activations use [batch, channel, z, y, x].
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  bool has_grad() const noexcept { return !grad_.empty(); }
  /// Allocates a zeroed gradient on first use.
  std::span<T> grad();
  std::span<const T> grad() const noexcept { return grad_; }
  void zero_grad();
  void drop_grad() noexcept { grad_.clear(); }

  /// Same data, new shape with equal element count. The gradient is not carried.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(T value);
  bool all_finite() const noexcept;

  /// Element-type conversion (data only).
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  struct Adopt {};
  Tensor(Shape shape, AlignedVector<T> data, Adopt);

  Shape shape_;
  AlignedVector<T> data_;
  AlignedVector<T> grad_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace orion::nn

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tcode/errors.hpp"

namespace tcode {

/// 64-byte aligned allocator. Vectorized kernels peel differently on
/// differently aligned buffers, which would make results allocation-dependent.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

}  // namespace tcode

namespace tcode {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor of doubles with an optional same-shape gradient buffer.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

  Tensor(Shape shape, std::span<const double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != element_count(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + tcode::to_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<double> data)
      : Tensor(std::move(shape), std::span<const double>(data.begin(), data.size())) {}
  Tensor(Shape shape, const std::vector<double>& data) : Tensor(std::move(shape), std::span<const double>(data)) {}

  static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const Buffer& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  double& operator()(std::size_t a, std::size_t r, std::size_t c) {
    return data_[(a * shape_[1] + r) * shape_[2] + c];
  }
  double operator()(std::size_t a, std::size_t r, std::size_t c) const {
    return data_[(a * shape_[1] + r) * shape_[2] + c];
  }

  /// Contiguous view of row `r` when the tensor is read as [rows x last-dim].
  std::span<const double> row(std::size_t r) const {
    const std::size_t w = shape_.back();
    return std::span<const double>(data_).subspan(r * w, w);
  }
  std::span<double> row(std::size_t r) {
    const std::size_t w = shape_.back();
    return std::span<double>(data_).subspan(r * w, w);
  }

  Tensor reshaped(Shape shape) const {
    if (element_count(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + tcode::to_string(shape_) + " to " + tcode::to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<double> grad() {
    if (!grad_) grad_.emplace(data_.size(), 0.0);
    return *grad_;
  }
  std::span<const double> grad() const {
    if (!grad_) throw ContractViolation("tensor has no gradient buffer");
    return *grad_;
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
  }
  void drop_grad() { grad_.reset(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  Shape shape_;
  Buffer data_;
  std::optional<Buffer> grad_;
};

inline void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw DimensionError(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                         to_string(t.shape()));
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(t.shape()));
  }
}

}  // namespace tcode

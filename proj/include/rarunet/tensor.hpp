#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "rarunet/error.hpp"

namespace rarunet {

/// Dimensions of a tensor, outermost first. Rank is 1 to 4; NCHW operations
/// require rank 4.
using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Allocator with cache-line alignment. Vectorised kernels pick their
/// summation order from the buffer address, so fixed alignment keeps results
/// bit-reproducible regardless of heap state.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct TensorImpl {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

/// Reference-counted handle to dense storage plus an optional gradient.
///
/// Copying a Tensor shares the storage; use clone() for an independent copy.
/// A default-constructed Tensor is empty and converts to false.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<T> values, bool requires_grad = false);

  explicit operator bool() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  int dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  const Buffer<T>& values() const { return impl_->data; }
  std::vector<T> to_vector() const { return {impl_->data.begin(), impl_->data.end()}; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }
  /// Allocates a zero gradient when absent.
  std::span<T> ensure_grad();
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  T& at(int n, int c, int h, int w);
  T at(int n, int c, int h, int w) const;
  T item() const;

  Tensor clone() const;
  /// Converts precision; the result never requires grad.
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return Tensor<U>::from(impl_->shape, std::move(out));
  }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Ordered record of the operations applied since the last reset.
///
/// Operations append a backward rule whenever one of their operands requires
/// a gradient and recording is enabled. Creation order is a topological
/// order, so backward() replays the rules in reverse.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// True when an operation over these operands must be recorded.
  bool tracks(std::initializer_list<const Tensor<T>*> operands) const;

  void record(std::function<void()> backward) { nodes_.push_back(std::move(backward)); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable operand.
  /// Gradients accumulate into existing buffers.
  void backward(Tensor<T>& loss);

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  bool recording_;
  bool backward_done_ = false;
  std::vector<std::function<void()>> nodes_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace rarunet

#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lnet {

/// Four-dimensional extent. Activations use (batch, height, width, channels);
/// convolution kernels reuse the same slots as (kh, kw, in, out).
struct Shape {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w) * static_cast<std::size_t>(c);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Cache-line aligned storage. Vectorised reductions peel a data-dependent
/// number of leading elements on unaligned buffers, which would make results
/// depend on where the allocator happened to place them.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

/// Dense channels-last array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int b, int y, int x, int ch) const {
    return ((static_cast<std::size_t>(b) * shape_.h + y) * shape_.w + x) * shape_.c + ch;
  }
  double& operator()(int b, int y, int x, int ch) { return data_[index(b, y, x, ch)]; }
  double operator()(int b, int y, int x, int ch) const { return data_[index(b, y, x, ch)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// Single batch element as a (1, h, w, c) tensor.
  Tensor slice(int b) const;
  /// Stack equally shaped (1, h, w, c) tensors along the batch axis.
  static Tensor stack(std::span<const Tensor> items);

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_{};
  std::vector<double, AlignedAllocator<double>> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace lnet

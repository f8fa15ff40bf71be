#include "lnet/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "lnet/errors.hpp"

namespace lnet {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
         std::to_string(c) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.n < 0 || shape.h < 0 || shape.w < 0 || shape.c < 0) {
    throw ShapeError("negative tensor extent " + shape.str());
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape.size()) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                     shape.str());
  }
}

Tensor Tensor::slice(int b) const {
  if (b < 0 || b >= shape_.n) throw ShapeError("batch index out of range");
  Tensor out({1, shape_.h, shape_.w, shape_.c});
  const std::size_t per = out.size();
  std::memcpy(out.data(), data_.data() + per * static_cast<std::size_t>(b), per * sizeof(double));
  return out;
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) return {};
  Shape s = items.front().shape();
  if (s.n != 1) throw ShapeError("stack expects (1,h,w,c) items");
  Tensor out({static_cast<int>(items.size()), s.h, s.w, s.c});
  const std::size_t per = items.front().size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].shape() != s) throw ShapeError("stack: inconsistent item shapes");
    std::memcpy(out.data() + per * i, items[i].data(), per * sizeof(double));
  }
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

}  // namespace lnet

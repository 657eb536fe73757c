#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mznav/common.hpp"

namespace mznav::nn {

// Dense row-major tensor. Image-like data is stored channel-last: a batch of
// frames is {N, H, W, C} and the innermost stride is the channel.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;

  explicit BasicTensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), T(0));
  }

  BasicTensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_numel(shape_)) {
      throw ContractError("tensor: data size does not match shape");
    }
  }

  static BasicTensor full(std::vector<int> shape, T value) {
    BasicTensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  // In-place reshape; element count must be preserved.
  void set_shape(std::vector<int> shape) {
    if (checked_numel(shape) != numel()) {
      throw ContractError("tensor: reshape changes element count");
    }
    shape_ = std::move(shape);
  }

  BasicTensor reshaped(std::vector<int> shape) const {
    BasicTensor t = *this;
    t.set_shape(std::move(shape));
    return t;
  }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = static_cast<U>(data_[i]);
    }
    return BasicTensor<U>(shape_, std::move(out));
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << ",";
      os << shape_[i];
    }
    os << "}";
    return os.str();
  }

 private:
  static std::int64_t checked_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ContractError("tensor: dimensions must be positive");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace mznav::nn

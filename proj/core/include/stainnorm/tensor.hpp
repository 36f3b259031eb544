#ifndef STAINNORM_TENSOR_HPP
#define STAINNORM_TENSOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stainnorm/errors.hpp"

namespace stainnorm {

// Dense row-major tensor of rank <= 4. Images and feature maps are
// stored H x W x C; convolution weights kH x kW x Cin x Cout.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(numel_of(shape_)) != data_.size()) {
      throw ShapeMismatch("tensor data size does not match shape");
    }
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Rank-3 access (y, x, c).
  T& at(int y, int x, int c) {
    return data_[static_cast<std::size_t>((static_cast<std::int64_t>(y) * shape_[1] + x) * shape_[2] + c)];
  }
  const T& at(int y, int x, int c) const {
    return data_[static_cast<std::size_t>((static_cast<std::int64_t>(y) * shape_[1] + x) * shape_[2] + c)];
  }

  // Rank-4 access (i, j, k, l).
  T& at4(int i, int j, int k, int l) {
    return data_[static_cast<std::size_t>(
        ((static_cast<std::int64_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  const T& at4(int i, int j, int k, int l) const {
    return data_[static_cast<std::size_t>(
        ((static_cast<std::int64_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
  T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<U>(data_[i]);
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << ",";
      os << shape_[i];
    }
    os << "]";
    return os.str();
  }

  static std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = shape.empty() ? 0 : 1;
    for (int d : shape) {
      if (d < 0) throw ShapeMismatch("negative tensor extent");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

// Declared value range of a feature grid.
enum class ValueRange { kUnbounded, kZeroOne, kSymmetricOne };

// H x W x C numeric array with a declared range; the universal carrier
// for images, activations and guidance maps.
template <typename T>
struct FeatureGrid {
  Tensor<T> data;
  ValueRange range = ValueRange::kUnbounded;

  FeatureGrid() = default;
  FeatureGrid(Tensor<T> d, ValueRange r) : data(std::move(d)), range(r) { validate(); }

  int height() const { return data.dim(0); }
  int width() const { return data.dim(1); }
  int channels() const { return data.dim(2); }

  void validate() const {
    if (data.rank() != 3) throw ShapeMismatch("feature grid must be H x W x C, got " + data.shape_str());
    if (data.dim(0) < 1 || data.dim(1) < 1 || data.dim(2) < 1) {
      throw ShapeMismatch("feature grid extents must be >= 1, got " + data.shape_str());
    }
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    if (range == ValueRange::kZeroOne) { lo = 0.0; hi = 1.0; }
    if (range == ValueRange::kSymmetricOne) { lo = -1.0; hi = 1.0; }
    for (std::int64_t i = 0; i < data.numel(); ++i) {
      double v = static_cast<double>(data[i]);
      if (!std::isfinite(v)) throw InvalidInput("feature grid contains a non-finite value");
      if (v < lo || v > hi) {
        throw InvalidInput("feature grid value " + std::to_string(v) + " outside declared range");
      }
    }
  }
};

}  // namespace stainnorm

#endif

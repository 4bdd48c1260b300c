#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dymixop/error.hpp"
#include "dymixop/parallel.hpp"

namespace dymixop {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ')';
  return out.str();
}

/// Dense row-major array. Model tensors are laid out as (batch, channel,
/// spatial...). Complex tensors store interleaved (re, im) pairs, so the
/// storage length is twice the element count.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : Tensor(zeros(std::move(shape))) {
    std::fill(data_.begin(), data_.end(), fill);
  }

  Tensor(Shape shape, std::vector<T> data, bool complex = false)
      : shape_(std::move(shape)), data_(std::move(data)), complex_(complex) {
    for (auto e : shape_) require(e > 0, ErrorKind::shape, "tensor extents must be positive, got " + shape_str(shape_));
    require(data_.size() == shape_numel(shape_) * (complex_ ? 2 : 1), ErrorKind::shape,
            "data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape, bool complex = false) {
    for (auto e : shape) require(e > 0, ErrorKind::shape, "tensor extents must be positive, got " + shape_str(shape));
    const std::size_t n = shape_numel(shape) * (complex ? 2 : 1);
    return Tensor(std::move(shape), std::vector<T>(n), complex);
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return complex_ ? data_.size() / 2 : data_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_complex() const noexcept { return complex_; }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    require(data_.size() == 1, ErrorKind::shape, "item() needs a single-element tensor, got " + shape_str(shape_));
    return data_[0];
  }

  std::complex<T> complex_at(std::size_t i) const { return {data_[2 * i], data_[2 * i + 1]}; }

  bool same_layout(const Tensor& other) const noexcept {
    return shape_ == other.shape_ && complex_ == other.complex_;
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out), complex_);
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  bool complex_ = false;
};

template <typename T>
void require_same_layout(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_layout(b)) {
    fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + shape_str(a.shape()) + (a.is_complex() ? "c" : "") +
                               " vs " + shape_str(b.shape()) + (b.is_complex() ? "c" : ""));
  }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_layout(a, b, "add");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_layout(a, b, "sub");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <typename T>
Tensor<T> scale(T alpha, const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.values()) v *= alpha;
  return out;
}

/// alpha * x + y
template <typename T>
Tensor<T> axpy(T alpha, const Tensor<T>& x, const Tensor<T>& y) {
  require_same_layout(x, y, "axpy");
  Tensor<T> out = y;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * x[i];
  return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_layout(a, b, "hadamard");
  Tensor<T> out = a;
  if (a.is_complex()) {
    for (std::size_t i = 0; i < a.numel(); ++i) {
      const T ar = a[2 * i], ai = a[2 * i + 1], br = b[2 * i], bi = b[2 * i + 1];
      out[2 * i] = ar * br - ai * bi;
      out[2 * i + 1] = ar * bi + ai * br;
    }
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  }
  return out;
}

template <typename T>
double sum_all(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  return acc;
}

template <typename T>
double mean_all(const Tensor<T>& x) {
  return sum_all(x) / static_cast<double>(x.size());
}

template <typename T>
double max_abs(const Tensor<T>& x) {
  double m = 0.0;
  for (T v : x.values()) m = std::max(m, static_cast<double>(v < T(0) ? -v : v));
  return m;
}

/// Number of grid points per channel for a (batch, channel, spatial...) tensor.
inline std::size_t points_per_channel(const Shape& shape) {
  return std::accumulate(shape.begin() + 2, shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Kernel-size-1 convolution: out[b, j, x] = sum_i W[j, i] x[b, i, x] + bias[j].
template <typename T>
Tensor<T> channel_map(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require(!x.is_complex() && !weight.is_complex() && !bias.is_complex(), ErrorKind::shape,
          "channel_map: real tensors only");
  require(x.rank() >= 2, ErrorKind::shape, "channel_map: input must be (batch, channel, ...), got " + shape_str(x.shape()));
  require(weight.rank() == 2, ErrorKind::shape, "channel_map: weight must be (out, in), got " + shape_str(weight.shape()));
  const std::size_t c_out = weight.extent(0), c_in = weight.extent(1);
  if (x.extent(1) != c_in) {
    fail(ErrorKind::shape, "channel_map: input " + shape_str(x.shape()) + " has " + std::to_string(x.extent(1)) +
                               " channels but weight " + shape_str(weight.shape()) + " expects " + std::to_string(c_in));
  }
  require(bias.shape() == Shape{c_out}, ErrorKind::shape,
          "channel_map: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(c_out) + " outputs");
  const std::size_t batch = x.extent(0), points = points_per_channel(x.shape());
  Shape out_shape = x.shape();
  out_shape[1] = c_out;
  Tensor<T> out(out_shape);
  const T* w = weight.data();
  const T* in = x.data();
  T* o = out.data();
  parallel_for(static_cast<std::ptrdiff_t>(batch * c_out), [&](std::ptrdiff_t idx) {
    const std::size_t b = static_cast<std::size_t>(idx) / c_out, j = static_cast<std::size_t>(idx) % c_out;
    T* row = o + (b * c_out + j) * points;
    std::fill(row, row + points, bias[j]);
    for (std::size_t i = 0; i < c_in; ++i) {
      const T wji = w[j * c_in + i];
      const T* src = in + (b * c_in + i) * points;
      for (std::size_t p = 0; p < points; ++p) row[p] += wji * src[p];
    }
  });
  return out;
}

/// Channels [begin, begin + count) of a (batch, channel, ...) tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  require(x.rank() >= 2 && count > 0 && begin + count <= x.extent(1), ErrorKind::shape,
          "slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") out of " +
              shape_str(x.shape()));
  const std::size_t width = x.size() / (x.extent(0) * x.extent(1));
  Shape out_shape = x.shape();
  out_shape[1] = count;
  auto out = Tensor<T>::zeros(out_shape, x.is_complex());
  for (std::size_t b = 0; b < x.extent(0); ++b) {
    const T* src = x.data() + (b * x.extent(1) + begin) * width;
    std::copy(src, src + count * width, out.data() + b * count * width);
  }
  return out;
}

/// Stacks tensors along the channel axis in argument order.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), ErrorKind::shape, "concat_channels: nothing to concatenate");
  const Tensor<T>& first = parts.front();
  require(first.rank() >= 2, ErrorKind::shape, "concat_channels: rank must be >= 2");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.rank() && p.is_complex() == first.is_complex() && p.extent(0) == first.extent(0) &&
              std::equal(p.shape().begin() + 2, p.shape().end(), first.shape().begin() + 2);
    if (!ok) fail(ErrorKind::shape, "concat_channels: shape mismatch " + shape_str(first.shape()) + " vs " + shape_str(p.shape()));
    channels += p.extent(1);
  }
  Shape out_shape = first.shape();
  out_shape[1] = channels;
  auto out = Tensor<T>::zeros(out_shape, first.is_complex());
  const std::size_t batch = first.extent(0);
  T* dst = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (const auto& p : parts) {
      const std::size_t chunk = p.size() / batch;
      const T* src = p.data() + b * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat_channels<T>(std::span<const Tensor<T>>(v));
}

}  // namespace dymixop

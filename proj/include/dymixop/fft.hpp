#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include "dymixop/tensor.hpp"

namespace dymixop::fft {

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline void require_power_of_two(std::size_t n, const char* what) {
  if (!is_power_of_two(n)) {
    fail(ErrorKind::shape, std::string(what) + ": extent " + std::to_string(n) + " is not a power of two");
  }
}

/// exp(-2 pi i k / n) for k < n/2, computed in double and cached per thread.
template <typename T>
const std::vector<std::complex<T>>& twiddles(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::vector<std::complex<T>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<T>> w(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle))};
  }
  return cache.emplace(n, std::move(w)).first->second;
}

/// In-place iterative radix-2 Cooley-Tukey. Unnormalized in both directions;
/// `inverse` selects the exp(+2 pi i kn/N) kernel.
template <typename T>
void transform(std::span<std::complex<T>> a, bool inverse) {
  const std::size_t n = a.size();
  require_power_of_two(n, "fft");
  if (n == 1) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& w = twiddles<T>(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2, stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        std::complex<T> tw = w[k * stride];
        if (inverse) tw = std::conj(tw);
        const std::complex<T> u = a[start + k];
        const std::complex<T> v = a[start + k + half] * tw;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
}

/// Half spectrum (n/2 + 1 bins) of a real row; unnormalized.
template <typename T>
void real_forward(const T* x, std::size_t n, std::complex<T>* half, std::vector<std::complex<T>>& scratch) {
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = {x[i], T(0)};
  transform<T>(scratch, false);
  std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(n / 2 + 1), half);
}

/// Real part of the unnormalized inverse of the Hermitian extension of a half
/// spectrum. Imaginary parts of the DC and Nyquist bins do not contribute.
template <typename T>
void real_inverse(const std::complex<T>* half, std::size_t n, T* x, std::vector<std::complex<T>>& scratch) {
  scratch.assign(n, std::complex<T>{});
  scratch[0] = half[0];
  for (std::size_t k = 1; k < n / 2; ++k) {
    scratch[k] = half[k];
    scratch[n - k] = std::conj(half[k]);
  }
  if (n > 1) scratch[n / 2] = half[n / 2];
  transform<T>(scratch, true);
  for (std::size_t i = 0; i < n; ++i) x[i] = scratch[i].real();
}

inline Shape trailing(const Shape& shape, std::size_t dims) {
  require(dims == 1 || dims == 2, ErrorKind::shape, "fft: only 1 or 2 spatial axes are supported");
  require(shape.size() >= dims, ErrorKind::shape, "fft: rank " + std::to_string(shape.size()) + " below spatial dims");
  return Shape(shape.end() - static_cast<std::ptrdiff_t>(dims), shape.end());
}

/// Real-input FFT over the trailing `dims` axes. The last axis keeps n/2 + 1
/// bins; a leading spatial axis (2D) keeps its full signed wavenumber range.
template <typename T>
Tensor<T> rfft(const Tensor<T>& x, std::size_t dims) {
  require(!x.is_complex(), ErrorKind::shape, "rfft: input must be real");
  const Shape spatial = trailing(x.shape(), dims);
  for (auto n : spatial) require_power_of_two(n, "rfft");
  const std::size_t n_last = spatial.back(), half = n_last / 2 + 1;
  const std::size_t n_rows = dims == 2 ? spatial[0] : 1;
  const std::size_t slabs = x.size() / (n_rows * n_last);
  Shape out_shape = x.shape();
  out_shape.back() = half;
  auto out = Tensor<T>::zeros(out_shape, true);
  auto* spec = reinterpret_cast<std::complex<T>*>(out.data());
  parallel_for(static_cast<std::ptrdiff_t>(slabs), [&](std::ptrdiff_t s) {
    std::vector<std::complex<T>> scratch, column(n_rows);
    const T* src = x.data() + static_cast<std::size_t>(s) * n_rows * n_last;
    std::complex<T>* dst = spec + static_cast<std::size_t>(s) * n_rows * half;
    for (std::size_t r = 0; r < n_rows; ++r) real_forward(src + r * n_last, n_last, dst + r * half, scratch);
    if (n_rows > 1) {
      for (std::size_t c = 0; c < half; ++c) {
        for (std::size_t r = 0; r < n_rows; ++r) column[r] = dst[r * half + c];
        transform<T>(column, false);
        for (std::size_t r = 0; r < n_rows; ++r) dst[r * half + c] = column[r];
      }
    }
  });
  return out;
}

/// Inverse of rfft, normalized by the total number of grid points.
/// `spatial` holds the output extents of the trailing axes.
template <typename T>
Tensor<T> irfft(const Tensor<T>& spectrum, const Shape& spatial) {
  require(spectrum.is_complex(), ErrorKind::shape, "irfft: input must be complex");
  const std::size_t dims = spatial.size();
  const Shape in_spatial = trailing(spectrum.shape(), dims);
  for (auto n : spatial) require_power_of_two(n, "irfft");
  const std::size_t n_last = spatial.back(), half = n_last / 2 + 1;
  const std::size_t n_rows = dims == 2 ? spatial[0] : 1;
  if (in_spatial.back() != half || (dims == 2 && in_spatial[0] != n_rows)) {
    fail(ErrorKind::shape, "irfft: spectrum " + shape_str(spectrum.shape()) + " inconsistent with output extents " +
                               shape_str(spatial));
  }
  const std::size_t slabs = spectrum.numel() / (n_rows * half);
  Shape out_shape = spectrum.shape();
  std::copy(spatial.begin(), spatial.end(), out_shape.end() - static_cast<std::ptrdiff_t>(dims));
  Tensor<T> out(out_shape);
  const auto* spec = reinterpret_cast<const std::complex<T>*>(spectrum.data());
  const T norm = T(1) / static_cast<T>(n_rows * n_last);
  parallel_for(static_cast<std::ptrdiff_t>(slabs), [&](std::ptrdiff_t s) {
    std::vector<std::complex<T>> scratch, work(spec + static_cast<std::size_t>(s) * n_rows * half,
                                               spec + static_cast<std::size_t>(s + 1) * n_rows * half),
        column(n_rows);
    if (n_rows > 1) {
      for (std::size_t c = 0; c < half; ++c) {
        for (std::size_t r = 0; r < n_rows; ++r) column[r] = work[r * half + c];
        transform<T>(column, true);
        for (std::size_t r = 0; r < n_rows; ++r) work[r * half + c] = column[r];
      }
    }
    T* dst = out.data() + static_cast<std::size_t>(s) * n_rows * n_last;
    for (std::size_t r = 0; r < n_rows; ++r) {
      real_inverse(work.data() + r * half, n_last, dst + r * n_last, scratch);
      for (std::size_t i = 0; i < n_last; ++i) dst[r * n_last + i] *= norm;
    }
  });
  return out;
}

}  // namespace dymixop::fft

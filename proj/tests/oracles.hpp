#pragma once

// Reference computations used only by tests. Nothing here calls into the
// library's FFT, spectral or autodiff code paths.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "dymixop/tensor.hpp"

namespace oracle {

using cd = std::complex<double>;

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline dymixop::Tensor<double> random_tensor(const dymixop::Shape& shape, std::mt19937_64& rng, bool complex = false,
                                             double lo = -1.0, double hi = 1.0) {
  std::size_t n = dymixop::shape_numel(shape) * (complex ? 2 : 1);
  return dymixop::Tensor<double>(shape, random_vector(n, rng, lo, hi), complex);
}

/// O(N^2) DFT with exp(-2 pi i k n / N).
inline std::vector<cd> dft(const std::vector<cd>& x, bool inverse = false) {
  const std::size_t n = x.size();
  std::vector<cd> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    cd acc{};
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += x[j] * cd(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<cd> dft_real(const std::vector<double>& x) {
  std::vector<cd> c(x.begin(), x.end());
  return dft(c);
}

/// 2D DFT of a row-major n0 x n1 array.
inline std::vector<cd> dft2(const std::vector<cd>& x, std::size_t n0, std::size_t n1, bool inverse = false) {
  std::vector<cd> tmp(x.size()), out(x.size());
  for (std::size_t r = 0; r < n0; ++r) {
    std::vector<cd> row(x.begin() + static_cast<std::ptrdiff_t>(r * n1), x.begin() + static_cast<std::ptrdiff_t>((r + 1) * n1));
    auto f = dft(row, inverse);
    std::copy(f.begin(), f.end(), tmp.begin() + static_cast<std::ptrdiff_t>(r * n1));
  }
  for (std::size_t c = 0; c < n1; ++c) {
    std::vector<cd> col(n0);
    for (std::size_t r = 0; r < n0; ++r) col[r] = tmp[r * n1 + c];
    auto f = dft(col, inverse);
    for (std::size_t r = 0; r < n0; ++r) out[r * n1 + c] = f[r];
  }
  return out;
}

/// Signed wavenumber of DFT bin k on a grid of n points.
inline long signed_mode(std::size_t k, std::size_t n) {
  return k <= n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

template <typename T>
double rel_err(const dymixop::Tensor<T>& a, const dymixop::Tensor<T>& b) {
  std::vector<double> x(a.values().begin(), a.values().end()), y(b.values().begin(), b.values().end());
  return rel_err(x, y);
}

/// Triple loop over (batch, out, point) for the kernel-size-1 convolution.
inline dymixop::Tensor<double> channel_map(const dymixop::Tensor<double>& x, const dymixop::Tensor<double>& w,
                                           const dymixop::Tensor<double>& b) {
  const std::size_t batch = x.extent(0), c_in = x.extent(1), c_out = w.extent(0);
  const std::size_t pts = x.numel() / (batch * c_in);
  dymixop::Shape shape = x.shape();
  shape[1] = c_out;
  dymixop::Tensor<double> out(shape);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t j = 0; j < c_out; ++j)
      for (std::size_t p = 0; p < pts; ++p) {
        double acc = b[j];
        for (std::size_t i = 0; i < c_in; ++i) acc += w[j * c_in + i] * x[(n * c_in + i) * pts + p];
        out[(n * c_out + j) * pts + p] = acc;
      }
  return out;
}

/// Truncated spectral mixing in 1D through the convolution theorem using the
/// naive DFT: keep bins k < modes (and their conjugate mirrors), mix channels
/// with W[k] (modes, d_out, d_in), invert.
inline dymixop::Tensor<double> spectral_multiply_1d(const dymixop::Tensor<double>& x, const dymixop::Tensor<double>& w,
                                                    std::size_t modes) {
  const std::size_t batch = x.extent(0), d_in = x.extent(1), n = x.extent(2), d_out = w.extent(1);
  dymixop::Tensor<double> out({batch, d_out, n});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<std::vector<cd>> spec(d_in);
    for (std::size_t i = 0; i < d_in; ++i) {
      std::vector<double> row(x.data() + (b * d_in + i) * n, x.data() + (b * d_in + i + 1) * n);
      spec[i] = dft_real(row);
    }
    for (std::size_t o = 0; o < d_out; ++o) {
      std::vector<cd> y(n, cd{});
      for (std::size_t k = 0; k < modes; ++k) {
        cd acc{};
        for (std::size_t i = 0; i < d_in; ++i) {
          const std::size_t idx = (k * d_out + o) * d_in + i;
          acc += cd(w[2 * idx], w[2 * idx + 1]) * spec[i][k];
        }
        y[k] = acc;
      }
      // Real output: Hermitian completion of the retained half spectrum.
      std::vector<cd> full(n, cd{});
      full[0] = cd(y[0].real(), 0.0);
      for (std::size_t k = 1; k < modes && k < n; ++k) {
        if (2 * k == n) {
          full[k] = cd(y[k].real(), 0.0);
        } else if (2 * k < n) {
          full[k] = y[k];
          full[n - k] = std::conj(y[k]);
        }
      }
      auto inv = dft(full, true);
      for (std::size_t p = 0; p < n; ++p) out[(b * d_out + o) * n + p] = inv[p].real() / static_cast<double>(n);
    }
  }
  return out;
}

}  // namespace oracle

#pragma once

#include <complex>
#include <cstddef>
#include <random>
#include <vector>

#include "dymixop/fft.hpp"
#include "dymixop/tensor.hpp"

namespace dymixop {

/// Trainable truncated Fourier coefficients of a global kernel.
///
/// 1D weights have shape (m, d_out, d_in). 2D weights have shape
/// (2 m0, m1, d_out, d_in): the leading axis keeps wavenumbers [0, m0) and
/// [N0 - m0, N0), the last axis keeps the half-spectrum bins [0, m1).
/// With `diagonal` the two channel axes collapse into one (d_out == d_in).
template <typename T>
struct SpectralWeights {
  std::vector<std::size_t> modes;
  bool diagonal = false;
  Tensor<T> values;

  std::size_t row_modes() const { return modes.size() == 2 ? 2 * modes[0] : 1; }
  std::size_t col_modes() const { return modes.back(); }
  std::size_t mode_count() const { return row_modes() * col_modes(); }
  std::size_t d_out() const { return diagonal ? values.shape().back() : values.shape()[values.rank() - 2]; }
  std::size_t d_in() const { return values.shape().back(); }

  static Shape shape_for(const std::vector<std::size_t>& modes, std::size_t d_in, std::size_t d_out, bool diagonal) {
    require(modes.size() == 1 || modes.size() == 2, ErrorKind::shape, "spectral weights: 1 or 2 spatial axes");
    for (auto m : modes) require(m > 0, ErrorKind::shape, "spectral weights: retained modes must be positive");
    require(!diagonal || d_in == d_out, ErrorKind::shape, "spectral weights: diagonal kernel needs d_in == d_out");
    Shape shape = modes.size() == 2 ? Shape{2 * modes[0], modes[1]} : Shape{modes[0]};
    if (!diagonal) shape.push_back(d_out);
    shape.push_back(d_in);
    return shape;
  }

  /// Each real and imaginary part uniform in [-s, s], s = 1 / (d_in d_out).
  template <typename Rng>
  static SpectralWeights random(const std::vector<std::size_t>& modes, std::size_t d_in, std::size_t d_out,
                                bool diagonal, Rng& rng) {
    SpectralWeights w{modes, diagonal, Tensor<T>::zeros(shape_for(modes, d_in, d_out, diagonal), true)};
    const double s = 1.0 / static_cast<double>(d_in * d_out);
    std::uniform_real_distribution<double> dist(-s, s);
    for (auto& v : w.values.values()) v = static_cast<T>(dist(rng));
    return w;
  }

  static SpectralWeights identity(const std::vector<std::size_t>& modes, std::size_t d, bool diagonal = false) {
    SpectralWeights w{modes, diagonal, Tensor<T>::zeros(shape_for(modes, d, d, diagonal), true)};
    const std::size_t q_count = w.mode_count();
    for (std::size_t q = 0; q < q_count; ++q) {
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t idx = diagonal ? q * d + c : (q * d + c) * d + c;
        w.values[2 * idx] = T(1);
      }
    }
    return w;
  }
};

namespace detail {

/// Grid-dependent bookkeeping shared by the forward and adjoint passes.
struct SpectralGrid {
  std::size_t n_rows = 1, n_last = 0, half = 0;
  std::size_t row_modes = 1, col_modes = 0;
  std::vector<std::size_t> row_index;  // retained row slot -> wavenumber row

  SpectralGrid(const Shape& spatial, const std::vector<std::size_t>& modes) {
    require(spatial.size() == modes.size(), ErrorKind::shape,
            "spectral: weights cover " + std::to_string(modes.size()) + " spatial axes, input has " +
                std::to_string(spatial.size()));
    for (auto n : spatial) fft::require_power_of_two(n, "spectral");
    n_last = spatial.back();
    half = n_last / 2 + 1;
    col_modes = modes.back();
    require(col_modes <= half, ErrorKind::shape,
            "spectral: " + std::to_string(col_modes) + " modes exceed the " + std::to_string(half) +
                " half-spectrum bins of a grid of " + std::to_string(n_last));
    if (spatial.size() == 2) {
      n_rows = spatial[0];
      require(2 * modes[0] <= n_rows, ErrorKind::shape,
              "spectral: " + std::to_string(modes[0]) + " modes do not fit a leading axis of " + std::to_string(n_rows));
      row_modes = 2 * modes[0];
      for (std::size_t r = 0; r < row_modes; ++r) row_index.push_back(r < modes[0] ? r : n_rows - row_modes + r);
    } else {
      row_index = {0};
    }
  }

  std::size_t mode_count() const { return row_modes * col_modes; }
  std::size_t points() const { return n_rows * n_last; }

  bool self_conjugate(std::size_t c) const { return c == 0 || 2 * c == n_last; }
};

inline Shape spatial_of(const Shape& shape) { return Shape(shape.begin() + 2, shape.end()); }

}  // namespace detail

/// Forward result keeping the truncated input spectrum for the adjoint pass.
template <typename T>
struct SpectralResult {
  Tensor<T> out;
  std::vector<std::complex<T>> input_modes;  // (batch, d_in, retained modes)
};

/// out = irfft(W[k] * rfft(c)[k] for retained k, zero elsewhere).
template <typename T>
SpectralResult<T> spectral_forward(const Tensor<T>& x, const SpectralWeights<T>& w) {
  require(!x.is_complex() && x.rank() >= 3, ErrorKind::shape,
          "spectral_multiply: input must be real (batch, channel, spatial...), got " + shape_str(x.shape()));
  const detail::SpectralGrid grid(detail::spatial_of(x.shape()), w.modes);
  const std::size_t batch = x.extent(0), d_in = w.d_in(), d_out = w.d_out();
  if (x.extent(1) != d_in) {
    fail(ErrorKind::shape, "spectral_multiply: input " + shape_str(x.shape()) + " has " + std::to_string(x.extent(1)) +
                               " channels, weights expect " + std::to_string(d_in));
  }
  require(w.values.shape() == SpectralWeights<T>::shape_for(w.modes, d_in, d_out, w.diagonal), ErrorKind::shape,
          "spectral_multiply: weight shape " + shape_str(w.values.shape()) + " inconsistent with modes");
  const std::size_t q_count = grid.mode_count(), points = grid.points();
  using C = std::complex<T>;

  SpectralResult<T> result;
  result.input_modes.assign(batch * d_in * q_count, C{});
  parallel_for(static_cast<std::ptrdiff_t>(batch * d_in), [&](std::ptrdiff_t s) {
    std::vector<C> scratch, slab(grid.n_rows * grid.half), column(grid.n_rows);
    const T* src = x.data() + static_cast<std::size_t>(s) * points;
    for (std::size_t r = 0; r < grid.n_rows; ++r) {
      fft::real_forward(src + r * grid.n_last, grid.n_last, slab.data() + r * grid.half, scratch);
    }
    C* dst = result.input_modes.data() + static_cast<std::size_t>(s) * q_count;
    for (std::size_t c = 0; c < grid.col_modes; ++c) {
      if (grid.n_rows > 1) {
        for (std::size_t r = 0; r < grid.n_rows; ++r) column[r] = slab[r * grid.half + c];
        fft::transform<T>(column, false);
        for (std::size_t q = 0; q < grid.row_modes; ++q) dst[q * grid.col_modes + c] = column[grid.row_index[q]];
      } else {
        dst[c] = slab[c];
      }
    }
  });

  const auto* wv = reinterpret_cast<const C*>(w.values.data());
  std::vector<C> mixed(batch * d_out * q_count);
  parallel_for(static_cast<std::ptrdiff_t>(batch * d_out), [&](std::ptrdiff_t s) {
    const std::size_t b = static_cast<std::size_t>(s) / d_out, o = static_cast<std::size_t>(s) % d_out;
    C* dst = mixed.data() + static_cast<std::size_t>(s) * q_count;
    const C* xb = result.input_modes.data() + b * d_in * q_count;
    for (std::size_t q = 0; q < q_count; ++q) {
      if (w.diagonal) {
        dst[q] = wv[q * d_out + o] * xb[o * q_count + q];
      } else {
        C acc{};
        const C* wrow = wv + (q * d_out + o) * d_in;
        for (std::size_t i = 0; i < d_in; ++i) acc += wrow[i] * xb[i * q_count + q];
        dst[q] = acc;
      }
    }
  });

  Shape out_shape = x.shape();
  out_shape[1] = d_out;
  result.out = Tensor<T>(out_shape);
  const T norm = T(1) / static_cast<T>(points);
  parallel_for(static_cast<std::ptrdiff_t>(batch * d_out), [&](std::ptrdiff_t s) {
    std::vector<C> scratch, slab(grid.n_rows * grid.half, C{}), column(grid.n_rows);
    const C* spec = mixed.data() + static_cast<std::size_t>(s) * q_count;
    for (std::size_t c = 0; c < grid.col_modes; ++c) {
      if (grid.n_rows > 1) {
        std::fill(column.begin(), column.end(), C{});
        for (std::size_t q = 0; q < grid.row_modes; ++q) column[grid.row_index[q]] = spec[q * grid.col_modes + c];
        fft::transform<T>(column, true);
        for (std::size_t r = 0; r < grid.n_rows; ++r) slab[r * grid.half + c] = column[r];
      } else {
        slab[c] = spec[c];
      }
    }
    T* dst = result.out.data() + static_cast<std::size_t>(s) * points;
    for (std::size_t r = 0; r < grid.n_rows; ++r) {
      fft::real_inverse(slab.data() + r * grid.half, grid.n_last, dst + r * grid.n_last, scratch);
    }
    for (std::size_t p = 0; p < points; ++p) dst[p] *= norm;
  });
  return result;
}

template <typename T>
Tensor<T> spectral_multiply(const Tensor<T>& x, const SpectralWeights<T>& w) {
  return spectral_forward(x, w).out;
}

/// Adjoint of spectral_forward. Complex weights are treated as independent
/// (re, im) real pairs: grad_w holds (dL/dRe w, dL/dIm w) interleaved.
template <typename T>
void spectral_backward(const Tensor<T>& grad_out, const SpectralWeights<T>& w,
                       const std::vector<std::complex<T>>& input_modes, Tensor<T>* grad_x, Tensor<T>* grad_w) {
  using C = std::complex<T>;
  const detail::SpectralGrid grid(detail::spatial_of(grad_out.shape()), w.modes);
  const std::size_t batch = grad_out.extent(0), d_in = w.d_in(), d_out = w.d_out();
  const std::size_t q_count = grid.mode_count(), points = grid.points();

  // Adjoint of the truncated inverse transform.
  std::vector<C> grad_mixed(batch * d_out * q_count);
  const T inv_points = T(1) / static_cast<T>(points);
  parallel_for(static_cast<std::ptrdiff_t>(batch * d_out), [&](std::ptrdiff_t s) {
    std::vector<C> scratch, slab(grid.n_rows * grid.half), column(grid.n_rows);
    const T* src = grad_out.data() + static_cast<std::size_t>(s) * points;
    for (std::size_t r = 0; r < grid.n_rows; ++r) {
      fft::real_forward(src + r * grid.n_last, grid.n_last, slab.data() + r * grid.half, scratch);
    }
    C* dst = grad_mixed.data() + static_cast<std::size_t>(s) * q_count;
    for (std::size_t c = 0; c < grid.col_modes; ++c) {
      const bool self_conj = grid.self_conjugate(c);
      const T weight = (self_conj ? T(1) : T(2)) * inv_points;
      for (std::size_t r = 0; r < grid.n_rows; ++r) {
        C v = slab[r * grid.half + c];
        if (self_conj) v = C(v.real(), T(0));
        column[r] = v * weight;
      }
      if (grid.n_rows > 1) {
        fft::transform<T>(column, false);
        for (std::size_t q = 0; q < grid.row_modes; ++q) dst[q * grid.col_modes + c] = column[grid.row_index[q]];
      } else {
        dst[c] = column[0];
      }
    }
  });

  const auto* wv = reinterpret_cast<const C*>(w.values.data());
  if (grad_w) {
    if (!grad_w->same_layout(w.values)) *grad_w = Tensor<T>::zeros(w.values.shape(), true);
    auto* gw = reinterpret_cast<C*>(grad_w->data());
    const std::size_t per_mode = w.diagonal ? d_out : d_out * d_in;
    parallel_for(static_cast<std::ptrdiff_t>(q_count), [&](std::ptrdiff_t qs) {
      const std::size_t q = static_cast<std::size_t>(qs);
      for (std::size_t e = 0; e < per_mode; ++e) {
        const std::size_t o = w.diagonal ? e : e / d_in, i = w.diagonal ? e : e % d_in;
        C acc{};
        for (std::size_t b = 0; b < batch; ++b) {
          acc += grad_mixed[(b * d_out + o) * q_count + q] * std::conj(input_modes[(b * d_in + i) * q_count + q]);
        }
        gw[q * per_mode + e] += acc;
      }
    });
  }
  if (!grad_x) return;

  std::vector<C> grad_modes(batch * d_in * q_count);
  parallel_for(static_cast<std::ptrdiff_t>(batch * d_in), [&](std::ptrdiff_t s) {
    const std::size_t b = static_cast<std::size_t>(s) / d_in, i = static_cast<std::size_t>(s) % d_in;
    C* dst = grad_modes.data() + static_cast<std::size_t>(s) * q_count;
    for (std::size_t q = 0; q < q_count; ++q) {
      if (w.diagonal) {
        dst[q] = std::conj(wv[q * d_out + i]) * grad_mixed[(b * d_out + i) * q_count + q];
      } else {
        C acc{};
        for (std::size_t o = 0; o < d_out; ++o) {
          acc += std::conj(wv[(q * d_out + o) * d_in + i]) * grad_mixed[(b * d_out + o) * q_count + q];
        }
        dst[q] = acc;
      }
    }
  });

  // Adjoint of the truncated forward transform.
  Shape in_shape = grad_out.shape();
  in_shape[1] = d_in;
  if (!(grad_x->shape() == in_shape && !grad_x->is_complex())) *grad_x = Tensor<T>(in_shape);
  parallel_for(static_cast<std::ptrdiff_t>(batch * d_in), [&](std::ptrdiff_t s) {
    std::vector<C> scratch, slab(grid.n_rows * grid.half, C{}), column(grid.n_rows);
    std::vector<T> row(grid.n_last);
    const C* spec = grad_modes.data() + static_cast<std::size_t>(s) * q_count;
    for (std::size_t c = 0; c < grid.col_modes; ++c) {
      const T halve = grid.self_conjugate(c) ? T(1) : T(0.5);
      if (grid.n_rows > 1) {
        std::fill(column.begin(), column.end(), C{});
        for (std::size_t q = 0; q < grid.row_modes; ++q) column[grid.row_index[q]] = spec[q * grid.col_modes + c];
        fft::transform<T>(column, true);
        for (std::size_t r = 0; r < grid.n_rows; ++r) slab[r * grid.half + c] = column[r] * halve;
      } else {
        slab[c] = spec[c] * halve;
      }
    }
    T* dst = grad_x->data() + static_cast<std::size_t>(s) * points;
    for (std::size_t r = 0; r < grid.n_rows; ++r) {
      fft::real_inverse(slab.data() + r * grid.half, grid.n_last, row.data(), scratch);
      for (std::size_t p = 0; p < grid.n_last; ++p) dst[r * grid.n_last + p] += row[p];
    }
  });
}

}  // namespace dymixop

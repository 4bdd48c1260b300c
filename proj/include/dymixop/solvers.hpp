#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dymixop/dataset.hpp"
#include "dymixop/fft.hpp"
#include "dymixop/parallel.hpp"

namespace dymixop {

using cplx = std::complex<double>;

enum class Pde { ks1d, burgers1d, darcy2d };

inline std::string to_string(Pde p) {
  switch (p) {
    case Pde::ks1d: return "ks1d";
    case Pde::burgers1d: return "burgers1d";
    case Pde::darcy2d: return "darcy2d";
  }
  return "?";
}

inline Pde parse_pde(const std::string& s) {
  if (s == "ks1d") return Pde::ks1d;
  if (s == "burgers1d") return Pde::burgers1d;
  if (s == "darcy2d") return Pde::darcy2d;
  fail(ErrorKind::config, "unknown pde '" + s + "' (expected ks1d, burgers1d or darcy2d)");
}

struct TrajectorySpec {
  Pde pde = Pde::ks1d;
  std::size_t n = 256;          // output grid points per axis
  std::size_t refine = 1;       // 1D solver grid is n * refine, subsampled on output
  double length = 64.0;         // periodic domain length (1D)
  double nu = 0.01;             // Burgers viscosity
  double dt = 0.05;             // solver step
  std::size_t stride = 5;       // solver steps per snapshot
  std::size_t snapshots = 100;  // frames kept per trajectory
  double burn_in = 50.0;        // time integrated before the first kept frame
  double amplitude = 1.0;       // initial-condition scale (1D)
  std::size_t init_modes = 8;   // initial condition draws Fourier modes 1..init_modes
  std::size_t trajectories = 10;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  double a_high = 12.0, a_low = 3.0;     // Darcy coefficient values
  double grf_tau = 3.0, grf_alpha = 2.0;  // Darcy random-field roughness
  double cg_tol = 1e-10;
  std::size_t cg_max_iter = 20000;

  static TrajectorySpec defaults(Pde pde) {
    TrajectorySpec s;
    s.pde = pde;
    if (pde == Pde::burgers1d) {
      s.n = 128;
      s.refine = 8;
      s.length = 2.0 * std::numbers::pi;
      s.dt = 1e-3;
      s.stride = 200;
      s.snapshots = 6;
      s.burn_in = 0.0;
      s.init_modes = 4;
      s.trajectories = 200;
    } else if (pde == Pde::darcy2d) {
      s.n = 64;
      s.length = 1.0;
      s.snapshots = 2;
      s.trajectories = 100;
    }
    return s;
  }

  void validate() const {
    fft::require_power_of_two(n, "grid");
    require(refine >= 1 && fft::is_power_of_two(refine), ErrorKind::config, "spec: refine must be a power of two");
    require(dt > 0.0 && length > 0.0, ErrorKind::config, "spec: dt and length must be positive");
    require(stride >= 1 && snapshots >= 1 && trajectories >= 1, ErrorKind::config,
            "spec: stride, snapshots and trajectories must be >= 1");
    require(burn_in >= 0.0, ErrorKind::config, "spec: burn_in must be >= 0");
    if (pde == Pde::burgers1d) require(nu > 0.0, ErrorKind::config, "spec: Burgers viscosity must be positive");
    if (pde == Pde::darcy2d) {
      require(a_low > 0.0 && a_high > 0.0, ErrorKind::config, "spec: Darcy coefficients must be positive");
    } else {
      require(init_modes >= 1 && init_modes < n * refine / 3, ErrorKind::config, "spec: init_modes must lie in [1, N/3)");
    }
  }
};

/// Exponential time differencing RK4 for u_t = L u + N(u) on a periodic 1D
/// grid, with N(u) = g(k) F[u^2] and diagonal L, advanced on the half spectrum.
/// The phi-function coefficients come from a 32-point contour average.
class Etdrk4 {
 public:
  Etdrk4(std::size_t n, std::vector<double> linear, std::vector<cplx> g, double dt)
      : n_(n), g_(std::move(g)), e_(linear.size()), e2_(linear.size()), q_(linear.size()), f1_(linear.size()),
        f2_(linear.size()), f3_(linear.size()) {
    fft::require_power_of_two(n, "solver grid");
    constexpr int contour = 32;
    for (std::size_t k = 0; k < linear.size(); ++k) {
      const double hl = dt * linear[k];
      e_[k] = std::exp(hl);
      e2_[k] = std::exp(hl / 2);
      cplx q{}, f1{}, f2{}, f3{};
      for (int j = 0; j < contour; ++j) {
        const cplx r = std::exp(cplx(0.0, std::numbers::pi * (j + 0.5) / contour));
        const cplx z = hl + r, ez = std::exp(z), z3 = z * z * z;
        q += (std::exp(z / 2.0) - 1.0) / z;
        f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
        f2 += (2.0 + z + ez * (z - 2.0)) / z3;
        f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
      }
      q_[k] = dt * q.real() / contour;
      f1_[k] = dt * f1.real() / contour;
      f2_[k] = dt * f2.real() / contour;
      f3_[k] = dt * f3.real() / contour;
    }
  }

  void step(std::vector<cplx>& v) {
    const std::size_t h = v.size();
    nonlinear(v, nv_);
    a_.resize(h);
    for (std::size_t k = 0; k < h; ++k) a_[k] = e2_[k] * v[k] + q_[k] * nv_[k];
    nonlinear(a_, na_);
    b_.resize(h);
    for (std::size_t k = 0; k < h; ++k) b_[k] = e2_[k] * v[k] + q_[k] * na_[k];
    nonlinear(b_, nb_);
    c_.resize(h);
    for (std::size_t k = 0; k < h; ++k) c_[k] = e2_[k] * a_[k] + q_[k] * (2.0 * nb_[k] - nv_[k]);
    nonlinear(c_, nc_);
    for (std::size_t k = 0; k < h; ++k) {
      v[k] = e_[k] * v[k] + nv_[k] * f1_[k] + 2.0 * (na_[k] + nb_[k]) * f2_[k] + nc_[k] * f3_[k];
    }
  }

  std::vector<double> to_grid(const std::vector<cplx>& v) {
    std::vector<double> u(n_);
    fft::real_inverse(v.data(), n_, u.data(), scratch_);
    for (auto& x : u) x /= static_cast<double>(n_);
    return u;
  }

  std::vector<cplx> to_spectrum(const std::vector<double>& u) {
    std::vector<cplx> v(n_ / 2 + 1);
    fft::real_forward(u.data(), n_, v.data(), scratch_);
    return v;
  }

 private:
  void nonlinear(const std::vector<cplx>& v, std::vector<cplx>& out) {
    grid_.resize(n_);
    fft::real_inverse(v.data(), n_, grid_.data(), scratch_);
    const double inv = 1.0 / static_cast<double>(n_);
    for (auto& x : grid_) x = (x * inv) * (x * inv);
    out.resize(v.size());
    fft::real_forward(grid_.data(), n_, out.data(), scratch_);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= g_[k];
  }

  std::size_t n_;
  std::vector<cplx> g_;
  std::vector<double> e_, e2_, q_, f1_, f2_, f3_;
  std::vector<cplx> nv_, na_, nb_, nc_, a_, b_, c_, scratch_;
  std::vector<double> grid_;
};

/// Angular wavenumbers 2 pi m / length for half-spectrum bins m = 0..n/2.
inline std::vector<double> wavenumbers(std::size_t n, double length) {
  std::vector<double> k(n / 2 + 1);
  for (std::size_t m = 0; m < k.size(); ++m) k[m] = 2.0 * std::numbers::pi * static_cast<double>(m) / length;
  return k;
}

namespace detail {

/// Frames at steps 0, stride, 2 stride, ..., up to `steps`.
inline std::vector<std::vector<double>> integrate(Etdrk4& solver, const std::vector<double>& u0, std::size_t steps,
                                                  std::size_t stride, const char* name) {
  require(stride >= 1, ErrorKind::config, "solver: stride must be >= 1");
  auto v = solver.to_spectrum(u0);
  std::vector<std::vector<double>> frames{u0};
  for (std::size_t s = 1; s <= steps; ++s) {
    solver.step(v);
    for (const auto& c : v) {
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
        fail(ErrorKind::numeric, std::string(name) + ": non-finite state at step " + std::to_string(s));
      }
    }
    if (s % stride == 0) frames.push_back(solver.to_grid(v));
  }
  return frames;
}

}  // namespace detail

/// u_t = -u u_x - u_xx - u_xxxx, periodic on [0, length).
inline Etdrk4 ks_solver(std::size_t n, double length, double dt) {
  auto k = wavenumbers(n, length);
  std::vector<double> lin(k.size());
  std::vector<cplx> g(k.size());
  for (std::size_t m = 0; m < k.size(); ++m) {
    lin[m] = k[m] * k[m] - k[m] * k[m] * k[m] * k[m];
    g[m] = m == n / 2 ? cplx{} : cplx(0.0, -0.5 * k[m]);
  }
  return Etdrk4(n, std::move(lin), std::move(g), dt);
}

/// u_t = -u u_x + nu u_xx, periodic on [0, length); the nonlinear term is
/// restricted to |m| <= n / 3.
inline Etdrk4 burgers_solver(std::size_t n, double length, double nu, double dt) {
  auto k = wavenumbers(n, length);
  std::vector<double> lin(k.size());
  std::vector<cplx> g(k.size());
  for (std::size_t m = 0; m < k.size(); ++m) {
    lin[m] = -nu * k[m] * k[m];
    g[m] = 3 * m <= n && m != n / 2 ? cplx(0.0, -0.5 * k[m]) : cplx{};
  }
  return Etdrk4(n, std::move(lin), std::move(g), dt);
}

inline std::vector<std::vector<double>> simulate_ks(const std::vector<double>& u0, double length, double dt,
                                                    std::size_t steps, std::size_t stride = 1) {
  auto solver = ks_solver(u0.size(), length, dt);
  return detail::integrate(solver, u0, steps, stride, "ks1d");
}

inline std::vector<std::vector<double>> simulate_burgers(const std::vector<double>& u0, double length, double nu,
                                                         double dt, std::size_t steps, std::size_t stride = 1) {
  require(nu > 0.0, ErrorKind::config, "burgers1d: viscosity must be positive");
  auto solver = burgers_solver(u0.size(), length, nu, dt);
  return detail::integrate(solver, u0, steps, stride, "burgers1d");
}

/// Independent per-trajectory stream derived from (seed, index).
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

/// Zero-mean random Fourier series over modes 1..modes with 1/m amplitude
/// decay, scaled to unit maximum and multiplied by `amplitude`.
inline std::vector<double> random_initial(std::size_t n, std::size_t modes, double amplitude, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> u(n, 0.0);
  for (std::size_t m = 1; m <= modes; ++m) {
    const double a = normal(rng) / static_cast<double>(m), b = normal(rng) / static_cast<double>(m);
    for (std::size_t p = 0; p < n; ++p) {
      const double s = 2.0 * std::numbers::pi * static_cast<double>(m * p) / static_cast<double>(n);
      u[p] += a * std::cos(s) + b * std::sin(s);
    }
  }
  double peak = 0.0;
  for (double v : u) peak = std::max(peak, std::fabs(v));
  for (auto& v : u) v *= amplitude / peak;
  return u;
}

// ---------------------------------------------------------------------------
// Darcy flow: -div(a grad u) = f on (0,1)^2, u = 0 on the boundary.

/// Cell-centred five-point finite-volume operator on an n x n grid of
/// spacing 1/n. Face coefficients are harmonic means; boundary faces use the
/// cell value over half a cell.
class DarcyOperator {
 public:
  DarcyOperator(std::vector<double> a, std::size_t n) : n_(n), a_(std::move(a)) {
    require(a_.size() == n * n, ErrorKind::shape, "darcy: coefficient field must hold n*n values");
    for (double v : a_) require(v > 0.0 && std::isfinite(v), ErrorKind::value, "darcy: coefficient must be positive");
    const double inv_h2 = static_cast<double>(n * n);
    east_.assign(n * n, 0.0);
    north_.assign(n * n, 0.0);
    diag_.assign(n * n, 0.0);
    auto harmonic = [](double x, double y) { return 2.0 * x * y / (x + y); };
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t p = i * n + j;
        if (j + 1 < n) east_[p] = harmonic(a_[p], a_[p + 1]) * inv_h2;
        if (i + 1 < n) north_[p] = harmonic(a_[p], a_[p + n]) * inv_h2;
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t p = i * n + j;
        double d = 0.0;
        d += j + 1 < n ? east_[p] : 2.0 * a_[p] * inv_h2;
        d += j > 0 ? east_[p - 1] : 2.0 * a_[p] * inv_h2;
        d += i + 1 < n ? north_[p] : 2.0 * a_[p] * inv_h2;
        d += i > 0 ? north_[p - n] : 2.0 * a_[p] * inv_h2;
        diag_[p] = d;
      }
  }

  std::size_t n() const { return n_; }
  const std::vector<double>& diagonal() const { return diag_; }

  void apply(const std::vector<double>& u, std::vector<double>& out) const {
    out.resize(u.size());
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        const std::size_t p = i * n_ + j;
        double v = diag_[p] * u[p];
        if (j + 1 < n_) v -= east_[p] * u[p + 1];
        if (j > 0) v -= east_[p - 1] * u[p - 1];
        if (i + 1 < n_) v -= north_[p] * u[p + n_];
        if (i > 0) v -= north_[p - n_] * u[p - n_];
        out[p] = v;
      }
  }

 private:
  std::size_t n_;
  std::vector<double> a_, east_, north_, diag_;
};

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double residual = 0.0;  // ||b - A x|| recomputed at exit
};

inline double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Jacobi-preconditioned conjugate gradients to ||b - A x|| <= tol ||b||.
inline CgResult conjugate_gradient(const DarcyOperator& op, const std::vector<double>& b, double tol,
                                   std::size_t max_iter) {
  const std::size_t n = b.size();
  CgResult res{std::vector<double>(n, 0.0), 0, 0.0};
  const double target = tol * norm2(b);
  if (norm2(b) == 0.0) return res;
  std::vector<double> r = b, z(n), p(n), ap(n);
  const auto& d = op.diagonal();
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / d[i];
  p = z;
  double rz = 0.0;
  for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];
  for (std::size_t it = 1; it <= max_iter; ++it) {
    op.apply(p, ap);
    double pap = 0.0;
    for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    res.iterations = it;
    if (norm2(r) <= target) {
      // The recursive residual drifts from the true one; confirm before returning.
      op.apply(res.x, ap);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
      res.residual = norm2(r);
      if (res.residual <= target) return res;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / d[i];
    double rz_next = 0.0;
    for (std::size_t i = 0; i < n; ++i) rz_next += r[i] * z[i];
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  fail(ErrorKind::convergence, "darcy: conjugate gradients did not reach tolerance in " + std::to_string(max_iter) +
                                   " iterations");
}

inline CgResult solve_darcy(const std::vector<double>& a, const std::vector<double>& f, std::size_t n, double tol = 1e-10,
                            std::size_t max_iter = 20000) {
  require(f.size() == n * n, ErrorKind::shape, "darcy: forcing must hold n*n values");
  DarcyOperator op(a, n);
  return conjugate_gradient(op, f, tol, max_iter);
}

/// Periodic Gaussian random field with spectrum (4 pi^2 |k|^2 + tau^2)^(-alpha)
/// synthesized from white noise, thresholded at zero to {high, low}.
inline std::vector<double> threshold_field(std::size_t n, double tau, double alpha, double high, double low,
                                           std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Tensor<double> noise(Shape{n, n});
  for (auto& v : noise.values()) v = normal(rng);
  auto spec = fft::rfft(noise, 2);
  const std::size_t half = n / 2 + 1;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < half; ++c) {
      const double kr = static_cast<double>(r <= n / 2 ? static_cast<long>(r) : static_cast<long>(r) - static_cast<long>(n));
      const double kc = static_cast<double>(c);
      const double s = (r == 0 && c == 0) ? 0.0
                                          : std::pow(4.0 * std::numbers::pi * std::numbers::pi * (kr * kr + kc * kc) + tau * tau,
                                                     -alpha / 2.0);
      spec[2 * (r * half + c)] *= s;
      spec[2 * (r * half + c) + 1] *= s;
    }
  auto field = fft::irfft(spec, Shape{n, n});
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = field[i] >= 0.0 ? high : low;
  return a;
}

// ---------------------------------------------------------------------------

/// Runs the solver selected by `spec` for every trajectory. Each trajectory
/// uses its own random stream, so the result does not depend on threading.
inline TrajectoryDataset<double> generate(const TrajectorySpec& spec) {
  spec.validate();
  TrajectoryDataset<double> ds;
  ds.pde = to_string(spec.pde);
  const std::size_t n = spec.n;
  if (spec.pde == Pde::darcy2d) {
    ds.is_map = true;
    ds.channel_names = {"field"};
    ds.data = Tensor<double>(Shape{spec.trajectories, 2, 1, n, n});
    const std::vector<double> f(n * n, 1.0);
    parallel_for(static_cast<std::ptrdiff_t>(spec.trajectories), [&](std::ptrdiff_t j) {
      auto rng = stream(spec.seed, static_cast<std::uint64_t>(j));
      auto a = threshold_field(n, spec.grf_tau, spec.grf_alpha, spec.a_high, spec.a_low, rng);
      auto u = solve_darcy(a, f, n, spec.cg_tol, spec.cg_max_iter).x;
      double* dst = ds.data.data() + static_cast<std::size_t>(j) * 2 * n * n;
      std::copy(a.begin(), a.end(), dst);
      std::copy(u.begin(), u.end(), dst + n * n);
    }, 1);
  } else {
    ds.channel_names = {"u"};
    ds.data = Tensor<double>(Shape{spec.trajectories, spec.snapshots, 1, n});
    const std::size_t fine = n * spec.refine;
    const auto burn_steps = static_cast<std::size_t>(std::llround(spec.burn_in / spec.dt));
    parallel_for(static_cast<std::ptrdiff_t>(spec.trajectories), [&](std::ptrdiff_t j) {
      auto rng = stream(spec.seed, static_cast<std::uint64_t>(j));
      auto u0 = random_initial(fine, spec.init_modes, spec.amplitude, rng);
      Etdrk4 solver = spec.pde == Pde::ks1d ? ks_solver(fine, spec.length, spec.dt)
                                            : burgers_solver(fine, spec.length, spec.nu, spec.dt);
      if (burn_steps > 0) u0 = detail::integrate(solver, u0, burn_steps, burn_steps, ds.pde.c_str()).back();
      auto frames = detail::integrate(solver, u0, (spec.snapshots - 1) * spec.stride, spec.stride, ds.pde.c_str());
      double* dst = ds.data.data() + static_cast<std::size_t>(j) * spec.snapshots * n;
      for (std::size_t t = 0; t < spec.snapshots; ++t)
        for (std::size_t p = 0; p < n; ++p) dst[t * n + p] = frames[t][p * spec.refine];
    }, 1);
  }
  ds.split = split_trajectories(spec.trajectories, spec.test_fraction, spec.seed);
  ds.validate();
  return ds;
}

}  // namespace dymixop

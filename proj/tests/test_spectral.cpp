#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dymixop/fft.hpp"
#include "dymixop/spectral.hpp"
#include "oracles.hpp"

using namespace dymixop;
using T64 = Tensor<double>;
using cd = std::complex<double>;

namespace {

double spectrum_rel_err(const T64& spec, const std::vector<cd>& ref, std::size_t bins) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    num += std::norm(spec.complex_at(k) - ref[k]);
    den += std::norm(ref[k]);
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST(Rfft, ConstantIsDcOnly) {
  T64 x({8}, 2.5);
  auto s = fft::rfft(x, 1);
  ASSERT_EQ(s.shape(), (Shape{5}));
  EXPECT_NEAR(s.complex_at(0).real(), 20.0, 1e-12);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_LT(std::abs(s.complex_at(k)), 1e-12);
}

TEST(Rfft, SingleHarmonic) {
  const std::size_t n = 16;
  T64 x({n});
  for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2.0 * std::numbers::pi * i / n);
  auto s = fft::rfft(x, 1);
  EXPECT_NEAR(s.complex_at(1).real(), n / 2.0, 1e-12);
  EXPECT_LT(std::abs(s.complex_at(0)), 1e-12);
  for (std::size_t k = 2; k <= n / 2; ++k) EXPECT_LT(std::abs(s.complex_at(k)), 1e-12);
}

TEST(Rfft, MatchesNaiveDft) {
  std::mt19937_64 rng(64);
  auto x = oracle::random_tensor({64}, rng);
  auto s = fft::rfft(x, 1);
  auto ref = oracle::dft_real(std::vector<double>(x.values().begin(), x.values().end()));
  EXPECT_LE(spectrum_rel_err(s, ref, 33), 1e-10);
}

TEST(Rfft, ChannelAxesPassThrough) {
  std::mt19937_64 rng(2);
  auto x = oracle::random_tensor({2, 3, 16}, rng);
  auto s = fft::rfft(x, 1);
  ASSERT_EQ(s.shape(), (Shape{2, 3, 9}));
  for (std::size_t slab = 0; slab < 6; ++slab) {
    std::vector<double> row(x.data() + slab * 16, x.data() + (slab + 1) * 16);
    auto ref = oracle::dft_real(row);
    for (std::size_t k = 0; k < 9; ++k) EXPECT_LT(std::abs(s.complex_at(slab * 9 + k) - ref[k]), 1e-12);
  }
}

TEST(Rfft, TwoDimensionalMatchesNaive) {
  std::mt19937_64 rng(5);
  const std::size_t n0 = 8, n1 = 16;
  auto x = oracle::random_tensor({1, 1, n0, n1}, rng);
  auto s = fft::rfft(x, 2);
  ASSERT_EQ(s.shape(), (Shape{1, 1, n0, n1 / 2 + 1}));
  std::vector<cd> xc(x.values().begin(), x.values().end());
  auto ref = oracle::dft2(xc, n0, n1);
  for (std::size_t r = 0; r < n0; ++r)
    for (std::size_t c = 0; c <= n1 / 2; ++c) EXPECT_LT(std::abs(s.complex_at(r * (n1 / 2 + 1) + c) - ref[r * n1 + c]), 1e-11);
  auto back = fft::irfft(s, {n0, n1});
  EXPECT_LE(oracle::rel_err(back, x), 1e-12);
}

TEST(Rfft, NonPowerOfTwoIsError) {
  EXPECT_THROW(fft::rfft(T64({12}), 1), Error);
  EXPECT_THROW(fft::irfft(T64::zeros({7}, true), {12}), Error);
}

TEST(Irfft, RoundtripAndZero) {
  std::mt19937_64 rng(17);
  for (std::size_t n : {2u, 4u, 32u, 128u}) {
    auto x = oracle::random_tensor({3, n}, rng);
    EXPECT_LE(oracle::rel_err(fft::irfft(fft::rfft(x, 1), {n}), x), 1e-12) << n;
  }
  auto zero = fft::irfft(T64::zeros({9}, true), {16});
  EXPECT_EQ(max_abs(zero), 0.0);
  EXPECT_THROW(fft::irfft(T64::zeros({8}, true), {16}), Error);
}

TEST(Irfft, TruncatedBandLimitedSignalUnchanged) {
  const std::size_t n = 64, kmax = 6;
  T64 x({n});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n;
    x[i] = 0.3 + std::cos(3 * t) - 0.5 * std::sin(5 * t);
  }
  auto s = fft::rfft(x, 1);
  for (std::size_t k = kmax; k <= n / 2; ++k) s[2 * k] = s[2 * k + 1] = 0.0;
  EXPECT_LE(oracle::rel_err(fft::irfft(s, {n}), x), 1e-13);
}

TEST(Rfft, Parseval) {
  std::mt19937_64 rng(99);
  for (std::size_t n : {8u, 64u, 256u}) {
    auto x = oracle::random_tensor({n}, rng);
    auto s = fft::rfft(x, 1);
    double lhs = 0.0, rhs = 0.0;
    for (double v : x.values()) lhs += v * v;
    for (std::size_t k = 0; k <= n / 2; ++k) rhs += (k == 0 || 2 * k == n ? 1.0 : 2.0) * std::norm(s.complex_at(k));
    EXPECT_LE(std::abs(lhs - rhs / n) / lhs, 1e-10);
  }
}

TEST(SpectralMultiply, IdentityAtFullModesReproducesInput) {
  std::mt19937_64 rng(4);
  auto c = oracle::random_tensor({2, 3, 16}, rng);
  auto w = SpectralWeights<double>::identity({9}, 3);
  EXPECT_LE(oracle::rel_err(spectral_multiply(c, w), c), 1e-10);

  auto c2 = oracle::random_tensor({1, 2, 8, 16}, rng);
  auto w2 = SpectralWeights<double>::identity({4, 9}, 2);
  EXPECT_LE(oracle::rel_err(spectral_multiply(c2, w2), c2), 1e-10);
}

TEST(SpectralMultiply, SingleModeIsSpatialMean) {
  std::mt19937_64 rng(8);
  auto c = oracle::random_tensor({1, 2, 32}, rng);
  auto out = spectral_multiply(c, SpectralWeights<double>::identity({1}, 2));
  for (std::size_t ch = 0; ch < 2; ++ch) {
    double mean = 0.0;
    for (std::size_t p = 0; p < 32; ++p) mean += c[ch * 32 + p] / 32.0;
    for (std::size_t p = 0; p < 32; ++p) EXPECT_NEAR(out[ch * 32 + p], mean, 1e-12);
  }
}

TEST(SpectralMultiply, MatchesConvolutionTheoremOracle) {
  std::mt19937_64 rng(12);
  auto c = oracle::random_tensor({2, 2, 8}, rng);
  auto w = SpectralWeights<double>::random({3}, 2, 2, false, rng);
  for (auto& v : w.values.values()) v *= 4.0;
  auto out = spectral_multiply(c, w);
  auto ref = oracle::spectral_multiply_1d(c, w.values, 3);
  EXPECT_LE(oracle::rel_err(out, ref), 1e-12);
}

TEST(SpectralMultiply, TwoDimensionalMatchesNaiveOracle) {
  // Keep rows {0, 1, n0-2, n0-1} and columns {0, 1, 2}; check against a
  // dense 2D DFT with the mixing applied bin by bin.
  std::mt19937_64 rng(31);
  const std::size_t n0 = 8, n1 = 8, m0 = 2, m1 = 3, d = 2;
  auto c = oracle::random_tensor({1, d, n0, n1}, rng);
  auto w = SpectralWeights<double>::random({m0, m1}, d, d, false, rng);
  auto out = spectral_multiply(c, w);

  std::vector<std::vector<cd>> spec(d);
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<cd> field(c.data() + i * n0 * n1, c.data() + (i + 1) * n0 * n1);
    spec[i] = oracle::dft2(field, n0, n1);
  }
  for (std::size_t o = 0; o < d; ++o) {
    std::vector<cd> half(n0 * n1, cd{});
    for (std::size_t q = 0; q < 2 * m0; ++q) {
      const std::size_t row = q < m0 ? q : n0 - 2 * m0 + q;
      for (std::size_t col = 0; col < m1; ++col) {
        cd acc{};
        for (std::size_t i = 0; i < d; ++i) {
          const std::size_t idx = ((q * m1 + col) * d + o) * d + i;
          acc += cd(w.values[2 * idx], w.values[2 * idx + 1]) * spec[i][row * n1 + col];
        }
        half[row * n1 + col] = acc;
      }
    }
    // Real part of the inverse of the Hermitian extension along the last axis.
    std::vector<cd> full(n0 * n1, cd{});
    for (std::size_t r = 0; r < n0; ++r) {
      for (std::size_t col = 0; col < m1; ++col) {
        full[r * n1 + col] += half[r * n1 + col];
        if (col > 0) full[((n0 - r) % n0) * n1 + (n1 - col)] += std::conj(half[r * n1 + col]);
      }
    }
    // Column 0 is not Hermitian along the rows after mixing; the real-output
    // convention keeps the real part of the field.
    auto inv = oracle::dft2(full, n0, n1, true);
    for (std::size_t p = 0; p < n0 * n1; ++p) {
      const double got = out[o * n0 * n1 + p];
      const double expect = inv[p].real() / static_cast<double>(n0 * n1);
      EXPECT_NEAR(got, expect, 1e-12) << "o=" << o << " p=" << p;
    }
  }
}

TEST(SpectralMultiply, LinearInInput) {
  std::mt19937_64 rng(41);
  auto w = SpectralWeights<double>::random({5}, 3, 2, false, rng);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = oracle::random_tensor({2, 3, 32}, rng), y = oracle::random_tensor({2, 3, 32}, rng);
    auto lhs = spectral_multiply(add(x, y), w);
    auto rhs = add(spectral_multiply(x, w), spectral_multiply(y, w));
    EXPECT_LE(oracle::rel_err(lhs, rhs), 1e-10);
  }
}

TEST(SpectralMultiply, OutputIsBandLimited) {
  std::mt19937_64 rng(43);
  const std::size_t n = 64, kmax = 7;
  auto w = SpectralWeights<double>::random({kmax}, 2, 2, false, rng);
  auto x = oracle::random_tensor({1, 2, n}, rng);
  auto out = spectral_multiply(x, w);
  auto s = fft::rfft(out, 1);
  double total = 0.0, high = 0.0;
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t k = 0; k <= n / 2; ++k) {
      const double e = std::norm(s.complex_at(ch * (n / 2 + 1) + k));
      total += e;
      if (k >= kmax) high += e;
    }
  EXPECT_LE(std::sqrt(high / total), 1e-12);
}

TEST(SpectralMultiply, DiagonalKernelActsPerChannel) {
  std::mt19937_64 rng(44);
  auto w = SpectralWeights<double>::random({4}, 3, 3, true, rng);
  EXPECT_EQ(w.values.shape(), (Shape{4, 3}));
  // Expand to a dense kernel and compare.
  SpectralWeights<double> dense{{4}, false, Tensor<double>::zeros({4, 3, 3}, true)};
  for (std::size_t q = 0; q < 4; ++q)
    for (std::size_t c = 0; c < 3; ++c) {
      dense.values[2 * ((q * 3 + c) * 3 + c)] = w.values[2 * (q * 3 + c)];
      dense.values[2 * ((q * 3 + c) * 3 + c) + 1] = w.values[2 * (q * 3 + c) + 1];
    }
  auto x = oracle::random_tensor({2, 3, 16}, rng);
  EXPECT_LE(oracle::rel_err(spectral_multiply(x, w), spectral_multiply(x, dense)), 1e-14);
}

TEST(SpectralMultiply, ErrorsOnChannelMismatchAndOversizedModes) {
  std::mt19937_64 rng(45);
  auto w = SpectralWeights<double>::random({4}, 3, 2, false, rng);
  EXPECT_THROW(spectral_multiply(T64({1, 2, 16}), w), Error);
  auto big = SpectralWeights<double>::random({10}, 3, 2, false, rng);
  EXPECT_THROW(spectral_multiply(T64({1, 3, 16}), big), Error);
  EXPECT_THROW(spectral_multiply(T64({1, 3, 12}), w), Error);
}

TEST(SpectralMultiply, BitwiseDeterministicAcrossThreadCounts) {
  std::mt19937_64 rng(46);
  auto w = SpectralWeights<double>::random({6}, 4, 4, false, rng);
  auto x = oracle::random_tensor({8, 4, 64}, rng);
  set_num_threads(1);
  auto a = spectral_multiply(x, w);
  set_num_threads(4);
  auto b = spectral_multiply(x, w);
  set_num_threads(1);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
}

#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "dymixop/autodiff.hpp"
#include "oracles.hpp"

using namespace dymixop;
using T64 = Tensor<double>;
using V = ad::Var<double>;

namespace {

/// Central differences of `loss` with respect to every entry of `leaf`.
std::vector<double> numeric_grad(const V& leaf, const std::function<double()>& loss, double h = 1e-6) {
  std::vector<double> g(leaf->value.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double saved = leaf->value[i];
    leaf->value[i] = saved + h;
    const double up = loss();
    leaf->value[i] = saved - h;
    const double down = loss();
    leaf->value[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

std::vector<double> values(const T64& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Autodiff, HadamardGradIsOtherOperand) {
  std::mt19937_64 rng(1);
  auto x = ad::variable(oracle::random_tensor({2, 3}, rng));
  auto y = ad::constant(oracle::random_tensor({2, 3}, rng));
  auto z = ad::hadamard(x, y);
  // Sum via mean * size so the adjoint reaching z is exactly one.
  auto loss = ad::scale(ad::mean(z), 6.0);
  ad::backward(loss);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(x->grad[i], y->value[i]);
  EXPECT_TRUE(y->grad.empty());
}

TEST(Autodiff, MeanOfConstantGivesUniformGrad) {
  auto x = ad::variable(T64({4, 5}, 3.0));
  ad::backward(ad::mean(x));
  for (double g : x->grad.values()) EXPECT_DOUBLE_EQ(g, 1.0 / 20.0);
}

TEST(Autodiff, MeanOfSquareGivesTwoXOverN) {
  std::mt19937_64 rng(2);
  auto x = ad::variable(oracle::random_tensor({3, 4}, rng));
  ad::backward(ad::mean(ad::hadamard(x, x)));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(x->grad[i], 2.0 * x->value[i] / 12.0, 1e-15);
}

TEST(Autodiff, ChannelMapWeightGradOnOneHotInput) {
  std::mt19937_64 rng(3);
  T64 x({1, 3, 1});
  x[1] = 1.0;
  auto xin = ad::constant(x);
  auto w = ad::variable(oracle::random_tensor({2, 3}, rng));
  auto b = ad::variable(oracle::random_tensor({2}, rng));
  auto target = ad::constant(oracle::random_tensor({1, 2, 1}, rng));
  auto loss_fn = [&] { return ad::mse(ad::channel_map(xin, w, b), target); };
  ad::backward(loss_fn());
  auto num = numeric_grad(w, [&] { return loss_fn()->value[0]; });
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(w->grad[i], num[i], 1e-8);
  // Only the column of the hot input channel carries gradient.
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(w->grad[j * 3 + 0], 0.0);
    EXPECT_EQ(w->grad[j * 3 + 2], 0.0);
  }
}

TEST(Autodiff, SpectralWeightGradMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  auto x = ad::variable(oracle::random_tensor({2, 2, 16}, rng));
  auto w = ad::variable(SpectralWeights<double>::random({5}, 2, 3, false, rng).values);
  for (auto& v : w->value.values()) v *= 8.0;
  auto target = ad::constant(oracle::random_tensor({2, 3, 16}, rng));
  auto loss_fn = [&] { return ad::mse(ad::spectral_multiply(x, w, {5}, false), target); };
  ad::backward(loss_fn());
  auto num_w = numeric_grad(w, [&] { return loss_fn()->value[0]; });
  auto num_x = numeric_grad(x, [&] { return loss_fn()->value[0]; });
  EXPECT_LE(oracle::rel_err(values(w->grad), num_w), 1e-7);
  EXPECT_LE(oracle::rel_err(values(x->grad), num_x), 1e-7);
}

TEST(Autodiff, SpectralGradIncludingNyquistAndTwoDims) {
  std::mt19937_64 rng(5);
  {
    auto x = ad::variable(oracle::random_tensor({1, 2, 8}, rng));
    auto w = ad::variable(SpectralWeights<double>::random({5}, 2, 2, false, rng).values);
    auto target = ad::constant(oracle::random_tensor({1, 2, 8}, rng));
    auto loss_fn = [&] { return ad::mse(ad::spectral_multiply(x, w, {5}, false), target); };
    ad::backward(loss_fn());
    EXPECT_LE(oracle::rel_err(values(w->grad), numeric_grad(w, [&] { return loss_fn()->value[0]; })), 1e-7);
    EXPECT_LE(oracle::rel_err(values(x->grad), numeric_grad(x, [&] { return loss_fn()->value[0]; })), 1e-7);
  }
  {
    auto x = ad::variable(oracle::random_tensor({2, 2, 8, 8}, rng));
    auto w = ad::variable(SpectralWeights<double>::random({2, 3}, 2, 2, false, rng).values);
    for (auto& v : w->value.values()) v *= 4.0;
    auto target = ad::constant(oracle::random_tensor({2, 2, 8, 8}, rng));
    auto loss_fn = [&] { return ad::mse(ad::spectral_multiply(x, w, {2, 3}, false), target); };
    ad::backward(loss_fn());
    EXPECT_LE(oracle::rel_err(values(w->grad), numeric_grad(w, [&] { return loss_fn()->value[0]; })), 1e-7);
    EXPECT_LE(oracle::rel_err(values(x->grad), numeric_grad(x, [&] { return loss_fn()->value[0]; })), 1e-7);
  }
  {
    auto x = ad::variable(oracle::random_tensor({2, 3, 16}, rng));
    auto w = ad::variable(SpectralWeights<double>::random({4}, 3, 3, true, rng).values);
    auto target = ad::constant(oracle::random_tensor({2, 3, 16}, rng));
    auto loss_fn = [&] { return ad::mse(ad::spectral_multiply(x, w, {4}, true), target); };
    ad::backward(loss_fn());
    EXPECT_LE(oracle::rel_err(values(w->grad), numeric_grad(w, [&] { return loss_fn()->value[0]; })), 1e-7);
    EXPECT_LE(oracle::rel_err(values(x->grad), numeric_grad(x, [&] { return loss_fn()->value[0]; })), 1e-7);
  }
}

TEST(Autodiff, ActivationsConcatSliceScaleAndRelativeMse) {
  std::mt19937_64 rng(6);
  auto a = ad::variable(oracle::random_tensor({2, 2, 4}, rng));
  auto b = ad::variable(oracle::random_tensor({2, 1, 4}, rng));
  auto s = ad::variable(T64::scalar(0.7));
  auto target = ad::variable(oracle::random_tensor({2, 2, 4}, rng, false, 0.5, 1.5));
  auto loss_fn = [&] {
    auto joined = ad::concat_channels<double>(std::vector<V>{ad::activation(a, ad::Activation::gelu), ad::activation(b, ad::Activation::tanh)});
    auto part = ad::slice_channels(joined, 1, 2);
    auto scaled = ad::scale(ad::sub(part, ad::scale(a, 0.3)), s);
    return ad::add(ad::relative_mse(scaled, target), ad::mse(scaled, target));
  };
  ad::backward(loss_fn());
  auto f = [&] { return loss_fn()->value[0]; };
  for (const auto& leaf : {a, b, s, target}) {
    EXPECT_LE(oracle::rel_err(values(leaf->grad), numeric_grad(leaf, f)), 1e-7);
  }
}

TEST(Autodiff, RepeatedBackwardAccumulates) {
  std::mt19937_64 rng(7);
  auto x = ad::variable(oracle::random_tensor({3}, rng));
  auto loss = ad::mean(ad::hadamard(x, x));
  ad::backward(loss);
  auto first = values(x->grad);
  ad::backward(loss);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x->grad[i], 2.0 * first[i]);
}

TEST(Autodiff, ZeroGradThenBackwardMatchesFreshGraphBitwise) {
  std::mt19937_64 rng(8);
  ad::Parameter<double> w{"w", ad::variable(oracle::random_tensor({3, 2}, rng))};
  ad::Parameter<double> b{"b", ad::variable(oracle::random_tensor({3}, rng))};
  auto x = ad::constant(oracle::random_tensor({2, 2, 8}, rng));
  auto target = ad::constant(oracle::random_tensor({2, 3, 8}, rng));
  auto run = [&] { ad::backward(ad::mse(ad::activation(ad::channel_map(x, w.node, b.node), ad::Activation::gelu), target)); };
  run();
  run();
  w.zero_grad();
  b.zero_grad();
  run();
  auto after_zero = values(w.grad());
  ad::Parameter<double> w2{"w", ad::variable(w.value())};
  ad::Parameter<double> b2{"b", ad::variable(b.value())};
  ad::backward(ad::mse(ad::activation(ad::channel_map(x, w2.node, b2.node), ad::Activation::gelu), target));
  EXPECT_EQ(after_zero, values(w2.grad()));
}

TEST(Autodiff, SumOfLossesGivesSumOfGradients) {
  std::mt19937_64 rng(9);
  auto w = ad::variable(oracle::random_tensor({2, 2}, rng));
  auto b = ad::constant(T64({2}));
  auto x = ad::constant(oracle::random_tensor({1, 2, 4}, rng));
  auto t1 = ad::constant(oracle::random_tensor({1, 2, 4}, rng));
  auto t2 = ad::constant(oracle::random_tensor({1, 2, 4}, rng));
  auto y = ad::channel_map(x, w, b);
  ad::backward(ad::mse(y, t1));
  auto g1 = values(w->grad);
  w->grad = T64();
  ad::backward(ad::mse(ad::channel_map(x, w, b), t2));
  auto g2 = values(w->grad);
  w->grad = T64();
  auto y2 = ad::channel_map(x, w, b);
  ad::backward(ad::add(ad::mse(y2, t1), ad::mse(y2, t2)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w->grad[i], g1[i] + g2[i], 1e-15);
}

TEST(Autodiff, UnreachableParameterStaysZero) {
  std::mt19937_64 rng(10);
  ad::Parameter<double> used{"used", ad::variable(oracle::random_tensor({4}, rng))};
  ad::Parameter<double> unused{"unused", ad::variable(oracle::random_tensor({4}, rng))};
  used.zero_grad();
  unused.zero_grad();
  ad::backward(ad::mean(ad::hadamard(used.node, used.node)));
  const auto g = unused.grad();
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, NonScalarLossIsError) {
  auto x = ad::variable(T64({3}));
  EXPECT_THROW(ad::backward(x), Error);
}

TEST(Autodiff, RelativeMseZeroTargetIsError) {
  auto p = ad::variable(T64({1, 1, 4}, 1.0));
  auto t = ad::constant(T64({1, 1, 4}));
  EXPECT_THROW(ad::relative_mse(p, t), Error);
}

#include <gtest/gtest.h>

#include <tuple>

#include <cmath>

#include "oracles.hpp"
#include "support.hpp"
#include "tunet/gradcheck.hpp"
#include "tunet/tfilm.hpp"

using namespace tunet;
using ad::Tensor;
using test_support::random_tensor;

namespace {
using T = Tensor<double>;

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}  // namespace

TEST(TFiLM, IdentityHeadLeavesInputUnchanged) {
  Rng rng(200);
  nn::TFiLM<double> f(4, 8);
  f.init(rng);
  std::fill(f.head.weight.mutable_data().begin(), f.head.weight.mutable_data().end(), 0.0);
  auto x = random_tensor({4, 64}, rng, -1, 1, false);
  const auto y = f.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) ASSERT_EQ(y[i], x[i]);
}

TEST(TFiLM, HandComputedSingleChannel) {
  nn::TFiLM<double> f(1, 2);
  // LSTM: i, f, g, o pre-activations = a * p + u * h + b
  const double a[4] = {0.7, -0.4, 1.2, 0.3}, u[4] = {0.2, 0.5, -0.6, 0.1}, bb[4] = {0.0, 0.1, -0.2, 0.05};
  for (int j = 0; j < 4; ++j) {
    f.lstm.input_weight.mutable_data()[j] = a[j];
    f.lstm.hidden_weight.mutable_data()[j] = u[j];
    f.lstm.bias.mutable_data()[j] = bb[j];
  }
  f.head.weight.mutable_data()[0] = 0.8;   // gamma
  f.head.weight.mutable_data()[1] = -1.5;  // beta
  f.head.bias.mutable_data()[0] = 1.0;
  f.head.bias.mutable_data()[1] = 0.25;

  T x({1, 4}, {0.3, -0.2, 0.5, 0.9});
  const double pooled[2] = {0.3, 0.9};
  double h = 0, c = 0, expected[4];
  for (int b = 0; b < 2; ++b) {
    double z[4];
    for (int j = 0; j < 4; ++j) z[j] = a[j] * pooled[b] + u[j] * h + bb[j];
    c = sig(z[1]) * c + sig(z[0]) * std::tanh(z[2]);
    h = sig(z[3]) * std::tanh(c);
    const double gamma = 0.8 * h + 1.0, beta = -1.5 * h + 0.25;
    for (int t = 0; t < 2; ++t) expected[b * 2 + t] = gamma * x[b * 2 + t] + beta;
  }
  const auto y = f.forward(x);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
}

TEST(TFiLM, MatchesNaivePipelineMultiChannel) {
  Rng rng(31);
  for (auto [c, blocks, len] : {std::tuple{3, 4, 32}, std::tuple{8, 16, 64}, std::tuple{5, 1, 10}}) {
    nn::TFiLM<double> f(c, blocks);
    f.init(rng);
    nn::fill_uniform(f.head.weight, 0.7, rng);
    auto x = test_support::random_tensor({std::size_t(c), std::size_t(len)}, rng, -1, 1, false);
    const auto y = f.forward(x);
    const auto ref = oracle::naive_tfilm(x, f);
    EXPECT_LT(test_support::max_abs_diff(y.data(), ref), 1e-12) << c << " " << blocks;
  }
}

TEST(TFiLM, ShapePreservedAndDivisibilityChecked) {
  Rng rng(201);
  nn::TFiLM<float> f(64, 64);
  f.init(rng);
  Tensor<float> x({64, 2048});
  EXPECT_EQ(f.forward(x).shape(), (ad::Shape{64, 2048}));
  EXPECT_THROW(f.forward(Tensor<float>({64, 2000})), std::invalid_argument);
  EXPECT_THROW(f.forward(Tensor<float>({32, 2048})), std::invalid_argument);
}

TEST(TFiLM, BlocksOnlySeeEarlierBlocks) {
  Rng rng(202);
  nn::TFiLM<double> f(3, 8);
  f.init(rng);
  nn::fill_uniform(f.head.weight, 0.5, rng);
  auto x = random_tensor({3, 64}, rng, -1, 1, false);
  const auto base = f.forward(x);
  // Raise the maximum of block 5 in channel 1.
  auto x2 = x.detach();
  x2.mutable_data()[1 * 64 + 5 * 8 + 3] = 3.0;
  const auto pert = f.forward(x2);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t t = 0; t < 64; ++t) {
      const double d = std::abs(pert[c * 64 + t] - base[c * 64 + t]);
      if (t < 5 * 8) {
        EXPECT_EQ(d, 0.0) << c << "," << t;
      }
    }
  }
  double later = 0.0;
  for (std::size_t t = 6 * 8; t < 64; ++t) later = std::max(later, std::abs(pert[t] - base[t]));
  EXPECT_GT(later, 0.0);
}

TEST(TFiLM, GradientCheck) {
  Rng rng(203);
  nn::TFiLM<double> f(2, 4);
  f.init(rng);
  nn::fill_uniform(f.head.weight, 0.5, rng);
  auto x = random_tensor({2, 16}, rng);
  auto w = random_tensor({2, 16}, rng, -1, 1, false);
  auto r = ad::grad_check([&] { return ad::sum(ad::mul(f.forward(x), w)); },
                          {x, f.lstm.input_weight, f.lstm.hidden_weight, f.lstm.bias, f.head.weight, f.head.bias});
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.nan_count, 0u);
}

TEST(TFiLM, ParameterNames) {
  nn::TFiLM<float> f(8, 4);
  nn::ParameterList<float> ps;
  f.collect("encoder0.tfilm", ps);
  ASSERT_EQ(ps.size(), 5u);
  EXPECT_EQ(ps[0].name, "encoder0.tfilm.lstm.input_weight");
  EXPECT_EQ(ps[4].name, "encoder0.tfilm.head.bias");
  EXPECT_EQ(nn::count_parameters(ps), 10u * 64 + 6 * 8);
}

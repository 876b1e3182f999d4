#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "tunet/gradcheck.hpp"
#include "tunet/performer.hpp"

using namespace tunet;
using namespace tunet::performer;
using ad::Tensor;
using test_support::random_tensor;

namespace {
using oracle::loop_attention;
using oracle::frob_rel;
using T = Tensor<double>;

T identity(std::size_t n) {
  T e({n, n});
  for (std::size_t i = 0; i < n; ++i) e.mutable_data()[i * n + i] = 1.0;
  return e;
}

PerformerConfig small_config() {
  PerformerConfig c;
  c.layers = 1;
  c.heads = 2;
  c.head_dim = 4;
  c.model_dim = 8;
  c.ff_mult = 2;
  c.local_heads = 1;
  c.random_features = 16;
  c.local_window = 3;
  return c;
}
}  // namespace

TEST(ExactAttention, MatchesDoubleLoop) {
  Rng rng(300);
  auto q = random_tensor({12, 6}, rng, -2, 2, false), k = random_tensor({12, 6}, rng, -2, 2, false);
  auto v = random_tensor({12, 5}, rng, -1, 1, false);
  EXPECT_LT(test_support::max_abs_diff(exact_attention(q, k, v).data(), loop_attention(q, k, v)), 1e-6);
}

TEST(ExactAttention, IdenticalKeysAverageValues) {
  Rng rng(301);
  auto q = random_tensor({5, 3}, rng, -1, 1, false), v = random_tensor({5, 2}, rng, -1, 1, false);
  T k({5, 3});
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t c = 0; c < 3; ++c) k.mutable_data()[j * 3 + c] = 0.1 * (c + 1);
  const auto y = exact_attention(q, k, v);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t j = 0; j < 5; ++j) mean += v[j * 2 + c] / 5;
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(y[i * 2 + c], mean, 1e-12);
  }
}

TEST(ExactAttention, SaturatedMatchPicksValue) {
  Rng rng(302);
  auto k = random_tensor({6, 4}, rng, -1, 1, false), v = random_tensor({6, 3}, rng, -1, 1, false);
  T q({1, 4});
  for (std::size_t c = 0; c < 4; ++c) q.mutable_data()[c] = 200.0 * k[2 * 4 + c];
  const auto y = exact_attention(q, k, v);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y[c], v[2 * 3 + c], 1e-6);
}

TEST(LocalAttention, WindowCoveringAllIsExact) {
  Rng rng(310);
  auto q = random_tensor({9, 4}, rng, -1, 1, false), k = random_tensor({9, 4}, rng, -1, 1, false);
  auto v = random_tensor({9, 4}, rng, -1, 1, false);
  const auto ex = exact_attention(q, k, v);
  for (std::size_t w : {9u, 20u}) {
    EXPECT_LT(test_support::max_abs_diff(local_attention(q, k, v, w).data(), ex.data()), 1e-12);
  }
}

TEST(LocalAttention, WindowOneReturnsOwnValue) {
  Rng rng(311);
  auto q = random_tensor({7, 3}, rng, -1, 1, false), k = random_tensor({7, 3}, rng, -1, 1, false);
  auto v = random_tensor({7, 3}, rng, -1, 1, false);
  const auto y = local_attention(q, k, v, 1);
  for (std::size_t i = 0; i < v.numel(); ++i) EXPECT_NEAR(y[i], v[i], 1e-12);
  EXPECT_THROW(local_attention(q, k, v, 0), std::invalid_argument);
}

TEST(LocalAttention, MatchesMaskedOracle) {
  Rng rng(312);
  const std::size_t n = 128, w = 16;
  auto q = random_tensor({n, 8}, rng, -1, 1, false), k = random_tensor({n, 8}, rng, -1, 1, false);
  auto v = random_tensor({n, 8}, rng, -1, 1, false);
  // W contiguous keys, (W-1)/2 before the query where possible, clamped at the ends.
  auto allowed = [&](std::size_t i, std::size_t j) {
    const long back = static_cast<long>((w - 1) / 2);
    long first = std::clamp(static_cast<long>(i) - back, 0L, static_cast<long>(n - w));
    return static_cast<long>(j) >= first && static_cast<long>(j) < first + static_cast<long>(w);
  };
  EXPECT_LT(test_support::max_abs_diff(local_attention(q, k, v, w).data(), loop_attention(q, k, v, allowed)), 1e-6);
  for (std::size_t i = 0; i < n; ++i) {
    auto [a, b] = local_window_range(i, n, w);
    EXPECT_EQ(b - a, w);
    EXPECT_TRUE(a <= i && i < b);
  }
}

TEST(Favor, SingleKeyReturnsValue) {
  Rng rng(320);
  auto q = random_tensor({4, 8}, rng, -1, 1, false), k = random_tensor({1, 8}, rng, -1, 1, false);
  auto v = random_tensor({1, 3}, rng, -1, 1, false);
  auto f = orthogonal_random_features<double>(5, 8, rng);
  const auto y = favor_attention(q, k, v, f);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y[i * 3 + c], v[c], 1e-12);
}

TEST(Favor, ConstantValuesPassThrough) {
  Rng rng(321);
  auto q = random_tensor({10, 8}, rng, -1, 1, false), k = random_tensor({10, 8}, rng, -1, 1, false);
  T v({10, 2});
  for (std::size_t j = 0; j < 10; ++j) {
    v.mutable_data()[j * 2] = 0.7;
    v.mutable_data()[j * 2 + 1] = -1.3;
  }
  auto f = orthogonal_random_features<double>(32, 8, rng);
  const auto y = favor_attention(q, k, v, f);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(y[i * 2], 0.7, 1e-12);
    EXPECT_NEAR(y[i * 2 + 1], -1.3, 1e-12);
  }
}

TEST(Favor, MedianRelativeErrorBelowTenPercent) {
  std::vector<double> errs;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(1000 + seed);
    auto q = random_tensor({16, 32}, rng, -1, 1, false), k = random_tensor({16, 32}, rng, -1, 1, false);
    auto v = random_tensor({16, 32}, rng, -1, 1, false);
    auto f = orthogonal_random_features<double>(256, 32, rng);
    errs.push_back(frob_rel(favor_attention(q, k, v, f).data(), exact_attention(q, k, v).data()));
  }
  std::nth_element(errs.begin(), errs.begin() + 25, errs.end());
  EXPECT_LT(errs[25], 0.1);
}

TEST(Favor, FeaturesOrthogonalWithinBlocks) {
  Rng rng(322);
  const std::size_t d = 8, m = 20;
  auto f = orthogonal_random_features<double>(m, d, rng);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      if (a / d != b / d) continue;
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += f[a * d + c] * f[b * d + c];
      EXPECT_NEAR(dot, 0.0, 1e-9);
    }
  }
  // E|w|^2 = d for chi(d) lengths.
  Rng big(323);
  auto g = orthogonal_random_features<double>(4096, d, big);
  double mean = 0;
  for (std::size_t r = 0; r < 4096; ++r) {
    double n2 = 0;
    for (std::size_t c = 0; c < d; ++c) n2 += g[r * d + c] * g[r * d + c];
    mean += n2 / 4096;
  }
  EXPECT_NEAR(mean, static_cast<double>(d), 0.3);
}

TEST(Favor, AveragedRedrawsConvergeToSoftmax) {
  Rng rng(324);
  const std::size_t n = 12, d = 8;
  auto q = random_tensor({n, d}, rng, -0.5, 0.5, false), k = random_tensor({n, d}, rng, -0.5, 0.5, false);
  const auto eye = identity(n);
  const auto exact = exact_attention(q, k, eye);  // the attention matrix itself
  std::vector<double> acc(n * n, 0.0);
  std::vector<double> errors;
  std::size_t done = 0;
  for (std::size_t target : {8u, 64u, 512u}) {
    for (; done < target; ++done) {
      auto f = orthogonal_random_features<double>(16, d, rng);
      const auto a = favor_attention(q, k, eye, f);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += a[i];
    }
    double err = 0;
    for (std::size_t i = 0; i < acc.size(); ++i) err = std::max(err, std::abs(acc[i] / done - exact[i]));
    errors.push_back(err);
  }
  EXPECT_GT(errors[0], errors[1]);
  EXPECT_GT(errors[1], errors[2]);
  EXPECT_LT(errors[2], 0.01);
}

TEST(Favor, PermutationEquivariant) {
  Rng rng(325);
  const std::size_t n = 10;
  auto q = random_tensor({n, 8}, rng, -1, 1, false), k = random_tensor({n, 8}, rng, -1, 1, false);
  auto v = random_tensor({n, 8}, rng, -1, 1, false);
  auto f = orthogonal_random_features<double>(32, 8, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const T& x) {
    T out(x.shape());
    const std::size_t w = x.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < w; ++c) out.mutable_data()[i * w + c] = x[perm[i] * w + c];
    return out;
  };
  const auto y = favor_attention(q, k, v, f);
  const auto yp = favor_attention(permute(q), permute(k), permute(v), f);
  EXPECT_LT(test_support::max_abs_diff(yp.data(), permute(y).data()), 1e-12);
}

TEST(Favor, RuntimeScalesLinearly) {
  Rng rng(326);
  auto f = orthogonal_random_features<float>(110, 32, rng);
  auto time_for = [&](std::size_t n) {
    Tensor<float> q({n, 32}), k({n, 32}), v({n, 32});
    std::uniform_real_distribution<float> u(-1, 1);
    for (auto* t : {&q, &k, &v})
      for (auto& x : t->mutable_data()) x = u(rng);
    ad::NoGradScope<float> guard;
    double best = 1e300;
    for (int rep = 0; rep < 20; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      auto y = favor_attention(q, k, v, f);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double small = time_for(512), large = time_for(4096);
  EXPECT_LT(large / small, 12.0) << "512: " << small << " s, 4096: " << large << " s";
}

TEST(Favor, StabilisationIsFlagged) {
  // Queries saturate feature 0 and keys feature 1, so phi(Q) phi(K)^T underflows.
  T q({2, 2}, {20.0, 0.0, 20.0, 0.0});
  T k({2, 2}, {-20.0, 0.0, -19.0, 0.0});
  T v({2, 1}, {1.0, 2.0});
  T f({2, 2}, {1.0, 0.0, -1.0, 0.0});
  FavorDiagnostics diag;
  const auto y = favor_attention(q, k, v, f, &diag);
  EXPECT_EQ(diag.calls, 1u);
  EXPECT_EQ(diag.stabilized, 1u);
  for (double x : y.data()) EXPECT_TRUE(std::isfinite(x));
  T q_ok({2, 2}, {0.1, 0.2, -0.3, 0.1});
  favor_attention(q_ok, q_ok, v, f, &diag);
  EXPECT_EQ(diag.calls, 2u);
  EXPECT_EQ(diag.stabilized, 1u);
}

TEST(Favor, ErrorShrinksWithInputNorm) {
  // Estimator variance grows like exp(|q + k|^2 / sqrt(d)); halving the input
  // scale should cut the error by a large factor.
  auto median_error = [](double half_width) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(1000 + seed);
      auto q = random_tensor({16, 32}, rng, -half_width, half_width, false);
      auto k = random_tensor({16, 32}, rng, -half_width, half_width, false);
      auto v = random_tensor({16, 32}, rng, -1, 1, false);
      auto f = orthogonal_random_features<double>(256, 32, rng);
      errs.push_back(frob_rel(favor_attention(q, k, v, f).data(), exact_attention(q, k, v).data()));
    }
    std::nth_element(errs.begin(), errs.begin() + 25, errs.end());
    return errs[25];
  };
  const double e1 = median_error(1.0), e05 = median_error(0.5), e025 = median_error(0.25);
  EXPECT_GT(e1, 2 * e05);
  EXPECT_GT(e05, 1.5 * e025);
}

TEST(PerformerBlock, ZeroProjectionsGiveIdentity) {
  Rng rng(330);
  auto cfg = small_config();
  PerformerBlock<double> b(cfg);
  b.init(rng);
  for (auto* t : {&b.to_out.weight, &b.to_out.bias, &b.ff_out.weight, &b.ff_out.bias})
    std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0);
  auto x = random_tensor({6, 8}, rng, -1, 1, false);
  const auto y = b.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(PerformerBlock, DefaultShape) {
  Rng rng(331);
  PerformerConfig cfg;
  PerformerBlock<float> b(cfg);
  b.init(rng);
  Tensor<float> x({128, 256});
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : x.mutable_data()) v = u(rng);
  EXPECT_EQ(b.forward(x).shape(), (ad::Shape{128, 256}));
  EXPECT_THROW(b.forward(Tensor<float>({128, 200})), std::invalid_argument);
}

TEST(PerformerBlock, GradientCheck) {
  Rng rng(332);
  PerformerBlock<double> b(small_config());
  b.init(rng);
  auto x = random_tensor({6, 8}, rng);
  auto w = random_tensor({6, 8}, rng, -1, 1, false);
  nn::ParameterList<double> ps;
  b.collect("block", ps);
  std::vector<T> wrt{x};
  for (auto& p : ps) wrt.push_back(p.tensor);
  auto r = ad::grad_check([&] { return ad::sum(ad::mul(b.forward(x), w)); }, wrt);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.nan_count, 0u);
}

TEST(PerformerStack, RedrawChangesOnlyFeatures) {
  PerformerConfig cfg = small_config();
  cfg.layers = 2;
  PerformerStack<double> s(cfg);
  Rng rng(333);
  s.init(rng);
  const auto before = s.blocks[1].features.detach();
  const auto w_before = s.blocks[1].to_q.weight.detach();
  s.redraw_features(7);
  EXPECT_GT(test_support::max_abs_diff(before.data(), s.blocks[1].features.data()), 0.0);
  EXPECT_EQ(test_support::max_abs_diff(w_before.data(), s.blocks[1].to_q.weight.data()), 0.0);
  const auto again = s.blocks[1].features.detach();
  s.redraw_features(7);
  EXPECT_EQ(test_support::max_abs_diff(again.data(), s.blocks[1].features.data()), 0.0);
  nn::ParameterList<double> buffers;
  s.collect_buffers("performer", buffers);
  ASSERT_EQ(buffers.size(), 2u);
  EXPECT_EQ(buffers[0].name, "performer.layer0.features");
}

TEST(PerformerConfig, Validation) {
  PerformerConfig c;
  c.heads = 9;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PerformerConfig{};
  c.local_heads = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(PerformerConfig{}.validate());
}

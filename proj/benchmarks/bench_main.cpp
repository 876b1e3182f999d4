#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tunet/model.hpp"
#include "tunet/objectives.hpp"
#include "tunet/performer.hpp"
#include "tunet/stream.hpp"

using namespace tunet;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

ad::Tensor<float> noise_tensor(ad::Shape s, std::uint64_t seed) {
  auto v = noise(ad::numel_of(s), seed);
  return ad::Tensor<float>(std::move(s), std::vector<float>(v.begin(), v.end()));
}

// One 8192-sample chunk through the default model, no tape.
void BM_ForwardDefault(benchmark::State& state) {
  model::TUNet<float> net(model::TUNetConfig{});
  net.init(1);
  const auto x = noise(8192, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(x));
  state.counters["params"] = static_cast<double>(net.parameter_count());
}
BENCHMARK(BM_ForwardDefault)->Unit(benchmark::kMillisecond);

void BM_TrainStepDefault(benchmark::State& state) {
  model::TUNet<float> net(model::TUNetConfig{});
  net.init(1);
  const auto xs = noise(8192, 3), ys = noise(8192, 4);
  ad::Tensor<float> x({1, 8192}, std::vector<float>(xs.begin(), xs.end()));
  ad::Tensor<float> y({1, 8192}, std::vector<float>(ys.begin(), ys.end()));
  for (auto _ : state) {
    ad::Tape<float> tape;
    ad::TapeScope<float> scope(tape);
    auto loss = objectives::total_loss(net.forward(x), y, 10000.0);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TrainStepDefault)->Unit(benchmark::kMillisecond);

// Exact vs FAVOR+ across sequence length, d = 32, m = 256.
void BM_ExactAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto q = noise_tensor({n, 32}, 5), k = noise_tensor({n, 32}, 6), v = noise_tensor({n, 32}, 7);
  ad::NoGradScope<float> ng;
  for (auto _ : state) benchmark::DoNotOptimize(performer::exact_attention(q, k, v));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ExactAttention)->RangeMultiplier(2)->Range(128, 4096)->Complexity()->Unit(benchmark::kMillisecond);

void BM_FavorAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto q = noise_tensor({n, 32}, 5), k = noise_tensor({n, 32}, 6), v = noise_tensor({n, 32}, 7);
  Rng rng(8);
  auto w = performer::orthogonal_random_features<float>(256, 32, rng);
  ad::NoGradScope<float> ng;
  for (auto _ : state) benchmark::DoNotOptimize(performer::favor_attention(q, k, v, w));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FavorAttention)->RangeMultiplier(2)->Range(128, 4096)->Complexity()->Unit(benchmark::kMillisecond);

// Per-chunk cost of streaming, 1 s of audio.
void BM_StreamOneSecond(benchmark::State& state) {
  model::TUNet<float> net(model::TUNetConfig{});
  net.init(1);
  const auto x = noise(16000, 9);
  stream::ChunkFunction fn = [&net](const std::vector<double>& w) { return net.infer(w); };
  for (auto _ : state) benchmark::DoNotOptimize(stream::stream_process(fn, x));
}
BENCHMARK(BM_StreamOneSecond)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

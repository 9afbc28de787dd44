#include <benchmark/benchmark.h>

#include <random>

#include "sstdunet/attention.hpp"
#include "sstdunet/conv.hpp"
#include "sstdunet/metrics.hpp"

using namespace sstdunet;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void bench_conv3d(benchmark::State& state) {
  const std::size_t c = std::size_t(state.range(0));
  auto x = Tensor<float>::from_data({1, c, 32, 32, 16}, random_vec(c * 32 * 32 * 16, 1));
  auto w = Tensor<float>::from_data({c, c, 3, 3, 3}, random_vec(c * c * 27, 2));
  auto b = Tensor<float>::from_data({c}, random_vec(c, 3));
  for (auto _ : state) {
    auto y = conv3d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(x.size()));
}

void bench_attention(benchmark::State& state) {
  const std::size_t C = std::size_t(state.range(0)), H = C / 16, P = 64, NW = 64;
  AttentionParams<float> p(C);
  ParamList<float> pl;
  p.collect(pl, "a");
  init_params(pl, 5);
  auto x = Tensor<float>::from_data({NW, P, C}, random_vec(NW * P * C, 6));
  for (auto _ : state) {
    auto y = msa_forward(x, p, H);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(NW * P));
}

void bench_hausdorff(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  std::mt19937_64 rng(7);
  std::bernoulli_distribution d(0.2);
  Mask3D a{{n, n, n}, {}}, b{{n, n, n}, {}};
  a.data.resize(a.size());
  b.data.resize(b.size());
  for (auto& v : a.data) v = d(rng) ? 1 : 0;
  for (auto& v : b.data) v = d(rng) ? 1 : 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hausdorff(a, b));
  }
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(a.size()));
}

}  // namespace

BENCHMARK(bench_conv3d)->Arg(16)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);
BENCHMARK(bench_attention)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(bench_hausdorff)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

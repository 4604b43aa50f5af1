// Parallel kernels vs their serial references, at the sizes the toy model uses.
// Set OMP_NUM_THREADS to compare thread counts.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "consensus/kernels.hpp"

namespace k = consensus::kernels;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

k::ConvGeometry geometry(const benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  return k::ConvGeometry{c, hw, hw, c, 3, 1, 1};
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(false, false, n, n, n, 1.0, a, b, 0.0, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

template <auto Conv>
void BM_ConvForward(benchmark::State& state) {
  const k::ConvGeometry g = geometry(state);
  const auto x = random_values(g.in_channels * g.height * g.width, 3);
  const auto w = random_values(g.out_channels * g.patch_size(), 4);
  const auto bias = random_values(g.out_channels, 5);
  std::vector<double> y(g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    Conv(g, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Backward>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const k::ConvGeometry g = geometry(state);
  const auto x = random_values(g.in_channels * g.height * g.width, 6);
  const auto dy = random_values(g.out_channels * g.out_height() * g.out_width(), 7);
  std::vector<double> dw(g.out_channels * g.patch_size()), db(g.out_channels);
  for (auto _ : state) {
    Backward(g, x, dy, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

template <auto Unfold>
void BM_Unfold(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const std::size_t r = 5;
  const auto x = random_values(c * hw * hw, 8);
  std::vector<double> out(c * hw * hw * r * r);
  for (auto _ : state) {
    Unfold(c, hw, hw, r, x, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<k::gemm>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<k::gemm_reference>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<k::conv2d_forward>)->Name("conv_forward/parallel")->Args({16, 32})->Args({64, 16});
BENCHMARK(BM_ConvForward<k::conv2d_forward_reference>)
    ->Name("conv_forward/reference")
    ->Args({16, 32})
    ->Args({64, 16});
BENCHMARK(BM_ConvBackwardWeight<k::conv2d_backward_weight>)
    ->Name("conv_backward_weight/parallel")
    ->Args({16, 32})
    ->Args({64, 16});
BENCHMARK(BM_ConvBackwardWeight<k::conv2d_backward_weight_reference>)
    ->Name("conv_backward_weight/reference")
    ->Args({16, 32})
    ->Args({64, 16});
BENCHMARK(BM_Unfold<k::unfold>)->Name("unfold/parallel")->Args({4, 8})->Args({16, 32});
BENCHMARK(BM_Unfold<k::unfold_reference>)->Name("unfold/reference")->Args({4, 8})->Args({16, 32});

BENCHMARK_MAIN();

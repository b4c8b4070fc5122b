#include <benchmark/benchmark.h>

#include "agb/acquisition.hpp"
#include "agb/fft.hpp"
#include "agb/ops.hpp"
#include "agb/rng.hpp"

using namespace agb;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

void BM_Fft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto img = gen_phantom(1, n, n, 6);
  for (auto _ : state) benchmark::DoNotOptimize(fft2(img));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Fft2)->Arg(32)->Arg(48)->Arg(64)->Arg(256);

void BM_AcquireReconstruct(benchmark::State& state) {
  const auto img = gen_phantom(1, 32, 32, 6);
  const auto maps = gen_sensitivity_maps(1, 4, 32, 32);
  for (auto _ : state) benchmark::DoNotOptimize(reconstruct(acquire(img, maps), maps));
}
BENCHMARK(BM_AcquireReconstruct);

// Forward + backward of one conv layer; args: channels in/out, spatial size, stride.
void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto stride = static_cast<std::size_t>(state.range(2));
  const std::size_t k = stride == 1 ? 5 : 4;
  const auto x0 = random_values(4 * c * n * n, 1);
  const auto w0 = random_values(c * c * k * k, 2);
  const auto b0 = random_values(c, 3);
  for (auto _ : state) {
    ad::Tape<float> t;
    const auto x = t.leaf({4, c, n, n}, x0, true);
    const auto w = t.leaf({c, c, k, k}, w0, true);
    const auto b = t.leaf({c}, b0, true);
    benchmark::DoNotOptimize(t.backward(ad::sum(ad::conv2d(x, w, b, stride))));
  }
}
BENCHMARK(BM_Conv2d)->Args({8, 32, 1})->Args({16, 32, 2})->Args({64, 8, 2});

}  // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "pei/defense.hpp"
#include "pei/random.hpp"

namespace {

void BM_LossyRoundtrip(benchmark::State& state) {
  const auto n = static_cast<std::uint32_t>(state.range(0));
  const auto x = pei::uniform_image({n, n, 3}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(pei::lossy_roundtrip(x, pei::CodecConfig{30}));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LossyRoundtrip)->Arg(32)->Arg(256);

void BM_ResizeNearest(benchmark::State& state) {
  const auto x = pei::uniform_image({32, 32, 3}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(pei::resize(x, {256, 256, pei::Interpolation::Nearest}));
}
BENCHMARK(BM_ResizeNearest);

}  // namespace

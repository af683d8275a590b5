#include <vector>

#include <benchmark/benchmark.h>

#include "pei/encoder.hpp"
#include "pei/numerics.hpp"
#include "pei/random.hpp"
#include "pei/synthesis.hpp"

namespace {

void BM_SphereDraw(benchmark::State& state) {
  pei::SphereSampler sampler(1);
  std::vector<float> mu(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    sampler.draw(mu);
    benchmark::DoNotOptimize(mu.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SphereDraw)->Arg(3072)->Arg(12288);

// One synthesis iteration's gradient estimate at toy scale (S = 64).
void BM_EstimateGradient(benchmark::State& state) {
  const pei::ImageShape shape{32, 32, 3};
  const auto enc = pei::build_encoder({"lin", pei::EncoderArch::LinearProject, 1, shape, 64});
  const auto target = enc->encode(pei::uniform_image(shape, 2));
  const pei::BatchLoss loss = [&](std::span<const pei::ImageTensor> ps) {
    std::vector<double> out;
    for (const auto& e : enc->encode_batch(ps)) out.push_back(pei::squared_embedding_loss(e, target));
    return out;
  };
  const auto x = pei::uniform_image(shape, 3);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(pei::estimate_gradient(loss, x, state.range(0), 0.5, ++seed));
}
BENCHMARK(BM_EstimateGradient)->Arg(64)->Arg(100);

}  // namespace

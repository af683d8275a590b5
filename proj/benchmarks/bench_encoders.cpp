#include <vector>

#include <benchmark/benchmark.h>

#include "pei/encoder.hpp"
#include "pei/random.hpp"

namespace {

void BM_EncodeBatch(benchmark::State& state) {
  const auto arch = static_cast<pei::EncoderArch>(state.range(0));
  const pei::ImageShape shape{32, 32, 3};
  const auto enc = pei::build_encoder({"bench", arch, 1, shape, 64});
  std::vector<pei::ImageTensor> batch;
  for (std::uint64_t i = 0; i < 128; ++i) batch.push_back(pei::uniform_image(shape, i));
  for (auto _ : state) benchmark::DoNotOptimize(enc->encode_batch(batch));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
  state.SetLabel(std::string(pei::to_string(arch)));
}
BENCHMARK(BM_EncodeBatch)
    ->Arg(static_cast<int>(pei::EncoderArch::LinearProject))
    ->Arg(static_cast<int>(pei::EncoderArch::PatchProject))
    ->Arg(static_cast<int>(pei::EncoderArch::RandomConv))
    ->Arg(static_cast<int>(pei::EncoderArch::FourierFeature));

}  // namespace

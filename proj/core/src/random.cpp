#include "pei/random.hpp"

#include <cmath>
#include <stdexcept>

namespace pei {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

struct Fnv {
  std::uint64_t h = kFnvOffset;

  void byte(std::uint8_t b) noexcept {
    h ^= b;
    h *= kFnvPrime;
  }
  void u64(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void label(const SeedLabel& l) {
    if (l.is_name()) {
      byte(0x01);
      for (char c : l.name()) byte(static_cast<std::uint8_t>(c));
      byte(0x00);
    } else {
      byte(0x02);
      u64(l.index());
    }
  }
};

std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SeedSpec SeedSpec::child(std::initializer_list<SeedLabel> more) const {
  SeedSpec out = *this;
  out.labels.insert(out.labels.end(), more.begin(), more.end());
  return out;
}

std::uint64_t derive_seed(const SeedSpec& spec, std::span<const SeedLabel> path) {
  if (path.empty()) throw std::invalid_argument("derive_seed: empty label path");
  Fnv fnv;
  fnv.u64(spec.master_seed);
  for (const auto& l : spec.labels) fnv.label(l);
  for (const auto& l : path) fnv.label(l);
  return splitmix_finalize(fnv.h);
}

std::uint64_t derive_seed(const SeedSpec& spec, std::initializer_list<SeedLabel> path) {
  return derive_seed(spec, std::span<const SeedLabel>(path.begin(), path.size()));
}

void SphereSampler::draw(std::span<float> out) {
  if (out.empty()) throw std::invalid_argument("sample_unit_sphere: dim must be >= 1");
  // Accumulate in double so the float result is unit-norm to ~1e-7.
  thread_local std::vector<double> buffer;
  buffer.resize(out.size());
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& v : buffer) {
      v = normal_(engine_);
      norm2 += v * v;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(buffer[i] * inv);
}

std::vector<float> sample_unit_sphere(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("sample_unit_sphere: dim must be >= 1");
  std::vector<float> out(dim);
  SphereSampler sampler(seed);
  sampler.draw(out);
  return out;
}

ImageTensor uniform_image(ImageShape shape, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  std::vector<float> data(shape.size());
  for (float& v : data) v = uniform(engine);
  return ImageTensor(shape, std::move(data));
}

}  // namespace pei

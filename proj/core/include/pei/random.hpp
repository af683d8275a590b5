#pragma once

#include <concepts>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pei/tensor.hpp"

namespace pei {

/// One element of a seed derivation path: either a name or an index.
class SeedLabel {
 public:
  SeedLabel(const char* name) : value_(std::string(name)) {}
  SeedLabel(std::string_view name) : value_(std::string(name)) {}
  SeedLabel(std::string name) : value_(std::move(name)) {}
  template <std::integral T>
  SeedLabel(T index) : value_(static_cast<std::uint64_t>(index)) {}

  bool is_name() const noexcept { return std::holds_alternative<std::string>(value_); }
  const std::string& name() const { return std::get<std::string>(value_); }
  std::uint64_t index() const { return std::get<std::uint64_t>(value_); }

 private:
  std::variant<std::string, std::uint64_t> value_;
};

/// A master seed plus a label prefix. Every stream in the toolkit is derived
/// from one of these, so results never depend on call order or thread count.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::vector<SeedLabel> labels;

  SeedSpec child(std::initializer_list<SeedLabel> more) const;
};

/// Hash chain (all multiplication mod 2^64):
///
///   h = 0xcbf29ce484222325                       FNV-1a offset basis
///   fold(b): h = (h ^ b) * 0x100000001b3         FNV-1a prime
///   fold the 8 little-endian bytes of master_seed
///   for each label of spec.labels followed by path:
///     name  -> fold(0x01), fold each byte, fold(0x00)
///     index -> fold(0x02), fold the 8 little-endian bytes
///   return splitmix64_finalize(h)
///
/// splitmix64_finalize(z): z = (z ^ z>>30) * 0xbf58476d1ce4e5b9;
///                         z = (z ^ z>>27) * 0x94d049bb133111eb; z ^ z>>31.
///
/// Throws std::invalid_argument when `path` is empty.
std::uint64_t derive_seed(const SeedSpec& spec, std::span<const SeedLabel> path);
std::uint64_t derive_seed(const SeedSpec& spec, std::initializer_list<SeedLabel> path);

/// Uniform direction on S^{dim-1}: i.i.d. standard normals, normalized.
std::vector<float> sample_unit_sphere(std::size_t dim, std::uint64_t seed);

/// Successive unit-sphere draws from one seeded stream; the gradient
/// estimator draws its S directions per iteration from one of these.
class SphereSampler {
 public:
  explicit SphereSampler(std::uint64_t seed) : engine_(seed) {}
  void draw(std::span<float> out);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Image with i.i.d. U[0,1] entries.
ImageTensor uniform_image(ImageShape shape, std::uint64_t seed);

}  // namespace pei

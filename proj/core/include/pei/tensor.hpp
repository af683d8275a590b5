#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pei {

struct ImageShape {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;

  std::size_t size() const noexcept {
    return std::size_t{height} * width * channels;
  }
  bool valid() const noexcept { return height > 0 && width > 0 && channels > 0; }
  std::string to_string() const;

  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// H x W x C image stored row-major (channel fastest). Elements are always
/// finite; iterates of the attack live in [0,1] while probe tensors may hold
/// any finite value.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(ImageShape shape, float fill = 0.0f);
  /// Throws std::invalid_argument when the length does not match the shape
  /// or any element is NaN/inf.
  ImageTensor(ImageShape shape, std::vector<float> data);

  const ImageShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& at(std::uint32_t y, std::uint32_t x, std::uint32_t c) noexcept {
    return data_[(std::size_t{y} * shape_.width + x) * shape_.channels + c];
  }
  float at(std::uint32_t y, std::uint32_t x, std::uint32_t c) const noexcept {
    return data_[(std::size_t{y} * shape_.width + x) * shape_.channels + c];
  }

  bool in_unit_range() const noexcept;
  bool all_finite() const noexcept;
  void clamp_unit() noexcept;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  ImageShape shape_{};
  std::vector<float> data_;
};

/// Encoder output. The dimension is fixed per encoder.
struct Embedding {
  std::vector<float> values;

  Embedding() = default;
  explicit Embedding(std::vector<float> v) : values(std::move(v)) {}

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

}  // namespace pei

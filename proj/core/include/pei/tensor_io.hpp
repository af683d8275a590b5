#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pei/tensor.hpp"

namespace pei::io {

/// On-disk tensor: "PEIT", u16 version, u16 rank, rank x u32 dims, then the
/// row-major payload as little-endian IEEE-754 binary32. All header integers
/// are little-endian.
inline constexpr std::uint16_t kTensorFormatVersion = 1;

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> dims,
                                        std::span<const float> data);
RawTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                  std::span<const float> data);
RawTensor read_tensor(const std::filesystem::path& path);

void write_image(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_image(const std::filesystem::path& path);

/// 8-bit PNG (gray, RGB or RGBA by channel count), values clamped to [0,1].
void write_png(const std::filesystem::path& path, const ImageTensor& image);

}  // namespace pei::io

#include "pei/tensor_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>

namespace pei::io {
namespace {

constexpr char kMagic[4] = {'P', 'E', 'I', 'T'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return std::uint32_t{b[at]} | std::uint32_t{b[at + 1]} << 8 | std::uint32_t{b[at + 2]} << 16 |
         std::uint32_t{b[at + 3]} << 24;
}

std::size_t element_count(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> dims,
                                        std::span<const float> data) {
  if (dims.size() > 0xffff) throw std::invalid_argument("encode_tensor: rank too large");
  if (element_count(dims) != data.size()) {
    throw std::invalid_argument("encode_tensor: payload length does not match dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * dims.size() + 4 * data.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u16(out, kTensorFormatVersion);
  put_u16(out, static_cast<std::uint16_t>(dims.size()));
  for (auto d : dims) put_u32(out, d);
  for (float v : data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

RawTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::invalid_argument("decode_tensor: missing PEIT magic");
  }
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | bytes[5] << 8);
  if (version != kTensorFormatVersion) {
    throw std::invalid_argument("decode_tensor: unsupported version " + std::to_string(version));
  }
  const std::uint16_t rank = static_cast<std::uint16_t>(bytes[6] | bytes[7] << 8);
  std::size_t at = 8;
  if (bytes.size() < at + 4 * std::size_t{rank}) throw std::invalid_argument("decode_tensor: truncated header");
  RawTensor t;
  t.dims.resize(rank);
  for (auto& d : t.dims) {
    d = get_u32(bytes, at);
    at += 4;
  }
  const std::size_t n = element_count(t.dims);
  if (bytes.size() != at + 4 * n) throw std::invalid_argument("decode_tensor: payload length mismatch");
  t.data.resize(n);
  for (auto& v : t.data) {
    v = std::bit_cast<float>(get_u32(bytes, at));
    at += 4;
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                  std::span<const float> data) {
  const auto bytes = encode_tensor(dims, data);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_tensor: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_tensor: write failed for " + path.string());
}

RawTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_tensor: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

void write_image(const std::filesystem::path& path, const ImageTensor& image) {
  const std::uint32_t dims[3] = {image.shape().height, image.shape().width, image.shape().channels};
  write_tensor(path, dims, image.data());
}

ImageTensor read_image(const std::filesystem::path& path) {
  auto raw = read_tensor(path);
  if (raw.dims.size() != 3) throw std::invalid_argument("read_image: expected a rank-3 tensor in " + path.string());
  return ImageTensor({raw.dims[0], raw.dims[1], raw.dims[2]}, std::move(raw.data));
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  const auto& s = image.shape();
  const int color_type = [&] {
    switch (s.channels) {
      case 1: return PNG_COLOR_TYPE_GRAY;
      case 3: return PNG_COLOR_TYPE_RGB;
      case 4: return PNG_COLOR_TYPE_RGBA;
      default: throw std::invalid_argument("write_png: unsupported channel count " + std::to_string(s.channels));
    }
  }();
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng initialisation failed");
  }
  std::vector<png_byte> pixels(image.size());
  std::transform(image.data().begin(), image.data().end(), pixels.begin(), [](float v) {
    return static_cast<png_byte>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  std::vector<png_bytep> rows(s.height);
  for (std::uint32_t y = 0; y < s.height; ++y) rows[y] = pixels.data() + std::size_t{y} * s.width * s.channels;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, s.width, s.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace pei::io

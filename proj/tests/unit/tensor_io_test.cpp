#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "pei/tensor_io.hpp"
#include "support.hpp"

namespace pei {
namespace {

TEST(TensorFormat, HeaderLayout) {
  const std::vector<std::uint32_t> dims{2, 3};
  const std::vector<float> data{1, 2, 3, 4, 5, 6};
  const auto bytes = io::encode_tensor(dims, data);
  ASSERT_EQ(bytes.size(), 4u + 2 + 2 + 2 * 4 + 6 * 4);
  EXPECT_EQ(std::memcmp(bytes.data(), "PEIT", 4), 0);
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 2);  // rank
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 3);
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + 16, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(TensorFormat, RoundTrip) {
  const std::vector<std::uint32_t> dims{3, 1, 2};
  const std::vector<float> data{-1.5f, 0.0f, 2.25f, 1e-30f, 7.0f, -0.0f};
  const auto raw = io::decode_tensor(io::encode_tensor(dims, data));
  EXPECT_EQ(raw.dims, dims);
  ASSERT_EQ(raw.data.size(), data.size());
  EXPECT_EQ(std::memcmp(raw.data.data(), data.data(), data.size() * 4), 0);
}

TEST(TensorFormat, RejectsBadInput) {
  const std::vector<std::uint32_t> dims{2};
  const std::vector<float> data{1, 2};
  auto bytes = io::encode_tensor(dims, data);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(io::decode_tensor(bad_magic), std::invalid_argument);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(io::decode_tensor(truncated), std::invalid_argument);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(io::decode_tensor(version), std::invalid_argument);
  EXPECT_THROW(io::encode_tensor(dims, std::vector<float>{1}), std::invalid_argument);
}

TEST(TensorFormat, ImageFileRoundTrip) {
  test::TempDir dir;
  const auto img = test::random_image({5, 4, 3}, 2);
  io::write_image(dir / "x.peit", img);
  EXPECT_EQ(io::read_image(dir / "x.peit"), img);
}

TEST(TensorFormat, PngSignature) {
  test::TempDir dir;
  io::write_png(dir / "x.png", test::random_image({8, 8, 3}, 1));
  std::ifstream f(dir / "x.png", std::ios::binary);
  unsigned char sig[8] = {};
  f.read(reinterpret_cast<char*>(sig), 8);
  const unsigned char want[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  EXPECT_EQ(std::memcmp(sig, want, 8), 0);
  EXPECT_THROW(io::write_png(dir / "y.png", ImageTensor({2, 2, 5})), std::invalid_argument);
}

TEST(ImageTensorTest, RejectsNonFinite) {
  std::vector<float> v(4, 0.0f);
  v[2] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(ImageTensor({2, 2, 1}, v), std::invalid_argument);
  EXPECT_THROW(ImageTensor({2, 2, 1}, std::vector<float>(3)), std::invalid_argument);
}

TEST(ImageTensorTest, ClampUnit) {
  ImageTensor t({1, 3, 1}, std::vector<float>{-0.5f, 0.5f, 1.5f});
  EXPECT_FALSE(t.in_unit_range());
  t.clamp_unit();
  EXPECT_EQ(t.values(), (std::vector<float>{0.0f, 0.5f, 1.0f}));
}

}  // namespace
}  // namespace pei

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "pei/defense.hpp"
#include "pei/head.hpp"
#include "pei/numerics.hpp"
#include "support.hpp"

namespace pei {
namespace {

constexpr int kBaseLuma[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                               14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                               18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                               49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

TEST(QuantTable, AnchorQualities) {
  const auto q50 = quant_table(50);
  for (int i = 0; i < 64; ++i) EXPECT_EQ(q50[i], kBaseLuma[i]);
  for (int v : quant_table(100)) EXPECT_EQ(v, 1);
  for (int v : quant_table(1)) {
    EXPECT_GE(v, 1);
    EXPECT_LE(v, 255);
  }
  // q = 30: scale 5000/30 = 166.
  EXPECT_EQ(quant_table(30)[0], (16 * 166 + 50) / 100);
  EXPECT_EQ(quant_table(30)[63], 255 < (99 * 166 + 50) / 100 ? 255 : (99 * 166 + 50) / 100);
}

TEST(QuantTable, InvalidQuality) {
  EXPECT_THROW(CodecConfig{0}.validate(), std::invalid_argument);
  EXPECT_THROW(CodecConfig{101}.validate(), std::invalid_argument);
  EXPECT_NO_THROW(CodecConfig{1}.validate());
  EXPECT_THROW(lossy_roundtrip(test::random_image({8, 8, 1}, 1), CodecConfig{0}), std::invalid_argument);
}

TEST(Dct, MatchesDirectFormula) {
  std::vector<double> in(64);
  for (int i = 0; i < 64; ++i) in[i] = std::sin(0.37 * i) * 100.0;
  std::vector<double> out(64);
  dct8x8(in.data(), out.data());
  const auto alpha = [](int k) { return k == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8); };
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          s += in[y * 8 + x] * std::cos((2 * y + 1) * u * M_PI / 16) * std::cos((2 * x + 1) * v * M_PI / 16);
      EXPECT_NEAR(out[u * 8 + v], alpha(u) * alpha(v) * s, 1e-9);
    }
  }
}

TEST(Dct, OrthonormalRoundTrip) {
  std::vector<double> in(64), mid(64), back(64);
  for (int i = 0; i < 64; ++i) in[i] = std::cos(1.3 * i + 0.2) * 50.0;
  dct8x8(in.data(), mid.data());
  idct8x8(mid.data(), back.data());
  double e_in = 0.0, e_mid = 0.0;
  for (int i = 0; i < 64; ++i) {
    EXPECT_NEAR(back[i], in[i], 1e-9);
    e_in += in[i] * in[i];
    e_mid += mid[i] * mid[i];
  }
  EXPECT_NEAR(e_in, e_mid, 1e-6);
}

TEST(Codec, QualityHundredIsNearLossless) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = test::random_image({32, 32, 3}, s);
    EXPECT_GE(psnr(x, lossy_roundtrip(x, CodecConfig{100})), 35.0) << s;
  }
}

TEST(Codec, ConstantImageOnlyLosesDcStep) {
  // Only the DC term is non-zero: half a quantization step is table[0] / 16
  // pixel levels, plus half a level from the final rounding.
  for (int q : {1, 10, 30, 50, 100}) {
    const auto y = lossy_roundtrip(ImageTensor({13, 21, 3}, 0.37f), CodecConfig{q});
    ASSERT_EQ(y.shape(), (ImageShape{13, 21, 3}));
    const float bound = static_cast<float>((quant_table(q)[0] / 16.0 + 0.5) / 255.0) + 1e-6f;
    for (float v : y.values()) ASSERT_NEAR(v, 0.37f, bound) << q;
  }
}

TEST(Codec, DeterministicAndInRange) {
  const auto x = test::random_image({24, 24, 3}, 4);
  const auto a = lossy_roundtrip(x, CodecConfig{30});
  EXPECT_EQ(a, lossy_roundtrip(x, CodecConfig{30}));
  EXPECT_TRUE(a.in_unit_range());
  EXPECT_LT(psnr(x, a), psnr(x, lossy_roundtrip(x, CodecConfig{90})));
}

TEST(Codec, SecondPassChangesLittle) {
  const auto x = test::random_image({32, 32, 3}, 6);
  const auto once = lossy_roundtrip(x, CodecConfig{10});
  const auto twice = lossy_roundtrip(once, CodecConfig{10});
  EXPECT_GT(psnr(once, twice), psnr(x, once));
}

TEST(Resize, BilinearConstantStaysConstant) {
  const auto y = resize(ImageTensor({2, 2, 1}, 0.5f), {8, 8, Interpolation::Bilinear});
  ASSERT_EQ(y.shape(), (ImageShape{8, 8, 1}));
  for (float v : y.values()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Resize, BilinearAlignsCorners) {
  const ImageTensor x({1, 2, 1}, std::vector<float>{0.0f, 1.0f});
  const auto y = resize(x, {1, 5, Interpolation::Bilinear});
  const std::vector<float> want{0.0f, 0.25f, 0.5f, 0.75f, 1.0f};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_FLOAT_EQ(y.values()[i], want[i]);
}

TEST(Resize, NearestDoublingMakesBlocks) {
  const auto x = test::random_image({3, 4, 2}, 1);
  const auto y = resize(x, {6, 8, Interpolation::Nearest});
  for (std::uint32_t r = 0; r < 6; ++r)
    for (std::uint32_t c = 0; c < 8; ++c)
      for (std::uint32_t ch = 0; ch < 2; ++ch) EXPECT_EQ(y.at(r, c, ch), x.at(r / 2, c / 2, ch));
}

TEST(Resize, NearestUpThenDownIsIdentity) {
  const auto x = test::random_image({32, 32, 3}, 2);
  const auto up = resize(x, {256, 256, Interpolation::Nearest});
  EXPECT_EQ(resize(up, {32, 32, Interpolation::Nearest}), x);
  std::map<float, int> a, b;
  for (float v : x.values()) a[v] += 64;
  for (float v : up.values()) ++b[v];
  EXPECT_EQ(a, b);
}

TEST(Resize, ZeroTargetRejected) {
  EXPECT_THROW(resize(ImageTensor({2, 2, 1}), {0, 4, Interpolation::Nearest}), std::invalid_argument);
  EXPECT_THROW(parse_interpolation("cubic"), std::invalid_argument);
  EXPECT_EQ(parse_interpolation("bilinear"), Interpolation::Bilinear);
}

TEST(DefendedService, HighQualityKeepsAnswers) {
  const ImageShape shape{32, 32, 3};
  auto enc = build_encoder({"lin", EncoderArch::LinearProject, 4, shape, 16});
  auto head = std::make_shared<const DownstreamHead>(init_head(HeadShape{16, {16}, 10}, 2));
  ServiceInstance svc("svc", enc, head, OutputMode::Soft);
  auto defended = wrap_service_with_defense(svc, CodecConfig{100});
  std::vector<ImageTensor> xs;
  for (std::uint64_t s = 0; s < 200; ++s) xs.push_back(test::random_image(shape, 100 + s));
  const auto a = svc.predict(xs, OutputMode::Hard);
  const auto b = defended.predict(xs, OutputMode::Hard);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) agree += a[i] == b[i];
  EXPECT_GE(static_cast<double>(agree) / xs.size(), 0.95);
  EXPECT_EQ(defended.queries(), 200u);
  EXPECT_EQ(svc.queries(), 200u);
}

TEST(DefendedService, AcceptsLargerSubmissions) {
  const ImageShape shape{32, 32, 3};
  auto enc = build_encoder({"lin", EncoderArch::LinearProject, 4, shape, 16});
  auto head = std::make_shared<const DownstreamHead>(init_head(HeadShape{16, {16}, 10}, 2));
  ServiceInstance svc("svc", enc, head, OutputMode::Soft);
  auto defended = wrap_service_with_defense(svc, CodecConfig{30});
  const auto big = resize(test::random_image(shape, 1), {256, 256, Interpolation::Nearest});
  EXPECT_NO_THROW(defended.predict(std::vector<ImageTensor>{big}, OutputMode::Hard));
}

TEST(BypassResize, RecordsTransform) {
  AttackSampleSet set;
  set.config.objectives = 1;
  set.config.replicas = 1;
  set.config.shape = {4, 4, 1};
  set.candidate_names = {"a"};
  set.samples = {test::random_image({4, 4, 1}, 1)};
  set.provenance.resize(1);
  set.ledger = BudgetLedger(1);
  const auto r = bypass_resize(set, {16, 16, Interpolation::Nearest});
  EXPECT_EQ(r.samples[0].shape(), (ImageShape{16, 16, 1}));
  ASSERT_EQ(r.transforms.size(), 1u);
  EXPECT_NE(r.transforms[0].find("nearest"), std::string::npos);
}

TEST(Psnr, IdenticalIsInfinite) {
  const auto x = test::random_image({4, 4, 1}, 1);
  EXPECT_TRUE(std::isinf(psnr(x, x)));
  EXPECT_THROW(psnr(x, ImageTensor({2, 2, 1})), std::invalid_argument);
}

}  // namespace
}  // namespace pei

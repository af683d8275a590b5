#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pei/encoder.hpp"
#include "pei/errors.hpp"
#include "pei/numerics.hpp"
#include "support.hpp"

namespace pei {
namespace {

const ImageShape kShape{32, 32, 3};

std::vector<ToyEncoderSpec> zoo_specs() {
  return {{"lin", EncoderArch::LinearProject, 1, kShape, 64},
          {"patch", EncoderArch::PatchProject, 2, kShape, 64},
          {"conv", EncoderArch::RandomConv, 3, kShape, 64},
          {"fourier", EncoderArch::FourierFeature, 4, kShape, 64}};
}

TEST(Encoders, DeterministicPerSeed) {
  const auto probe = test::random_image(kShape, 10);
  for (const auto& spec : zoo_specs()) {
    const auto a = build_encoder(spec)->encode(probe);
    const auto b = build_encoder(spec)->encode(probe);
    EXPECT_EQ(a, b) << spec.name;
    EXPECT_EQ(a.dim(), spec.dim) << spec.name;
  }
}

TEST(Encoders, SeedsGiveDifferentFunctions) {
  const auto probe = test::random_image(kShape, 10);
  for (auto spec : zoo_specs()) {
    const auto a = build_encoder(spec)->encode(probe);
    spec.seed += 100;
    EXPECT_NE(a, build_encoder(spec)->encode(probe)) << spec.name;
  }
}

TEST(Encoders, BatchCompositionDoesNotMatter) {
  std::vector<ImageTensor> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(test::random_image(kShape, 20 + i));
  // Probes may leave [0,1].
  batch[1].data()[0] = -3.0f;
  for (const auto& spec : zoo_specs()) {
    const auto enc = build_encoder(spec);
    const auto all = enc->encode_batch(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(all[i], enc->encode(batch[i])) << spec.name;
  }
}

TEST(Encoders, ShapeMismatchRejected) {
  for (const auto& spec : zoo_specs()) {
    EXPECT_THROW(build_encoder(spec)->encode(ImageTensor({16, 16, 3})), std::invalid_argument) << spec.name;
  }
}

TEST(Encoders, BadSpecsRejected) {
  EXPECT_THROW(parse_encoder_arch("ResNet"), std::invalid_argument);
  EXPECT_THROW(build_encoder({"x", EncoderArch::LinearProject, 0, kShape, 1}), std::invalid_argument);
  EXPECT_THROW(build_encoder({"x", EncoderArch::PatchProject, 0, {20, 20, 3}, 64}), std::invalid_argument);
  EXPECT_THROW(build_encoder({"x", EncoderArch::RandomConv, 0, {30, 30, 3}, 64}), std::invalid_argument);
  for (auto arch : {EncoderArch::LinearProject, EncoderArch::PatchProject, EncoderArch::RandomConv,
                    EncoderArch::FourierFeature}) {
    EXPECT_EQ(parse_encoder_arch(to_string(arch)), arch);
  }
}

TEST(LinearProject, WeightVarianceIsOneOverInputSize) {
  const auto enc = build_encoder({"lin", EncoderArch::LinearProject, 5, kShape, 64});
  const auto& w = dynamic_cast<const LinearProjectEncoder&>(*enc).weights();
  const double var = w.cast<double>().array().square().mean();
  EXPECT_NEAR(var * kShape.size(), 1.0, 0.02);
}

TEST(LinearProject, IsLinear) {
  const auto enc = build_encoder({"lin", EncoderArch::LinearProject, 5, kShape, 64});
  const auto a = test::random_image(kShape, 1);
  const auto b = test::random_image(kShape, 2);
  ImageTensor sum(kShape);
  for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] = 2.0f * a.data()[i] - b.data()[i];
  const auto ea = enc->encode(a).values;
  const auto eb = enc->encode(b).values;
  const auto es = enc->encode(sum).values;
  for (std::size_t i = 0; i < es.size(); ++i) EXPECT_NEAR(es[i], 2.0f * ea[i] - eb[i], 1e-4);
}

TEST(FourierFeature, ZeroImageGivesPhaseFeatures) {
  const auto enc = build_encoder({"f", EncoderArch::FourierFeature, 3, kShape, 64});
  const auto& phases = dynamic_cast<const FourierFeatureEncoder&>(*enc).phases();
  ASSERT_EQ(phases.size(), 32u);
  const auto e = enc->encode(ImageTensor(kShape, 0.0f)).values;
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_GE(phases[i], 0.0f);
    EXPECT_LT(phases[i], 2.0 * M_PI);
    EXPECT_FLOAT_EQ(e[i], static_cast<float>(std::cos(static_cast<double>(phases[i]))));
    EXPECT_FLOAT_EQ(e[32 + i], static_cast<float>(std::sin(static_cast<double>(phases[i]))));
  }
}

TEST(PatchProject, BoundedAndQuadrantSymmetricOnConstantImage) {
  const auto enc = build_encoder({"p", EncoderArch::PatchProject, 3, kShape, 64});
  const auto e = enc->encode(ImageTensor(kShape, 0.4f)).values;
  for (float v : e) {
    EXPECT_GT(v, -1.0f);
    EXPECT_LT(v, 1.0f);
  }
  // Every patch is identical, so all four quadrant blocks agree.
  for (std::size_t q = 1; q < 4; ++q) {
    for (std::size_t k = 0; k < 16; ++k) EXPECT_FLOAT_EQ(e[q * 16 + k], e[k]);
  }
}

TEST(RandomConv, NonNegativeFeatures) {
  const auto enc = build_encoder({"c", EncoderArch::RandomConv, 3, kShape, 64});
  for (std::uint64_t s = 0; s < 3; ++s) {
    for (float v : enc->encode(test::random_image(kShape, s)).values) EXPECT_GE(v, 0.0f);
  }
}

TEST(AnalyticGradient, OneDimensionalHandValue) {
  RowMatrixF w(1, 1);
  w(0, 0) = 2.0f;
  const LinearProjectEncoder enc("w", {1, 1, 1}, w);
  const ImageTensor x({1, 1, 1}, std::vector<float>{3.0f});
  const auto g = analytic_gradient(enc, x, Embedding({0.0f}));
  ASSERT_EQ(g.size(), 1u);
  EXPECT_FLOAT_EQ(g[0], 24.0f);
}

TEST(AnalyticGradient, ZeroAtMinimum) {
  const auto enc = build_encoder({"lin", EncoderArch::LinearProject, 5, kShape, 16});
  const auto x = test::random_image(kShape, 4);
  const auto g = analytic_gradient(*enc, x, enc->encode(x));
  EXPECT_LT(linf_norm(g), 1e-5);
}

TEST(AnalyticGradient, MatchesFiniteDifferences) {
  RowMatrixF w(2, 3);
  w << 1.0f, -2.0f, 0.5f, 0.25f, 3.0f, -1.0f;
  const LinearProjectEncoder enc("w", {1, 3, 1}, w);
  const ImageTensor x({1, 3, 1}, std::vector<float>{0.2f, -0.4f, 0.7f});
  const Embedding target({0.3f, -0.1f});
  const auto g = analytic_gradient(enc, x, target);
  for (std::size_t i = 0; i < 3; ++i) {
    ImageTensor hi = x, lo = x;
    hi.data()[i] += 1e-2f;
    lo.data()[i] -= 1e-2f;
    const double fd = (squared_embedding_loss(enc.encode(hi), target) - squared_embedding_loss(enc.encode(lo), target)) / 2e-2;
    EXPECT_NEAR(g[i], fd, 1e-3);
  }
}

TEST(AnalyticGradient, OtherEncodersUnsupported) {
  const auto enc = build_encoder({"c", EncoderArch::RandomConv, 3, kShape, 64});
  const auto x = test::random_image(kShape, 1);
  EXPECT_THROW(analytic_gradient(*enc, x, enc->encode(x)), Unsupported);
}

}  // namespace
}  // namespace pei

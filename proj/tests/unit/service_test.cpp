#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "pei/errors.hpp"
#include "pei/head.hpp"
#include "pei/service.hpp"
#include "support.hpp"

namespace pei {
namespace {

const ImageShape kShape{16, 16, 3};

std::shared_ptr<ServiceInstance> make_service(OutputMode widest, std::optional<InputTransform> transform = {}) {
  auto enc = build_encoder({"lin", EncoderArch::LinearProject, 4, kShape, 8});
  auto head = std::make_shared<const DownstreamHead>(init_head(HeadShape{8, {6}, 4}, 2));
  return std::make_shared<ServiceInstance>("svc", enc, head, widest, std::move(transform));
}

std::vector<ImageTensor> batch(std::size_t n) {
  std::vector<ImageTensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(test::random_image(kShape, i));
  return out;
}

TEST(Service, MetersEveryImage) {
  auto svc = make_service(OutputMode::Soft);
  EXPECT_EQ(svc->queries(), 0u);
  svc->predict(batch(7), OutputMode::Hard);
  EXPECT_EQ(svc->queries(), 7u);
  svc->predict(batch(2), OutputMode::Soft);
  EXPECT_EQ(svc->queries(), 9u);
}

TEST(Service, Deterministic) {
  auto svc = make_service(OutputMode::Soft);
  const auto xs = batch(4);
  EXPECT_EQ(svc->predict(xs, OutputMode::Soft), svc->predict(xs, OutputMode::Soft));
}

TEST(Service, HardIsTopOfSoft) {
  auto svc = make_service(OutputMode::Soft);
  const auto xs = batch(5);
  const auto soft = svc->predict(xs, OutputMode::Soft);
  const auto hard = svc->predict(xs, OutputMode::Hard);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(std::get<HardLabel>(hard[i]).label, top1(soft[i]));
}

TEST(Service, HardOnlyRefusesSoftWithoutBilling) {
  auto svc = make_service(OutputMode::Hard);
  EXPECT_THROW(svc->predict(batch(3), OutputMode::Soft), PermissionDenied);
  EXPECT_EQ(svc->queries(), 0u);
}

TEST(Service, ShapeMismatchNotBilled) {
  auto svc = make_service(OutputMode::Soft);
  std::vector<ImageTensor> xs{ImageTensor({8, 8, 3})};
  EXPECT_THROW(svc->predict(xs, OutputMode::Hard), std::invalid_argument);
  EXPECT_EQ(svc->queries(), 0u);
}

TEST(Service, UnmeteredLogitsMatchSoftAnswers) {
  auto svc = make_service(OutputMode::Soft);
  const auto xs = batch(3);
  const auto logits = svc->logits_unmetered(xs);
  EXPECT_EQ(svc->queries(), 0u);
  const auto soft = svc->predict(xs, OutputMode::Soft);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& l = std::get<SoftLogits>(soft[i]).logits;
    for (std::size_t k = 0; k < l.size(); ++k) EXPECT_EQ(l[k], logits(static_cast<Eigen::Index>(i), k));
  }
}

TEST(Service, TransformRunsBeforeEncoder) {
  InputTransform to_native{"shrink", [](const ImageTensor& x) {
                             ImageTensor out(kShape);
                             for (std::uint32_t y = 0; y < 16; ++y)
                               for (std::uint32_t c = 0; c < 3; ++c)
                                 for (std::uint32_t xx = 0; xx < 16; ++xx) out.at(y, xx, c) = x.at(2 * y, 2 * xx, c);
                             return out;
                           }};
  auto plain = make_service(OutputMode::Soft);
  auto wrapped = make_service(OutputMode::Soft, to_native);
  const auto small = test::random_image(kShape, 3);
  ImageTensor big({32, 32, 3});
  for (std::uint32_t y = 0; y < 32; ++y)
    for (std::uint32_t x = 0; x < 32; ++x)
      for (std::uint32_t c = 0; c < 3; ++c) big.at(y, x, c) = small.at(y / 2, x / 2, c);
  EXPECT_EQ(wrapped->predict(std::vector<ImageTensor>{big}, OutputMode::Soft),
            plain->predict(std::vector<ImageTensor>{small}, OutputMode::Soft));
}

TEST(Service, OutputModeTags) {
  EXPECT_EQ(parse_output_mode("hard"), OutputMode::Hard);
  EXPECT_EQ(parse_output_mode("soft"), OutputMode::Soft);
  EXPECT_THROW(parse_output_mode("probs"), std::invalid_argument);
}

}  // namespace
}  // namespace pei

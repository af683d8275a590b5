#include <chrono>
#include <fstream>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "pei/eaas.hpp"
#include "pei/errors.hpp"
#include "pei/head.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines _res.
#include <httplib.h>

namespace pei::eaas {
namespace {

const ImageShape kShape{8, 8, 3};

std::shared_ptr<const Encoder> small_encoder() {
  return build_encoder({"lin", EncoderArch::LinearProject, 2, kShape, 8});
}

std::shared_ptr<ServiceInstance> small_service(OutputMode widest) {
  auto head = std::make_shared<const DownstreamHead>(init_head(HeadShape{8, {8}, 5}, 1));
  return std::make_shared<ServiceInstance>("svc", small_encoder(), head, widest);
}

std::vector<ImageTensor> images(std::size_t n, std::uint64_t seed = 0) {
  std::vector<ImageTensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(test::random_image(kShape, seed + i));
  return out;
}

RetryPolicy quick_policy() {
  RetryPolicy p;
  p.attempts = 2;
  p.initial_backoff = std::chrono::milliseconds(10);
  p.connect_timeout = std::chrono::milliseconds(200);
  p.read_timeout = std::chrono::milliseconds(2000);
  return p;
}

TEST(Base64, KnownVectors) {
  const auto enc = [](std::string s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
  const auto dec = base64_decode("Zm9vYg==");
  EXPECT_EQ(std::string(dec.begin(), dec.end()), "foob");
  EXPECT_THROW(base64_decode("Zm9"), std::invalid_argument);
  EXPECT_THROW(base64_decode("Zm9v!A=="), std::invalid_argument);
}

TEST(Wire, ImageRoundTripIsBitExact) {
  auto x = test::random_image({5, 7, 3}, 3);
  x.data()[4] = -0.125f;
  const auto j = encode_wire_image(x);
  EXPECT_EQ(j.at("shape"), Json::array({5, 7, 3}));
  EXPECT_EQ(decode_wire_image(j), x);
}

TEST(Wire, MalformedImagesRejected) {
  auto j = encode_wire_image(test::random_image({2, 2, 1}, 1));
  j["shape"] = Json::array({2, 3, 1});
  EXPECT_THROW(decode_wire_image(j), WireError);
  EXPECT_THROW(decode_wire_image(Json{{"shape", {2, 2, 1}}}), WireError);
  try {
    decode_wire_image(Json::array());
  } catch (const WireError& e) {
    EXPECT_EQ(e.status(), 400);
  }
}

TEST(Endpoint, EncoderAnswersMatchLocal) {
  auto enc = small_encoder();
  auto meter = std::make_shared<MeterLog>();
  auto ep = serve_encoder(enc, meter);
  RemoteEncoder remote(ep->url(), quick_policy());
  EXPECT_EQ(remote.input_shape(), kShape);
  EXPECT_EQ(remote.embedding_dim(), 8u);
  const auto xs = images(3);
  EXPECT_EQ(remote.encode_batch(xs), enc->encode_batch(xs));
  EXPECT_EQ(remote.billed(), 3u);
  EXPECT_EQ(ep->queries(), 3u);
  EXPECT_EQ(meter->queries("lin"), 3u);
}

TEST(Endpoint, ServiceAnswersMatchLocal) {
  auto local = small_service(OutputMode::Soft);
  auto served = small_service(OutputMode::Soft);
  auto ep = serve_service(served, std::make_shared<MeterLog>());
  RemoteService remote(ep->url(), quick_policy());
  EXPECT_EQ(remote.classes(), 5u);
  EXPECT_EQ(remote.widest_mode(), OutputMode::Soft);
  const auto xs = images(4);
  EXPECT_EQ(remote.predict(xs, OutputMode::Soft), local->predict(xs, OutputMode::Soft));
  EXPECT_EQ(remote.predict(xs, OutputMode::Hard), local->predict(xs, OutputMode::Hard));
  EXPECT_EQ(remote.queries(), 8u);
}

TEST(Endpoint, ErrorStatuses) {
  auto ep = serve_service(small_service(OutputMode::Hard), std::make_shared<MeterLog>());
  httplib::Client http(ep->host(), ep->port());
  auto bad = http.Post("/v1/predict", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(Json::parse(bad->body).at("error"), "malformed_json");

  Json wrong{{"mode", "hard"}, {"images", Json::array({encode_wire_image(test::random_image({4, 4, 3}, 1))})}};
  auto shape = http.Post("/v1/predict", wrong.dump(), "application/json");
  ASSERT_TRUE(shape);
  EXPECT_EQ(shape->status, 422);

  Json soft{{"mode", "soft"}, {"images", Json::array({encode_wire_image(test::random_image(kShape, 1))})}};
  auto denied = http.Post("/v1/predict", soft.dump(), "application/json");
  ASSERT_TRUE(denied);
  EXPECT_EQ(denied->status, 403);
  EXPECT_EQ(ep->queries(), 0u);

  RemoteService remote(ep->url(), quick_policy());
  EXPECT_THROW(remote.predict(images(1), OutputMode::Soft), PermissionDenied);
  EXPECT_THROW(remote.predict(std::vector<ImageTensor>{ImageTensor({4, 4, 3})}, OutputMode::Hard),
               std::invalid_argument);
}

TEST(Endpoint, MeterCountsAndPrices) {
  auto ep = serve_encoder(small_encoder(), std::make_shared<MeterLog>());
  RemoteEncoder remote(ep->url(), quick_policy());
  const auto before = remote.client().get("/v1/meter").at("queries").get<std::uint64_t>();
  remote.encode_batch(images(3));
  const auto after = remote.client().get("/v1/meter");
  EXPECT_EQ(after.at("queries").get<std::uint64_t>(), before + 3);
  EXPECT_NEAR(after.at("cost").get<double>(), 3 * 0.0001, 1e-12);
}

TEST(MeterLog, ReplayedTotalsAndCost) {
  test::TempDir dir;
  const auto log = dir / "meter.jsonl";
  {
    std::ofstream f(log);
    f << R"({"ts":"2026-01-01T00:00:00Z","endpoint":"lin","n":999999})" << "\n";
    f << R"({"ts":"2026-01-01T00:00:01Z","endpoint":"lin","n":1})" << "\n";
    f << R"({"ts":"2026-01-01T00:00:01Z","endpoint":"other","n":5})" << "\n";
  }
  auto meter = std::make_shared<MeterLog>(log);
  EXPECT_EQ(meter->queries("lin"), 1'000'000u);
  auto ep = serve_encoder(small_encoder(), meter);
  Client client(ep->url(), quick_policy());
  const auto m = client.get("/v1/meter");
  EXPECT_EQ(m.at("queries").get<std::uint64_t>(), 1'000'000u);
  EXPECT_NEAR(m.at("cost").get<double>(), 100.0, 1e-9);

  meter->record("lin", 2);
  EXPECT_EQ(MeterLog(log).queries("lin"), 1'000'002u);
}

TEST(Client, RetryAfterTimeoutIsBilledOnce) {
  EndpointOptions opts;
  opts.fault.delayed_requests = 1;
  opts.fault.delay = std::chrono::milliseconds(800);
  auto ep = serve_encoder(small_encoder(), std::make_shared<MeterLog>(), opts);
  RetryPolicy p = quick_policy();
  p.attempts = 3;
  p.read_timeout = std::chrono::milliseconds(300);
  RemoteEncoder remote(ep->url(), p);
  const auto xs = images(1);
  EXPECT_EQ(remote.encode_batch(xs), small_encoder()->encode_batch(xs));
  EXPECT_GE(remote.client().retries(), 1u);
  EXPECT_EQ(ep->queries(), 1u);
}

TEST(Client, UnreachableEndpointFails) {
  std::string url;
  {
    auto ep = serve_encoder(small_encoder(), std::make_shared<MeterLog>());
    url = ep->url();
    ep->stop();
  }
  Client client(url, quick_policy());
  EXPECT_THROW(client.get("/v1/info"), TransportFailure);
  EXPECT_GE(client.retries(), 1u);
}

TEST(Endpoint, ConcurrentClientsAllBilled) {
  auto ep = serve_encoder(small_encoder(), std::make_shared<MeterLog>());
  constexpr int kThreads = 4, kCalls = 5;
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      RemoteEncoder remote(ep->url(), quick_policy());
      for (int c = 0; c < kCalls; ++c) remote.encode_batch(images(2, 10 * t + c));
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(ep->queries(), static_cast<std::uint64_t>(kThreads * kCalls * 2));
}

}  // namespace
}  // namespace pei::eaas

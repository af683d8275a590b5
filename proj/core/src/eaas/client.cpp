#include <random>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include "pei/eaas.hpp"
#include "pei/errors.hpp"

// After the project headers: resolv.h defines _res, which clashes with Eigen.
#include <httplib.h>

namespace pei::eaas {
namespace {

std::string random_prefix() {
  std::random_device rd;
  const std::uint64_t v = (std::uint64_t{rd()} << 32) ^ rd();
  return fmt::format("{:016x}", v);
}

std::string error_message(const httplib::Result& r) {
  if (!r) return httplib::to_string(r.error());
  try {
    const auto j = Json::parse(r->body);
    return j.value("error", std::string("?")) + ": " + j.value("message", std::string());
  } catch (const std::exception&) {
    return "HTTP " + std::to_string(r->status);
  }
}

}  // namespace

Client::Client(std::string url, RetryPolicy policy) : url_(std::move(url)), policy_(policy), id_prefix_(random_prefix()) {
  static const std::regex pattern(R"(^http://([^/:]+):(\d+)/?$)");
  std::smatch m;
  if (!std::regex_match(url_, m, pattern)) throw std::invalid_argument("endpoint URL must be http://host:port, got " + url_);
  host_ = m[1];
  port_ = std::stoi(m[2]);
  if (policy_.attempts == 0) throw std::invalid_argument("retry policy needs at least one attempt");
}

namespace {

template <typename Call>
Json with_retries(const std::string& what, const RetryPolicy& policy, std::atomic<std::uint64_t>& retries,
                  Call&& call) {
  auto backoff = policy.initial_backoff;
  std::string last;
  for (std::size_t attempt = 0; attempt < policy.attempts; ++attempt) {
    if (attempt > 0) {
      ++retries;
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, policy.max_backoff);
    }
    httplib::Result r = call();
    if (r && r->status == 200) {
      try {
        return Json::parse(r->body);
      } catch (const std::exception& e) {
        throw TransportFailure(what + ": unparseable response: " + e.what());
      }
    }
    if (r && (r->status == 400 || r->status == 422)) throw std::invalid_argument(what + ": " + error_message(r));
    if (r && r->status == 403) throw PermissionDenied(what + ": " + error_message(r));
    if (r && r->status == 404) throw TransportFailure(what + ": not found");
    last = error_message(r);
  }
  throw TransportFailure(what + ": giving up after " + std::to_string(policy.attempts) + " attempts (" + last + ")");
}

}  // namespace

Json Client::get(const std::string& path) const {
  return with_retries("GET " + url_ + path, policy_, retries_, [&] {
    httplib::Client c(host_, port_);
    c.set_connection_timeout(policy_.connect_timeout);
    c.set_read_timeout(policy_.read_timeout);
    return c.Get(path);
  });
}

Json Client::post(const std::string& path, Json body) const {
  body["request_id"] = id_prefix_ + "-" + std::to_string(next_id_++);
  const std::string payload = body.dump();
  return with_retries("POST " + url_ + path, policy_, retries_, [&] {
    httplib::Client c(host_, port_);
    c.set_connection_timeout(policy_.connect_timeout);
    c.set_read_timeout(policy_.read_timeout);
    return c.Post(path, payload, "application/json");
  });
}

RemoteEncoder::RemoteEncoder(std::string url, RetryPolicy policy) : client_(std::move(url), policy) {
  const auto info = client_.get("/v1/info");
  if (info.value("kind", std::string()) != "encoder") {
    throw TransportFailure(client_.url() + " is not an encoder endpoint");
  }
  name_ = info.at("name").get<std::string>();
  shape_ = info.at("input_shape").get<ImageShape>();
  dim_ = info.at("embedding_dim").get<std::size_t>();
}

std::vector<Embedding> RemoteEncoder::encode_batch(std::span<const ImageTensor> images) const {
  if (images.empty()) return {};
  Json body;
  body["images"] = Json::array();
  for (const auto& x : images) body["images"].push_back(encode_wire_image(x));
  const auto reply = client_.post("/v1/encode", std::move(body));
  const auto& rows = reply.at("embeddings");
  if (rows.size() != images.size()) throw TransportFailure("encode: response size mismatch");
  std::vector<Embedding> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.emplace_back(r.get<std::vector<float>>());
  return out;
}

std::uint64_t RemoteEncoder::billed() const { return client_.get("/v1/meter").at("queries").get<std::uint64_t>(); }

RemoteService::RemoteService(std::string url, RetryPolicy policy) : client_(std::move(url), policy) {
  const auto info = client_.get("/v1/info");
  if (info.value("kind", std::string()) != "service") {
    throw TransportFailure(client_.url() + " is not a service endpoint");
  }
  name_ = info.at("name").get<std::string>();
  classes_ = info.at("classes").get<std::size_t>();
  for (const auto& m : info.at("modes")) {
    if (m.get<std::string>() == "soft") widest_ = OutputMode::Soft;
  }
}

std::vector<BehaviorValue> RemoteService::predict(std::span<const ImageTensor> batch, OutputMode mode) {
  if (batch.empty()) return {};
  Json body;
  body["mode"] = std::string(to_string(mode));
  body["images"] = Json::array();
  for (const auto& x : batch) body["images"].push_back(encode_wire_image(x));
  const auto reply = client_.post("/v1/predict", std::move(body));
  std::vector<BehaviorValue> out;
  out.reserve(batch.size());
  if (mode == OutputMode::Hard) {
    for (const auto& l : reply.at("labels")) out.emplace_back(HardLabel{l.get<int>()});
  } else {
    for (const auto& l : reply.at("logits")) out.emplace_back(SoftLogits{l.get<std::vector<float>>()});
  }
  if (out.size() != batch.size()) throw TransportFailure("predict: response size mismatch");
  return out;
}

std::uint64_t RemoteService::queries() const {
  return client_.get("/v1/meter").at("queries").get<std::uint64_t>();
}

}  // namespace pei::eaas

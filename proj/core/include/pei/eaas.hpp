#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pei/encoder.hpp"
#include "pei/json.hpp"
#include "pei/service.hpp"
#include "pei/tensor.hpp"

namespace pei::eaas {

/// {"shape": [h, w, c], "payload": base64 of little-endian binary32, row-major}.
Json encode_wire_image(const ImageTensor& image);

/// Throws WireError (HTTP 400) for malformed objects or payloads whose
/// length disagrees with the shape.
ImageTensor decode_wire_image(const Json& j);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on invalid input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

class WireError : public std::runtime_error {
 public:
  WireError(int status, std::string code, const std::string& what)
      : std::runtime_error(what), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

/// Per-endpoint query counters backed by an optional append-only log of
/// {"ts", "endpoint", "n"} lines; totals are replayed from the log on
/// construction.
class MeterLog {
 public:
  explicit MeterLog(std::optional<std::filesystem::path> path = std::nullopt);

  void record(const std::string& endpoint, std::uint64_t n);
  std::uint64_t queries(const std::string& endpoint) const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::map<std::string, std::uint64_t> totals_;
};

struct FaultInjection {
  /// The first `delayed_requests` billable requests are answered only after
  /// `delay`; the work is done and billed before the pause.
  std::size_t delayed_requests = 0;
  std::chrono::milliseconds delay{0};
};

struct EndpointOptions {
  /// Empty: the PEI_BIND_ADDR environment variable, else 127.0.0.1.
  std::string host;
  /// 0 picks a free port.
  int port = 0;
  double price_per_query = 0.0001;
  /// Key in the meter log; defaults to the encoder or service name.
  std::string meter_key;
  FaultInjection fault;
};

std::string default_bind_address();

/// One HTTP endpoint on its own listener thread. Routes:
///   encoder: POST /v1/encode, GET /v1/meter, GET /v1/info
///   service: POST /v1/predict, GET /v1/meter, GET /v1/info
class Endpoint {
 public:
  ~Endpoint();
  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  const std::string& host() const;
  int port() const;
  std::string url() const;
  std::uint64_t queries() const;
  void stop();

  struct Impl;

 private:
  explicit Endpoint(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;

  friend std::unique_ptr<Endpoint> serve_encoder(std::shared_ptr<const Encoder>, std::shared_ptr<MeterLog>,
                                                 EndpointOptions);
  friend std::unique_ptr<Endpoint> serve_service(std::shared_ptr<ServiceInstance>, std::shared_ptr<MeterLog>,
                                                 EndpointOptions);
};

/// Throws TransportFailure when the address cannot be bound.
std::unique_ptr<Endpoint> serve_encoder(std::shared_ptr<const Encoder> encoder, std::shared_ptr<MeterLog> meter,
                                        EndpointOptions options = {});
std::unique_ptr<Endpoint> serve_service(std::shared_ptr<ServiceInstance> service, std::shared_ptr<MeterLog> meter,
                                        EndpointOptions options = {});

struct RetryPolicy {
  std::size_t attempts = 5;
  std::chrono::milliseconds initial_backoff{50};
  std::chrono::milliseconds max_backoff{2000};
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{30000};
};

/// Shared HTTP plumbing of the remote handles.
class Client {
 public:
  Client(std::string url, RetryPolicy policy);

  /// GET with retries. Throws TransportFailure when retries run out.
  Json get(const std::string& path) const;
  /// POST with a fresh request id, reused across retries. HTTP 400/422 map
  /// to std::invalid_argument, 403 to PermissionDenied, other failures are
  /// retried with exponential backoff.
  Json post(const std::string& path, Json body) const;

  const std::string& url() const noexcept { return url_; }
  std::uint64_t retries() const noexcept { return retries_.load(); }

 private:
  std::string url_;
  std::string host_;
  int port_ = 0;
  RetryPolicy policy_;
  std::string id_prefix_;
  mutable std::atomic<std::uint64_t> next_id_{0};
  mutable std::atomic<std::uint64_t> retries_{0};
};

/// Encoder handle backed by a /v1/encode endpoint.
class RemoteEncoder final : public Encoder {
 public:
  explicit RemoteEncoder(std::string url, RetryPolicy policy = {});

  const std::string& name() const override { return name_; }
  ImageShape input_shape() const override { return shape_; }
  std::size_t embedding_dim() const override { return dim_; }
  std::vector<Embedding> encode_batch(std::span<const ImageTensor> images) const override;

  /// Server-side meter of this endpoint.
  std::uint64_t billed() const;
  const Client& client() const noexcept { return client_; }

 private:
  Client client_;
  std::string name_;
  ImageShape shape_;
  std::size_t dim_ = 0;
};

/// Target service handle backed by a /v1/predict endpoint.
class RemoteService final : public TargetService {
 public:
  explicit RemoteService(std::string url, RetryPolicy policy = {});

  const std::string& name() const override { return name_; }
  std::size_t classes() const override { return classes_; }
  std::vector<BehaviorValue> predict(std::span<const ImageTensor> batch, OutputMode mode) override;
  /// Reads the server-side meter.
  std::uint64_t queries() const override;
  OutputMode widest_mode() const override { return widest_; }

  const Client& client() const noexcept { return client_; }

 private:
  Client client_;
  std::string name_;
  std::size_t classes_ = 0;
  OutputMode widest_ = OutputMode::Hard;
};

}  // namespace pei::eaas

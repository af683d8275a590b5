#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "pei/eaas.hpp"
#include "pei/errors.hpp"

// After the project headers: resolv.h defines _res, which clashes with Eigen.
#include <httplib.h>

namespace pei::eaas {

// Meter

MeterLog::MeterLog(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (!path_ || !std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = Json::parse(line);
      totals_[j.at("endpoint").get<std::string>()] += j.at("n").get<std::uint64_t>();
    } catch (const std::exception& e) {
      throw ConfigError("meter log " + path_->string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void MeterLog::record(const std::string& endpoint, std::uint64_t n) {
  std::lock_guard lock(mutex_);
  totals_[endpoint] += n;
  if (!path_) return;
  const auto ts = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  std::ofstream out(*path_, std::ios::app);
  out << Json{{"ts", ts}, {"endpoint", endpoint}, {"n", n}}.dump() << '\n';
  if (!out) throw std::runtime_error("meter log: cannot append to " + path_->string());
}

std::uint64_t MeterLog::queries(const std::string& endpoint) const {
  std::lock_guard lock(mutex_);
  const auto it = totals_.find(endpoint);
  return it == totals_.end() ? 0 : it->second;
}

std::string default_bind_address() {
  const char* env = std::getenv("PEI_BIND_ADDR");
  return env != nullptr && *env != '\0' ? std::string(env) : std::string("127.0.0.1");
}

// Endpoint

namespace {

struct Reply {
  int status = 200;
  std::string body;
};

/// Completed or in-flight responses keyed by request id.
class ReplayCache {
 public:
  struct Entry {
    std::mutex mutex;
    std::condition_variable ready;
    bool done = false;
    Reply reply;
  };

  /// Returns the entry and whether the caller owns (must compute) it.
  std::pair<std::shared_ptr<Entry>, bool> claim(const std::string& id) {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(id); it != entries_.end()) return {it->second, false};
    auto e = std::make_shared<Entry>();
    entries_.emplace(id, e);
    order_.push_back(id);
    if (order_.size() > kCapacity) {
      entries_.erase(order_.front());
      order_.pop_front();
    }
    return {e, true};
  }

  /// Failed requests are forgotten so a retry is processed afresh.
  void forget(const std::string& id) {
    std::lock_guard lock(mutex_);
    entries_.erase(id);
  }

 private:
  static constexpr std::size_t kCapacity = 4096;
  std::mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> entries_;
  std::deque<std::string> order_;
};

Json error_body(const std::string& code, const std::string& message) {
  return Json{{"error", code}, {"message", message}};
}

std::vector<ImageTensor> decode_images(const Json& body) {
  if (!body.is_object() || !body.contains("images") || !body.at("images").is_array()) {
    throw WireError(400, "malformed_request", "body needs an 'images' array");
  }
  std::vector<ImageTensor> images;
  images.reserve(body.at("images").size());
  for (const auto& j : body.at("images")) images.push_back(decode_wire_image(j));
  return images;
}

}  // namespace

struct Endpoint::Impl {
  httplib::Server server;
  std::thread thread;
  std::string host;
  int port = 0;
  std::string key;
  double price = 0.0;
  std::shared_ptr<MeterLog> meter;
  ReplayCache cache;
  FaultInjection fault;
  std::atomic<std::size_t> billable{0};
  Json info;

  using Handler = std::function<Reply(const Json& body)>;

  // Parses, deduplicates on request_id, runs the handler once per id.
  void handle(const httplib::Request& req, httplib::Response& res, const Handler& handler) {
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(error_body("malformed_json", e.what()).dump(), "application/json");
      return;
    }
    std::string id;
    if (body.is_object() && body.contains("request_id") && body.at("request_id").is_string()) {
      id = body.at("request_id").get<std::string>();
    }
    std::shared_ptr<ReplayCache::Entry> entry;
    if (!id.empty()) {
      auto [e, owner] = cache.claim(id);
      if (!owner) {
        std::unique_lock lock(e->mutex);
        e->ready.wait(lock, [&] { return e->done; });
        res.status = e->reply.status;
        res.set_content(e->reply.body, "application/json");
        return;
      }
      entry = e;
    }
    Reply reply;
    try {
      reply = handler(body);
    } catch (const WireError& e) {
      reply = {e.status(), error_body(e.code(), e.what()).dump()};
    } catch (const PermissionDenied& e) {
      reply = {403, error_body("mode_not_allowed", e.what()).dump()};
    } catch (const std::invalid_argument& e) {
      reply = {422, error_body("shape_mismatch", e.what()).dump()};
    } catch (const std::exception& e) {
      reply = {500, error_body("internal", e.what()).dump()};
    }
    if (entry) {
      {
        std::lock_guard lock(entry->mutex);
        entry->reply = reply;
        entry->done = true;
      }
      entry->ready.notify_all();
      if (reply.status >= 500) cache.forget(id);
    }
    if (reply.status == 200 && billable.fetch_add(1) < fault.delayed_requests) {
      std::this_thread::sleep_for(fault.delay);
    }
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  }

  void bill(std::uint64_t n) { meter->record(key, n); }

  void add_common_routes() {
    server.Get("/v1/meter", [this](const httplib::Request&, httplib::Response& res) {
      const auto q = meter->queries(key);
      res.set_content(Json{{"queries", q}, {"cost", static_cast<double>(q) * price}}.dump(), "application/json");
    });
    server.Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(info.dump(), "application/json");
    });
  }

  void start(const EndpointOptions& options) {
    host = options.host.empty() ? default_bind_address() : options.host;
    server.set_payload_max_length(std::size_t{1} << 31);
    if (options.port == 0) {
      port = server.bind_to_any_port(host);
    } else {
      port = server.bind_to_port(host, options.port) ? options.port : -1;
    }
    if (port <= 0) throw TransportFailure("cannot bind " + host + ":" + std::to_string(options.port));
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
};

Endpoint::Endpoint(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

Endpoint::~Endpoint() { stop(); }

void Endpoint::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

const std::string& Endpoint::host() const { return impl_->host; }
int Endpoint::port() const { return impl_->port; }
std::string Endpoint::url() const { return "http://" + impl_->host + ":" + std::to_string(impl_->port); }
std::uint64_t Endpoint::queries() const { return impl_->meter->queries(impl_->key); }

std::unique_ptr<Endpoint> serve_encoder(std::shared_ptr<const Encoder> encoder, std::shared_ptr<MeterLog> meter,
                                        EndpointOptions options) {
  if (!encoder) throw std::invalid_argument("serve_encoder: null encoder");
  auto impl = std::make_unique<Endpoint::Impl>();
  impl->key = options.meter_key.empty() ? encoder->name() : options.meter_key;
  impl->price = options.price_per_query;
  impl->meter = meter ? std::move(meter) : std::make_shared<MeterLog>();
  impl->fault = options.fault;
  impl->info = {{"kind", "encoder"},
                {"name", encoder->name()},
                {"input_shape", encoder->input_shape()},
                {"embedding_dim", encoder->embedding_dim()},
                {"price_per_query", options.price_per_query}};
  auto* self = impl.get();
  impl->server.Post("/v1/encode", [self, encoder](const httplib::Request& req, httplib::Response& res) {
    self->handle(req, res, [&](const Json& body) {
      const auto images = decode_images(body);
      for (const auto& x : images) {
        if (x.shape() != encoder->input_shape()) {
          throw WireError(422, "shape_mismatch",
                          "expected " + encoder->input_shape().to_string() + ", got " + x.shape().to_string());
        }
      }
      const auto embeddings = encoder->encode_batch(images);
      self->bill(images.size());
      Json out = Json::array();
      for (const auto& e : embeddings) out.push_back(e.values);
      return Reply{200, Json{{"embeddings", std::move(out)}, {"billed", images.size()}}.dump()};
    });
  });
  impl->add_common_routes();
  impl->start(options);
  return std::unique_ptr<Endpoint>(new Endpoint(std::move(impl)));
}

std::unique_ptr<Endpoint> serve_service(std::shared_ptr<ServiceInstance> service, std::shared_ptr<MeterLog> meter,
                                        EndpointOptions options) {
  if (!service) throw std::invalid_argument("serve_service: null service");
  auto impl = std::make_unique<Endpoint::Impl>();
  impl->key = options.meter_key.empty() ? service->name() : options.meter_key;
  impl->price = options.price_per_query;
  impl->meter = meter ? std::move(meter) : std::make_shared<MeterLog>();
  impl->fault = options.fault;
  Json modes = Json::array({"hard"});
  if (service->widest_mode() == OutputMode::Soft) modes.push_back("soft");
  impl->info = {{"kind", "service"},
                {"name", service->name()},
                {"input_shape", service->native_shape()},
                {"classes", service->classes()},
                {"modes", modes},
                {"price_per_query", options.price_per_query}};
  auto* self = impl.get();
  impl->server.Post("/v1/predict", [self, service](const httplib::Request& req, httplib::Response& res) {
    self->handle(req, res, [&](const Json& body) {
      const auto images = decode_images(body);
      OutputMode mode = OutputMode::Hard;
      if (body.contains("mode")) {
        try {
          mode = parse_output_mode(body.at("mode").get<std::string>());
        } catch (const std::exception& e) {
          throw WireError(400, "malformed_request", std::string("mode: ") + e.what());
        }
      }
      const auto answers = service->predict(images, mode);
      self->bill(images.size());
      Json out = Json::array();
      for (const auto& a : answers) {
        if (mode == OutputMode::Hard) {
          out.push_back(std::get<HardLabel>(a).label);
        } else {
          out.push_back(std::get<SoftLogits>(a).logits);
        }
      }
      return Reply{200, Json{{mode == OutputMode::Hard ? "labels" : "logits", std::move(out)},
                             {"billed", images.size()}}
                            .dump()};
    });
  });
  impl->add_common_routes();
  impl->start(options);
  return std::unique_ptr<Endpoint>(new Endpoint(std::move(impl)));
}

}  // namespace pei::eaas

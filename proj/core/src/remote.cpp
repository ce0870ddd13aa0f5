#include "vaudit/remote.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "vaudit/error.hpp"
#include "vaudit/png_io.hpp"

namespace vaudit {

namespace {

using json = nlohmann::json;

struct Reply {
  int status = 0;
  std::string body;
  std::string content_type;
};

Error error_from_reply(const Reply& r, const std::string& what) {
  std::string message = what + ": HTTP " + std::to_string(r.status);
  std::optional<ErrorCode> code;
  try {
    const json j = json::parse(r.body);
    if (j.contains("error") && j["error"].is_string()) {
      code = error_code_from_string(j["error"].get<std::string>());
    }
    if (j.contains("message") && j["message"].is_string()) {
      message += " (" + j["message"].get<std::string>() + ")";
    }
  } catch (const json::exception&) {
  }
  if (!code) code = r.status == 422 ? ErrorCode::kInvalidArgument : ErrorCode::kProtocol;
  return Error(*code, message);
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

struct RemoteBackend::Impl {
  explicit Impl(unsigned slots) : in_flight(static_cast<std::ptrdiff_t>(slots)) {}

  std::counting_semaphore<> in_flight;
  std::atomic<std::uint64_t> next_request{1};
  std::mutex health_mu;
  std::optional<GeneratorCapabilities> caps;
};

RemoteBackend::RemoteBackend(RemoteOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>(std::max(1u, options_.max_in_flight))) {
  if (options_.url.empty()) throw Error(ErrorCode::kConfig, "backend url is empty");
  if (options_.timeout.count() <= 0) throw Error(ErrorCode::kConfig, "timeout must be > 0");
  httplib::Client probe(options_.url);
  if (!probe.is_valid()) throw Error(ErrorCode::kConfig, "invalid backend url '" + options_.url + "'");
}

RemoteBackend::~RemoteBackend() = default;

namespace {

Reply send(const RemoteOptions& opt, std::atomic<std::uint64_t>& ids,
           std::counting_semaphore<>& slots, const std::string& path,
           const std::optional<std::string>& body) {
  std::optional<Error> last;
  bool busy = false;
  for (unsigned attempt = 0; attempt <= opt.max_retries; ++attempt) {
    if (busy) std::this_thread::sleep_for(opt.busy_backoff * attempt);
    busy = false;
    const std::string request_id = std::to_string(ids.fetch_add(1));
    httplib::Result res{nullptr, httplib::Error::Unknown};
    const auto started = std::chrono::steady_clock::now();
    {
      SlotGuard slot(slots);
      httplib::Client cli(opt.url);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opt.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opt.timeout - secs);
      cli.set_connection_timeout(secs.count(), usecs.count());
      cli.set_read_timeout(secs.count(), usecs.count());
      cli.set_write_timeout(secs.count(), usecs.count());
      const httplib::Headers headers{{kProtoHeader, kProtoVersion}, {kRequestIdHeader, request_id}};
      res = body ? cli.Post(path, headers, *body, "application/json") : cli.Get(path, headers);
    }
    if (!res) {
      const auto elapsed = std::chrono::steady_clock::now() - started;
      const bool timed_out =
          res.error() == httplib::Error::ConnectionTimeout || elapsed >= opt.timeout;
      last = Error(timed_out ? ErrorCode::kTimeout : ErrorCode::kTransport,
                   path + ": " + httplib::to_string(res.error()) + " (" + opt.url + ")");
      continue;
    }
    if (res->status == 503) {
      busy = true;
      last = Error(ErrorCode::kTransport, path + ": backend busy (503)");
      continue;
    }
    if (res->get_header_value(kProtoHeader) != kProtoVersion) {
      throw Error(ErrorCode::kProtocol, path + ": missing or unsupported " +
                                            std::string(kProtoHeader) + " '" +
                                            res->get_header_value(kProtoHeader) + "'");
    }
    if (res->get_header_value(kRequestIdHeader) != request_id) {
      throw Error(ErrorCode::kProtocol, path + ": response answers request '" +
                                            res->get_header_value(kRequestIdHeader) +
                                            "', expected '" + request_id + "'");
    }
    Reply reply{res->status, res->body, res->get_header_value("Content-Type")};
    if (reply.status != 200) throw error_from_reply(reply, path);
    return reply;
  }
  throw *last;
}

}  // namespace

GeneratorCapabilities RemoteBackend::capabilities() const {
  std::lock_guard lock(impl_->health_mu);
  if (impl_->caps) return *impl_->caps;
  const Reply r = send(options_, impl_->next_request, impl_->in_flight, "/health", std::nullopt);
  GeneratorCapabilities caps;
  try {
    const json j = json::parse(r.body);
    if (j.at("status") != "ok") {
      throw Error(ErrorCode::kTransport, "backend reports status " + j.at("status").dump());
    }
    caps.model = j.at("model").get<std::string>();
    caps.sigma_max = j.at("sigma_max").get<double>();
    caps.default_timesteps = j.at("default_timesteps").get<std::uint32_t>();
    caps.supports_timesteps = j.at("supports_timesteps").get<bool>();
    caps.width = j.value("width", std::size_t{0});
    caps.height = j.value("height", std::size_t{0});
    caps.dcs_space = j.value("dcs_space", std::string{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("malformed /health response: ") + e.what());
  }
  if (!(caps.sigma_max > 0.0) || !std::isfinite(caps.sigma_max)) {
    throw Error(ErrorCode::kProtocol, "/health reports a non-positive sigma_max");
  }
  impl_->caps = caps;
  return caps;
}

std::vector<std::uint8_t> RemoteBackend::generate_png(const std::string& caption,
                                                      std::uint64_t seed,
                                                      std::uint32_t timesteps) {
  const GeneratorCapabilities caps = capabilities();
  if (timesteps != caps.default_timesteps && !caps.supports_timesteps) {
    throw Error(ErrorCode::kInvalidArgument,
                "backend " + caps.model + " does not support timesteps control");
  }
  json body = {{"caption", caption}, {"seed", seed}, {"timesteps", timesteps}};
  if (caps.width) body["width"] = caps.width;
  if (caps.height) body["height"] = caps.height;
  const Reply r = send(options_, impl_->next_request, impl_->in_flight, "/generate", body.dump());
  if (r.content_type.rfind("image/png", 0) != 0) {
    throw Error(ErrorCode::kMalformedImage, "/generate returned content type '" + r.content_type + "'");
  }
  return {r.body.begin(), r.body.end()};
}

Image RemoteBackend::generate(const CaptionRecord& caption, std::uint64_t seed,
                              std::uint32_t timesteps) {
  const auto bytes = generate_png(caption.text, seed, timesteps);
  Image img = decode_png(bytes);
  const GeneratorCapabilities caps = capabilities();
  if ((caps.width && img.width() != caps.width) || (caps.height && img.height() != caps.height)) {
    throw Error(ErrorCode::kMalformedImage, "/generate returned a " + std::to_string(img.width()) +
                                                "x" + std::to_string(img.height()) + " image");
  }
  return img;
}

double RemoteBackend::dcs(const CaptionRecord& caption, std::uint64_t noise_seed, double sigma) {
  capabilities();
  const json body = {{"caption", caption.text}, {"noise_seed", noise_seed}, {"sigma", sigma}};
  const Reply r = send(options_, impl_->next_request, impl_->in_flight, "/dcs", body.dump());
  try {
    return json::parse(r.body).at("dcs").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("malformed /dcs response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

struct BackendServer::Impl {
  Impl(Generator& g, DcsEndpoint& d, ServerOptions o) : gen(g), dcs(d), options(std::move(o)) {}

  Generator& gen;
  DcsEndpoint& dcs;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
  std::atomic<int> in_flight{0};
  int port = 0;
  bool routes_ready = false;

  static void fail(httplib::Response& res, int status, ErrorCode code, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", to_string(code)}, {"message", message}}.dump(),
                    "application/json");
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  Handler guarded(Handler inner) {
    return [this, inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
      res.set_header(kProtoHeader, kProtoVersion);
      if (req.has_header(kRequestIdHeader)) {
        res.set_header(kRequestIdHeader, req.get_header_value(kRequestIdHeader));
      }
      if (req.get_header_value(kProtoHeader) != kProtoVersion) {
        fail(res, 400, ErrorCode::kProtocol,
             std::string("requests must carry ") + kProtoHeader + ": " + kProtoVersion);
        return;
      }
      if (in_flight.fetch_add(1) >= static_cast<int>(options.max_concurrent)) {
        in_flight.fetch_sub(1);
        fail(res, 503, ErrorCode::kTransport, "busy");
        return;
      }
      try {
        inner(req, res);
      } catch (const json::exception& e) {
        fail(res, 400, ErrorCode::kProtocol, e.what());
      } catch (const Error& e) {
        switch (e.code()) {
          case ErrorCode::kUnknownCaption: fail(res, 422, e.code(), e.what()); break;
          case ErrorCode::kInvalidArgument:
          case ErrorCode::kInvalidScore:
          case ErrorCode::kDimensionMismatch: fail(res, 400, e.code(), e.what()); break;
          default: fail(res, 500, e.code(), e.what()); break;
        }
      }
      in_flight.fetch_sub(1);
    };
  }

  void install_routes() {
    if (routes_ready) return;
    routes_ready = true;
    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto caps = gen.capabilities();
      const json j = {{"status", "ok"},
                      {"model", caps.model},
                      {"sigma_max", caps.sigma_max},
                      {"default_timesteps", caps.default_timesteps},
                      {"supports_timesteps", caps.supports_timesteps},
                      {"width", caps.width},
                      {"height", caps.height},
                      {"dcs_space", caps.dcs_space}};
      res.set_content(j.dump(), "application/json");
    }));

    server.Post("/generate", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json j = json::parse(req.body);
      if (!j.is_object() || !j.contains("caption") || !j["caption"].is_string() ||
          !j.contains("seed") || !j["seed"].is_number_unsigned() || !j.contains("timesteps") ||
          !j["timesteps"].is_number_unsigned()) {
        fail(res, 400, ErrorCode::kProtocol,
             "expected {\"caption\": str, \"seed\": u64, \"timesteps\": u32}");
        return;
      }
      const auto caps = gen.capabilities();
      const auto timesteps = j["timesteps"].get<std::uint64_t>();
      if (timesteps == 0 || timesteps > 0xFFFFFFFFULL) {
        fail(res, 400, ErrorCode::kInvalidArgument, "timesteps must be a u32 >= 1");
        return;
      }
      if (timesteps != caps.default_timesteps && !caps.supports_timesteps) {
        fail(res, 422, ErrorCode::kInvalidArgument, "timesteps control is not supported");
        return;
      }
      for (const char* key : {"width", "height"}) {
        if (!j.contains(key)) continue;
        const std::size_t want = key[0] == 'w' ? caps.width : caps.height;
        if (!j[key].is_number_unsigned() || j[key].get<std::size_t>() != want) {
          fail(res, 422, ErrorCode::kInvalidArgument,
               std::string("unsupported ") + key + ", backend serves " + std::to_string(want));
          return;
        }
      }
      CaptionRecord caption{0, j["caption"].get<std::string>(), std::nullopt};
      const Image img =
          gen.generate(caption, j["seed"].get<std::uint64_t>(), static_cast<std::uint32_t>(timesteps));
      const auto png = encode_png(img);
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    server.Post("/dcs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json j = json::parse(req.body);
      if (!j.is_object() || !j.contains("caption") || !j["caption"].is_string() ||
          !j.contains("noise_seed") || !j["noise_seed"].is_number_unsigned() ||
          !j.contains("sigma") || !j["sigma"].is_number()) {
        fail(res, 400, ErrorCode::kProtocol,
             "expected {\"caption\": str, \"noise_seed\": u64, \"sigma\": f64}");
        return;
      }
      const double sigma = j["sigma"].get<double>();
      if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        fail(res, 400, ErrorCode::kInvalidArgument, "sigma must be finite and > 0");
        return;
      }
      CaptionRecord caption{0, j["caption"].get<std::string>(), std::nullopt};
      const double v = dcs.dcs(caption, j["noise_seed"].get<std::uint64_t>(), sigma);
      if (!std::isfinite(v)) {
        fail(res, 400, ErrorCode::kInvalidScore, "non-finite denoising residual");
        return;
      }
      res.set_content(json{{"dcs", v}}.dump(), "application/json");
    }));
  }

  void bind() {
    install_routes();
    if (options.port == 0) {
      port = server.bind_to_any_port(options.host);
    } else {
      port = server.bind_to_port(options.host, options.port) ? options.port : -1;
    }
    if (port <= 0) {
      throw Error(ErrorCode::kTransport, "cannot bind " + options.host + ":" +
                                             std::to_string(options.port));
    }
  }
};

BackendServer::BackendServer(Generator& gen, DcsEndpoint& dcs, ServerOptions options)
    : impl_(std::make_unique<Impl>(gen, dcs, std::move(options))) {}

BackendServer::~BackendServer() { stop(); }

int BackendServer::start() {
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void BackendServer::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void BackendServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int BackendServer::port() const noexcept { return impl_->port; }

std::string BackendServer::url() const {
  return "http://" + impl_->options.host + ":" + std::to_string(impl_->port);
}

}  // namespace vaudit

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vaudit/backend.hpp"

namespace vaudit {

inline constexpr const char* kProtoHeader = "X-VA-Proto";
inline constexpr const char* kProtoVersion = "1";
inline constexpr const char* kRequestIdHeader = "X-VA-Request-Id";

struct RemoteOptions {
  std::string url;                        // e.g. "http://127.0.0.1:8600"
  std::chrono::milliseconds timeout{30000};
  unsigned max_retries = 2;               // transport errors and 503 only
  std::chrono::milliseconds busy_backoff{50};
  unsigned max_in_flight = 4;
};

/// Wire-protocol client. Probes /health before the first request and caches
/// the reported capabilities. Each request carries a unique request id that
/// the server must echo; a mismatch is a protocol error. Thread-safe; at most
/// `max_in_flight` requests are outstanding at once.
class RemoteBackend final : public Generator, public DcsEndpoint {
 public:
  explicit RemoteBackend(RemoteOptions options);
  ~RemoteBackend() override;

  RemoteBackend(const RemoteBackend&) = delete;
  RemoteBackend& operator=(const RemoteBackend&) = delete;

  /// Performs (or returns the cached) health probe.
  GeneratorCapabilities capabilities() const override;
  Image generate(const CaptionRecord& caption, std::uint64_t seed,
                 std::uint32_t timesteps) override;
  double dcs(const CaptionRecord& caption, std::uint64_t noise_seed, double sigma) override;

  /// Raw PNG bytes of one /generate call.
  std::vector<std::uint8_t> generate_png(const std::string& caption, std::uint64_t seed,
                                         std::uint32_t timesteps);

  const RemoteOptions& options() const noexcept { return options_; }

 private:
  struct Impl;
  RemoteOptions options_;
  std::unique_ptr<Impl> impl_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;                 // 0 = pick a free port
  unsigned max_concurrent = 8;  // 503 beyond this many in-flight requests
};

/// Serves a Generator and a DcsEndpoint over the wire protocol. The /dcs
/// score is computed server-side, so latents never leave the process.
class BackendServer {
 public:
  BackendServer(Generator& gen, DcsEndpoint& dcs, ServerOptions options = {});
  ~BackendServer();

  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  /// Binds and starts serving on a background thread; returns the port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const noexcept;
  std::string url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vaudit

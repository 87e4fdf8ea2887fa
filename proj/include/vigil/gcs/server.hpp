#pragma once

#include <memory>
#include <string>
#include <utility>

#include "vigil/gcs/session.hpp"

namespace vigil::gcs {

inline constexpr const char* kDefaultBind = "127.0.0.1:8765";

/// VIGIL_BIND when set, otherwise `fallback`.
std::string resolve_bind(const std::string& fallback = kDefaultBind);

/// Splits "host:port" (IPv6 hosts in brackets). Throws std::invalid_argument.
std::pair<std::string, unsigned short> parse_bind(const std::string& address);

struct ServerConfig {
  std::string bind = kDefaultBind;
  int threads = 1;
};

/// HTTP session management plus WebSocket telemetry and command endpoints:
///
///   POST   /sessions                   create (body: session request JSON)
///   GET    /sessions                   list
///   GET    /sessions/{id}              snapshot
///   DELETE /sessions/{id}              stop and forget
///   GET    /health
///   WS     /session/{id}/telemetry     TelemetryMessage stream
///   WS     /session/{id}/command       OperatorCommand in, ACK/REJECT out
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving in background threads. Throws std::runtime_error
  /// when the address cannot be bound.
  void start();
  void stop();
  /// Blocks until stop() is called.
  void wait();

  unsigned short port() const;
  SessionManager& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vigil::gcs

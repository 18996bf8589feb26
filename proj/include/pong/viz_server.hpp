#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "pong/viz.hpp"

namespace pong::viz {

struct ServerOptions {
  std::string bind_address = "0.0.0.0";
  unsigned short port = 8080;  // 0 picks a free port
  std::string static_dir = "web";
  std::size_t max_queued_messages = 256;  // a client further behind is dropped
  int auto_reset_seconds = 3;             // restart delay after a game with no controller
};

/// Serves the exhibit: WebSocket clients on `/ws` (add `?role=controller` to
/// steer the left paddle), static files from `static_dir` for everything else.
class ExhibitServer {
 public:
  /// Binds immediately; throws std::runtime_error when the port is unavailable.
  ExhibitServer(ExhibitSession session, ServerOptions options);
  ~ExhibitServer();
  ExhibitServer(const ExhibitServer&) = delete;
  ExhibitServer& operator=(const ExhibitServer&) = delete;

  unsigned short port() const;

  /// Starts the network and game-loop threads.
  void start();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

  std::uint64_t frames_broadcast() const;
  std::size_t connected_clients() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking WebSocket client for scripted sessions and conformance checks.
class ExhibitClient {
 public:
  ExhibitClient(const std::string& host, unsigned short port, bool controller);
  ~ExhibitClient();
  ExhibitClient(const ExhibitClient&) = delete;
  ExhibitClient& operator=(const ExhibitClient&) = delete;

  /// Next text message from the server.
  std::string read();
  void send(const ClientCommand& command);
  void send_text(const std::string& text);
  void send_binary(const std::string& bytes);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Simple GET over HTTP/1.1; returns the status code and fills `body`.
int http_get(const std::string& host, unsigned short port, const std::string& target,
             std::string& body);

}  // namespace pong::viz

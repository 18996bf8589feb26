#include "pong/viz_server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "pong/errors.hpp"

namespace pong::viz {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using error_code = beast::error_code;

namespace {

struct ControllerChange {
  bool connected = false;
};
using LoopEvent = std::variant<ClientCommand, ControllerChange>;

std::string_view mime_type(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

bool wants_controller(std::string_view target) {
  const auto q = target.find('?');
  return q != std::string_view::npos && target.substr(q).find("role=controller") != std::string_view::npos;
}

std::string_view path_of(std::string_view target) { return target.substr(0, target.find('?')); }

std::string_view sv(beast::string_view s) { return {s.data(), s.size()}; }

}  // namespace

class WsSession;

struct ServerCore {
  ServerCore(ExhibitSession s, ServerOptions o)
      : options(std::move(o)), session(std::move(s)), acceptor(ioc) {
    hello = std::make_shared<const std::string>(to_json(session.hello()).dump());
  }

  void accept();
  void game_loop();
  void broadcast(std::shared_ptr<const std::string> message);
  void post_event(LoopEvent event) {
    {
      std::lock_guard lock(mutex);
      inbox.push_back(std::move(event));
    }
    wake.notify_one();
  }
  void join(const std::shared_ptr<WsSession>& client);
  void leave(const std::shared_ptr<WsSession>& client);

  ServerOptions options;
  ExhibitSession session;  // owned by the game-loop thread once started
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::shared_ptr<const std::string> hello;

  // touched only on the io thread
  std::set<std::shared_ptr<WsSession>> clients;
  WsSession* controller = nullptr;

  std::mutex mutex;
  std::condition_variable wake;
  std::vector<LoopEvent> inbox;
  bool stopping = false;

  std::atomic<std::uint64_t> frames{0};
  std::atomic<std::size_t> client_count{0};
  std::thread io_thread;
  std::thread loop_thread;
  bool started = false;
};

struct ExhibitServer::Impl : ServerCore {
  using ServerCore::ServerCore;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, ServerCore& owner, bool controller)
      : ws_(std::move(socket)), owner_(owner), wants_controller_(controller) {}

  void run(http::request<http::string_body> request) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(1 << 16);
    ws_.async_accept(request, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  bool wants_controller() const { return wants_controller_; }
  bool is_controller() const { return controller_; }
  void make_controller() { controller_ = true; }

  void send(std::shared_ptr<const std::string> message) {
    if (closing_ || gone_) return;
    if (queue_.size() >= owner_.options.max_queued_messages) {
      drop();  // too slow to keep up; never let it hold the others back
      return;
    }
    queue_.push_back(std::move(message));
    if (queue_.size() == 1) write_next();
  }

  void send_error(const std::string& what) {
    send(std::make_shared<const std::string>(error_message(what).dump()));
  }

  void drop() {
    if (gone_) return;
    gone_ = true;
    error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
    owner_.leave(shared_from_this());
  }

 private:
  void on_accept(error_code ec) {
    if (ec) return;
    owner_.join(shared_from_this());
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(error_code ec, std::size_t) {
    if (ec) {
      drop();
      return;
    }
    if (!ws_.got_text()) {
      violation("binary messages are not part of the protocol");
      return;
    }
    const auto text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      const auto command = parse_command(text);
      if (!controller_) {
        send_error("spectators cannot send commands; connect with ?role=controller");
      } else {
        owner_.post_event(command);
      }
    } catch (const ParseError& e) {
      violation(e.what());
      return;
    } catch (const std::exception& e) {
      send_error(e.what());
    }
    read_next();
  }

  void violation(const std::string& what) {
    send_error(std::string("protocol violation: ") + what);
    closing_ = true;
    if (queue_.empty()) close_now();
  }

  void close_now() {
    ws_.async_close(websocket::close_code::policy_error,
                    [self = shared_from_this()](error_code) { self->drop(); });
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(error_code ec, std::size_t) {
    if (ec) {
      drop();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) {
      write_next();
    } else if (closing_ && !gone_) {
      close_now();
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  ServerCore& owner_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool wants_controller_ = false;
  bool controller_ = false;
  bool closing_ = false;
  bool gone_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, ServerCore& owner)
      : stream_(std::move(socket)), owner_(owner) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, request_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

 private:
  void on_read(error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(request_)) {
      if (path_of(sv(request_.target())) != "/ws") {
        respond(http::status::not_found, "text/plain", "websocket endpoint is /ws\n");
        return;
      }
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), owner_, wants_controller(sv(request_.target())))
          ->run(std::move(request_));
      return;
    }
    if (request_.method() != http::verb::get && request_.method() != http::verb::head) {
      respond(http::status::method_not_allowed, "text/plain", "only GET is supported\n");
      return;
    }
    serve_file();
  }

  void serve_file() {
    namespace fs = std::filesystem;
    std::string path(path_of(sv(request_.target())));
    if (path.empty() || path.front() != '/' || path.find("..") != std::string::npos) {
      respond(http::status::bad_request, "text/plain", "bad path\n");
      return;
    }
    if (path.back() == '/') path += "index.html";
    const fs::path file = fs::path(owner_.options.static_dir) / path.substr(1);
    std::error_code ec;
    if (!fs::is_regular_file(file, ec)) {
      respond(http::status::not_found, "text/plain", "not found: " + path + "\n");
      return;
    }
    std::ifstream in(file, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, mime_type(file), body.str());
  }

  void respond(http::status status, std::string_view type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, request_.version());
    res->set(http::field::server, "pong-exhibit");
    res->set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res->keep_alive(false);
    if (request_.method() != http::verb::head) res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](error_code, std::size_t) {
      error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  ServerCore& owner_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
};

void ServerCore::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == net::error::operation_aborted) return;
    } else {
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
    }
    accept();
  });
}

void ServerCore::join(const std::shared_ptr<WsSession>& client) {
  client->send(hello);
  clients.insert(client);
  client_count = clients.size();
  if (client->wants_controller()) {
    if (controller == nullptr) {
      controller = client.get();
      client->make_controller();
      post_event(ControllerChange{true});
    } else {
      client->send_error("controller slot taken; joined as spectator");
    }
  }
}

void ServerCore::leave(const std::shared_ptr<WsSession>& client) {
  clients.erase(client);
  client_count = clients.size();
  if (controller == client.get()) {
    controller = nullptr;
    post_event(ControllerChange{false});
  }
}

void ServerCore::broadcast(std::shared_ptr<const std::string> message) {
  net::post(ioc, [this, message = std::move(message)] {
    // copy: a send may drop a client and erase it from the set
    const auto targets = clients;
    for (const auto& c : targets) c->send(message);
  });
}

void ServerCore::game_loop() {
  using clock = std::chrono::steady_clock;
  auto next = clock::now();
  int idle_frames = 0;
  for (;;) {
    std::vector<LoopEvent> events;
    {
      std::unique_lock lock(mutex);
      wake.wait_until(lock, next, [this] { return stopping; });
      if (stopping) return;
      events.swap(inbox);
    }
    for (const auto& e : events) {
      if (const auto* change = std::get_if<ControllerChange>(&e)) {
        session.set_controller(change->connected);
      } else {
        session.apply(std::get<ClientCommand>(e));
      }
    }
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / session.frame_rate()));
    next += period;
    if (next < clock::now()) next = clock::now();  // fell behind; do not burst
    if (session.paused()) continue;
    if (session.game_over()) {
      const int limit = static_cast<int>(options.auto_reset_seconds * session.frame_rate());
      if (!session.has_controller() && ++idle_frames >= limit) {
        session.apply(ResetCommand{});
        idle_frames = 0;
      }
      continue;
    }
    const auto update = session.advance();
    broadcast(std::make_shared<const std::string>(to_json(update).dump()));
    ++frames;
  }
}

ExhibitServer::ExhibitServer(ExhibitSession session, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(session), std::move(options))) {
  auto& a = impl_->acceptor;
  try {
    const tcp::endpoint endpoint(net::ip::make_address(impl_->options.bind_address),
                                 impl_->options.port);
    a.open(endpoint.protocol());
    a.set_option(net::socket_base::reuse_address(true));
    a.bind(endpoint);
    a.listen(net::socket_base::max_listen_connections);
  } catch (const boost::system::system_error& e) {
    throw std::runtime_error("cannot listen on " + impl_->options.bind_address + ":" +
                             std::to_string(impl_->options.port) + ": " + e.code().message());
  }
}

ExhibitServer::~ExhibitServer() { stop(); }

unsigned short ExhibitServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void ExhibitServer::start() {
  if (impl_->started) throw UsageError("server already started");
  impl_->started = true;
  impl_->accept();
  impl_->io_thread = std::thread([this] { impl_->ioc.run(); });
  impl_->loop_thread = std::thread([this] { impl_->game_loop(); });
}

void ExhibitServer::wait() {
  if (impl_->loop_thread.joinable()) impl_->loop_thread.join();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
}

void ExhibitServer::stop() {
  {
    std::lock_guard lock(impl_->mutex);
    impl_->stopping = true;
  }
  impl_->wake.notify_all();
  impl_->ioc.stop();
  wait();
}

std::uint64_t ExhibitServer::frames_broadcast() const { return impl_->frames; }
std::size_t ExhibitServer::connected_clients() const { return impl_->client_count; }

struct ExhibitClient::Impl {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};
  beast::flat_buffer buffer;
};

ExhibitClient::ExhibitClient(const std::string& host, unsigned short port, bool controller)
    : impl_(std::make_unique<Impl>()) {
  tcp::resolver resolver(impl_->ioc);
  const auto results = resolver.resolve(host, std::to_string(port));
  net::connect(impl_->ws.next_layer(), results.begin(), results.end());
  impl_->ws.read_message_max(std::size_t{1} << 30);
  impl_->ws.handshake(host + ":" + std::to_string(port), controller ? "/ws?role=controller" : "/ws");
}

ExhibitClient::~ExhibitClient() {
  error_code ignored;
  impl_->ws.next_layer().close(ignored);
}

std::string ExhibitClient::read() {
  impl_->buffer.consume(impl_->buffer.size());
  impl_->ws.read(impl_->buffer);
  return beast::buffers_to_string(impl_->buffer.data());
}

void ExhibitClient::send(const ClientCommand& command) { send_text(to_json(command).dump()); }

void ExhibitClient::send_text(const std::string& text) {
  impl_->ws.text(true);
  impl_->ws.write(net::buffer(text));
}

void ExhibitClient::send_binary(const std::string& bytes) {
  impl_->ws.binary(true);
  impl_->ws.write(net::buffer(bytes));
}

void ExhibitClient::close() { impl_->ws.close(websocket::close_code::normal); }

int http_get(const std::string& host, unsigned short port, const std::string& target,
             std::string& body) {
  net::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve(host, std::to_string(port)));
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, host);
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  body = res.body();
  error_code ignored;
  stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
  return static_cast<int>(res.result_int());
}

}  // namespace pong::viz

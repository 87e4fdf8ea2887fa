#include "vigil/gcs/server.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace vigil::gcs {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

std::string resolve_bind(const std::string& fallback) {
  const char* env = std::getenv("VIGIL_BIND");
  return env && *env ? std::string(env) : fallback;
}

std::pair<std::string, unsigned short> parse_bind(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw std::invalid_argument("bind address must be host:port, got '" + address + "'");
  }
  std::string host = address.substr(0, colon);
  if (host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  const auto port_text = address.substr(colon + 1);
  char* end = nullptr;
  const long port = std::strtol(port_text.c_str(), &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) {
    throw std::invalid_argument("bad port in bind address '" + address + "'");
  }
  return {host, static_cast<unsigned short>(port)};
}

struct Server::Impl {
  ServerConfig config;
  net::io_context ioc;
  SessionManager sessions;
  std::optional<tcp::acceptor> acceptor;
  std::vector<std::thread> threads;
  unsigned short port = 0;
  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool started = false;
  bool stopped = false;
  bool joined = false;

  explicit Impl(ServerConfig c) : config(std::move(c)), ioc(std::max(1, config.threads)) {}
  void accept();
};

namespace {

json error_body(std::string_view code, const std::string& message) {
  return {{"v", kProtocolVersion}, {"error", {{"code", code}, {"message", message}}}};
}

Response respond(const Request& req, http::status status, const json& body) {
  Response res{status, req.version()};
  res.set(http::field::server, "vigil-gcs");
  res.set(http::field::content_type, "application/json");
  res.keep_alive(req.keep_alive());
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

std::string path_of(const Request& req) {
  std::string target(req.target());
  if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
  return target;
}

Response handle(SessionManager& sessions, const Request& req) {
  const auto path = path_of(req);
  const auto method = req.method();
  if (path == "/health") {
    if (method != http::verb::get) return respond(req, http::status::method_not_allowed, error_body("METHOD", "use GET"));
    return respond(req, http::status::ok, {{"v", kProtocolVersion}, {"status", "ok"}});
  }
  if (path == "/sessions") {
    if (method == http::verb::get) {
      json list = json::array();
      for (const auto& s : sessions.list()) list.push_back(to_json(s->snapshot()));
      return respond(req, http::status::ok, {{"v", kProtocolVersion}, {"sessions", std::move(list)}});
    }
    if (method == http::verb::post) {
      json body;
      try {
        body = json::parse(req.body());
      } catch (const json::parse_error&) {
        return respond(req, http::status::bad_request, error_body("MALFORMED", "body is not valid JSON"));
      }
      try {
        auto session = sessions.create(session_options_from_json(body));
        return respond(req, http::status::created,
                       {{"v", kProtocolVersion}, {"session", to_json(session->snapshot())}});
      } catch (const std::invalid_argument& e) {
        return respond(req, http::status::bad_request, error_body("INVALID_REQUEST", e.what()));
      }
    }
    return respond(req, http::status::method_not_allowed, error_body("METHOD", "use GET or POST"));
  }
  const std::string prefix = "/sessions/";
  if (path.rfind(prefix, 0) == 0 && path.find('/', prefix.size()) == std::string::npos) {
    const auto id = path.substr(prefix.size());
    if (method == http::verb::get) {
      if (auto s = sessions.find(id)) {
        return respond(req, http::status::ok, {{"v", kProtocolVersion}, {"session", to_json(s->snapshot())}});
      }
    } else if (method == http::verb::delete_) {
      if (sessions.remove(id)) return respond(req, http::status::ok, {{"v", kProtocolVersion}, {"stopped", id}});
    } else {
      return respond(req, http::status::method_not_allowed, error_body("METHOD", "use GET or DELETE"));
    }
    return respond(req, http::status::not_found, error_body("NOT_FOUND", "no session " + id));
  }
  return respond(req, http::status::not_found, error_body("NOT_FOUND", "no route " + path));
}

void prepare(websocket::stream<beast::tcp_stream>& ws) {
  beast::get_lowest_layer(ws).expires_never();
  ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws.set_option(websocket::stream_base::decorator(
      [](websocket::response_type& res) { res.set(http::field::server, "vigil-gcs"); }));
}

class TelemetryConnection : public std::enable_shared_from_this<TelemetryConnection> {
 public:
  TelemetryConnection(tcp::socket socket, std::shared_ptr<Session> session)
      : ws_(std::move(socket)), session_(std::move(session)) {}

  ~TelemetryConnection() {
    if (sub_) session_->unsubscribe(sub_);
  }

  void run(Request req) {
    prepare(ws_);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<TelemetryConnection> weak = shared_from_this();
    auto ex = ws_.get_executor();
    sub_ = session_->subscribe([weak, ex] {
      net::post(ex, [weak] {
        if (auto self = weak.lock()) self->pump();
      });
    });
    read();
    pump();
  }

  void read() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->detach();
        return;
      }
      self->in_.consume(self->in_.size());
      self->read();
    });
  }

  void pump() {
    if (writing_ || closing_ || !sub_) return;
    if (auto msg = sub_->pop()) {
      out_ = std::move(*msg);
      writing_ = true;
      ws_.text(true);
      ws_.async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        self->writing_ = false;
        if (ec) {
          self->detach();
          return;
        }
        self->pump();
      });
      return;
    }
    if (sub_->finished()) {
      closing_ = true;
      ws_.async_close(websocket::close_code::normal,
                      [self = shared_from_this()](beast::error_code) { self->detach(); });
    }
  }

  void detach() {
    if (sub_) {
      session_->unsubscribe(sub_);
      sub_.reset();
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Session> session_;
  std::shared_ptr<Subscription> sub_;
  beast::flat_buffer in_;
  std::string out_;
  bool writing_ = false;
  bool closing_ = false;
};

class CommandConnection : public std::enable_shared_from_this<CommandConnection> {
 public:
  CommandConnection(tcp::socket socket, std::shared_ptr<Session> session)
      : ws_(std::move(socket)), session_(std::move(session)) {}

  void run(Request req) {
    prepare(ws_);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->read();
    });
  }

 private:
  void read() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      const auto text = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      std::weak_ptr<CommandConnection> weak = self;
      auto ex = self->ws_.get_executor();
      self->session_->submit(text, [weak, ex](const json& reply) {
        net::post(ex, [weak, text = reply.dump()] {
          if (auto c = weak.lock()) c->send(text);
        });
      });
      self->read();
    });
  }

  void send(std::string text) {
    out_.push_back(std::move(text));
    if (!writing_) write_next();
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->out_.pop_front();
      self->writing_ = false;
      if (ec) return;
      if (!self->out_.empty()) self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Session> session_;
  beast::flat_buffer in_;
  std::deque<std::string> out_;
  bool writing_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, SessionManager& sessions)
      : stream_(std::move(socket)), sessions_(sessions) {}

  void run() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read(); });
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      upgrade();
      return;
    }
    write(handle(sessions_, req_));
  }

  void upgrade() {
    const auto path = path_of(req_);
    const std::string prefix = "/session/";
    if (path.rfind(prefix, 0) == 0) {
      const auto slash = path.find('/', prefix.size());
      if (slash != std::string::npos) {
        const auto id = path.substr(prefix.size(), slash - prefix.size());
        const auto channel = path.substr(slash + 1);
        if (auto session = sessions_.find(id)) {
          if (channel == "telemetry") {
            std::make_shared<TelemetryConnection>(stream_.release_socket(), session)->run(std::move(req_));
            return;
          }
          if (channel == "command") {
            std::make_shared<CommandConnection>(stream_.release_socket(), session)->run(std::move(req_));
            return;
          }
        }
      }
    }
    write(respond(req_, http::status::not_found, error_body("NOT_FOUND", "no websocket endpoint " + path)));
  }

  void write(Response res) {
    res_ = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *res_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (self->res_->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  SessionManager& sessions_;
  beast::flat_buffer buffer_;
  Request req_;
  std::shared_ptr<Response> res_;
};

}  // namespace

void Server::Impl::accept() {
  acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted || !acceptor->is_open()) return;
    if (!ec) std::make_shared<HttpConnection>(std::move(socket), sessions)->run();
    accept();
  });
}

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() { stop(); }

void Server::start() {
  std::lock_guard lock(impl_->mutex);
  if (impl_->started) throw std::logic_error("server already started");
  const auto [host, port] = parse_bind(impl_->config.bind);
  beast::error_code ec;
  tcp::resolver resolver(impl_->ioc);
  const auto results = resolver.resolve(host, std::to_string(port), ec);
  if (ec || results.empty()) {
    throw std::runtime_error("cannot resolve " + impl_->config.bind + ": " + ec.message());
  }
  const auto endpoint = results.begin()->endpoint();
  auto& acceptor = impl_->acceptor.emplace(impl_->ioc);
  auto fail = [&](const char* what) {
    throw std::runtime_error(std::string("cannot bind ") + impl_->config.bind + " (" + what + "): " + ec.message());
  };
  acceptor.open(endpoint.protocol(), ec);
  if (ec) fail("open");
  acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (ec) fail("reuse_address");
  acceptor.bind(endpoint, ec);
  if (ec) fail("bind");
  acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) fail("listen");
  impl_->port = acceptor.local_endpoint().port();
  impl_->started = true;
  impl_->accept();
  for (int i = 0; i < std::max(1, impl_->config.threads); ++i) {
    impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  }
}

void Server::stop() {
  {
    std::lock_guard lock(impl_->mutex);
    if (!impl_->started || impl_->stopped) return;
    impl_->stopped = true;
  }
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor->close(ec);
  });
  impl_->sessions.stop_all();
  impl_->ioc.stop();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
  {
    std::lock_guard lock(impl_->mutex);
    impl_->joined = true;
  }
  impl_->stopped_cv.notify_all();
}

void Server::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [&] { return impl_->joined; });
}

unsigned short Server::port() const { return impl_->port; }

SessionManager& Server::sessions() { return impl_->sessions; }

}  // namespace vigil::gcs

#include "vigil/backend.hpp"

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "vigil/json_codec.hpp"

namespace vigil {

namespace {

using Clock = std::chrono::steady_clock;

void sleep_ms(double ms) {
  if (ms <= 0.0) return;
  std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

int remaining_ms(InferenceBackend::Deadline deadline) {
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return static_cast<int>(std::clamp<long long>(left, 0, 1'000'000));
}

const FrameObservation* find_frame(const MissionTrace& trace, FrameIndex index) {
  const auto it = std::lower_bound(
      trace.frames.begin(), trace.frames.end(), index,
      [](const FrameObservation& f, FrameIndex i) { return f.frame_index < i; });
  if (it == trace.frames.end() || it->frame_index != index) return nullptr;
  return &*it;
}

bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const auto n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads one '\n'-terminated line; false on EOF, error or (deadline) timeout.
bool read_line(int fd, std::string& buffer, std::string& line,
               std::optional<InferenceBackend::Deadline> deadline) {
  for (;;) {
    if (const auto pos = buffer.find('\n'); pos != std::string::npos) {
      line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      return true;
    }
    pollfd p{fd, POLLIN, 0};
    const int timeout = deadline ? remaining_ms(*deadline) : 200;
    const int r = ::poll(&p, 1, timeout);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (r == 0) {
      if (deadline) return false;
      continue;
    }
    char chunk[4096];
    const auto n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace

std::string_view to_string(BackendMode mode) {
  switch (mode) {
    case BackendMode::gpu_class: return "GPU_CLASS";
    case BackendMode::cpu_class: return "CPU_CLASS";
    case BackendMode::trace: return "TRACE";
  }
  return "TRACE";
}

TraceBackend::TraceBackend(std::shared_ptr<const MissionTrace> trace, SimulatedDelays delays)
    : trace_(std::move(trace)), delays_(delays) {
  if (!trace_) throw std::invalid_argument("trace backend needs a trace");
}

BackendCapability TraceBackend::capability() const {
  BackendMode mode = BackendMode::trace;
  if (delays_.total_ms() >= 100.0) {
    mode = BackendMode::cpu_class;
  } else if (delays_.total_ms() > 0.0) {
    mode = BackendMode::gpu_class;
  }
  return {delays_.detect_ms, delays_.behave_ms, mode};
}

FrameObservation TraceBackend::detect(FrameIndex frame, Deadline) {
  sleep_ms(delays_.detect_ms);
  const auto* found = find_frame(*trace_, frame);
  if (!found) throw BackendError("frame " + std::to_string(frame) + " not in trace");
  return *found;
}

void TraceBackend::classify(FrameObservation&, Deadline) { sleep_ms(delays_.behave_ms); }

std::unique_ptr<InferenceBackend> trace_backend(std::shared_ptr<const MissionTrace> trace,
                                                SimulatedDelays delays) {
  return std::make_unique<TraceBackend>(std::move(trace), delays);
}

SocketBackend::SocketBackend(std::string address) : address_(std::move(address)) {
  if (address_.rfind("unix:", 0) != 0 && address_.rfind("tcp:", 0) != 0) {
    throw std::invalid_argument("backend address must start with unix: or tcp:");
  }
}

SocketBackend::~SocketBackend() { disconnect(); }

void SocketBackend::disconnect() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  buffer_.clear();
}

void SocketBackend::connect() {
  if (fd_ >= 0) return;
  if (address_.rfind("unix:", 0) == 0) {
    const auto path = address_.substr(5);
    sockaddr_un addr{};
    if (path.size() >= sizeof addr.sun_path) throw BackendError("socket path too long");
    addr.sun_family = AF_UNIX;
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw BackendError("socket: " + std::string(std::strerror(errno)));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd);
      throw BackendError("connect " + path + ": " + err);
    }
    fd_ = fd;
    return;
  }
  const auto rest = address_.substr(4);
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) throw BackendError("tcp address needs host:port");
  const auto host = rest.substr(0, colon);
  const auto port = rest.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw BackendError("resolve " + rest + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw BackendError("connect " + rest + " failed");
  fd_ = fd;
}

BackendCapability SocketBackend::capability() const { return {0.0, 0.0, BackendMode::gpu_class}; }

FrameObservation SocketBackend::detect(FrameIndex frame, Deadline deadline) {
  connect();
  const std::string request = nlohmann::json{{"frame_index", frame}}.dump() + "\n";
  if (!write_all(fd_, request)) {
    disconnect();
    throw BackendError("backend write failed");
  }
  std::string line;
  if (!read_line(fd_, buffer_, line, deadline)) {
    // A late reply would desynchronise the stream.
    disconnect();
    throw BackendError("no reply for frame " + std::to_string(frame) + " before deadline");
  }
  try {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("error")) throw BackendError("backend: " + j["error"].dump());
    return codec::frame_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed backend reply: ") + e.what());
  } catch (const codec::JsonFieldError& e) {
    throw BackendError(std::string("malformed backend reply: ") + e.what());
  }
}

void SocketBackend::classify(FrameObservation&, Deadline) {}

TraceBackendServer::TraceBackendServer(std::shared_ptr<const MissionTrace> trace,
                                       std::filesystem::path socket_path, SimulatedDelays delays)
    : trace_(std::move(trace)), path_(std::move(socket_path)), delays_(delays) {
  sockaddr_un addr{};
  const auto path = path_.string();
  if (path.size() >= sizeof addr.sun_path) throw std::invalid_argument("socket path too long");
  addr.sun_family = AF_UNIX;
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  std::filesystem::remove(path_);
  listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listen_fd_ < 0 ||
      ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 4) != 0) {
    const std::string err = std::strerror(errno);
    if (listen_fd_ >= 0) ::close(listen_fd_);
    throw std::runtime_error("cannot listen on " + path + ": " + err);
  }
  thread_ = std::thread([this] { serve(); });
}

TraceBackendServer::~TraceBackendServer() { stop(); }

void TraceBackendServer::stop() {
  if (stopping_.exchange(true)) return;
  if (thread_.joinable()) thread_.join();
  ::close(listen_fd_);
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void TraceBackendServer::serve() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::string buffer;
    std::string line;
    while (!stopping_) {
      pollfd c{fd, POLLIN, 0};
      const int r = ::poll(&c, 1, 100);
      if (r == 0) continue;
      if (r < 0 || !read_line(fd, buffer, line, Clock::now() + std::chrono::seconds(5))) break;
      nlohmann::json reply;
      try {
        const auto index = codec::get_uint(nlohmann::json::parse(line), "frame_index");
        sleep_ms(delays_.total_ms());
        if (const auto* f = find_frame(*trace_, index)) {
          reply = codec::to_json(*f);
        } else {
          reply = {{"error", "unknown frame"}, {"frame_index", index}};
        }
      } catch (const std::exception& e) {
        reply = {{"error", e.what()}};
      }
      if (!write_all(fd, reply.dump() + "\n")) break;
    }
    ::close(fd);
  }
}

}  // namespace vigil

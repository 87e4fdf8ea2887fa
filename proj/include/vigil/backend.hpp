#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>

#include "vigil/trace.hpp"
#include "vigil/types.hpp"

namespace vigil {

enum class BackendMode : std::uint8_t { gpu_class, cpu_class, trace };

std::string_view to_string(BackendMode mode);

struct BackendCapability {
  double detect_latency_estimate_ms = 0.0;
  double behavior_latency_estimate_ms = 0.0;
  BackendMode mode = BackendMode::trace;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two-stage inference: detection, then per-individual behavior
/// classification. Implementations must return or throw BackendError by the
/// deadline.
class InferenceBackend {
 public:
  using Deadline = std::chrono::steady_clock::time_point;

  virtual ~InferenceBackend() = default;

  virtual BackendCapability capability() const = 0;
  /// Boxes and detection confidences for the frame.
  virtual FrameObservation detect(FrameIndex frame, Deadline deadline) = 0;
  /// Fills behavior labels and confidences for the detected individuals.
  virtual void classify(FrameObservation& frame, Deadline deadline) = 0;
};

/// Per-stage latency injected by simulated backends.
struct SimulatedDelays {
  double detect_ms = 0.0;
  double behave_ms = 0.0;

  double total_ms() const { return detect_ms + behave_ms; }

  /// Edge GPU profile (detector 4.7 ms, behavior classifier 19.1 ms).
  static SimulatedDelays gpu() { return {4.7, 19.1}; }
  /// CPU-only profile (183.2 ms + 743.7 ms).
  static SimulatedDelays cpu() { return {183.2, 743.7}; }
};

/// Replays the pre-recorded observations of a trace, optionally sleeping the
/// given stage delays. Unknown frame indices raise BackendError.
class TraceBackend final : public InferenceBackend {
 public:
  TraceBackend(std::shared_ptr<const MissionTrace> trace, SimulatedDelays delays);

  BackendCapability capability() const override;
  FrameObservation detect(FrameIndex frame, Deadline deadline) override;
  void classify(FrameObservation& frame, Deadline deadline) override;

 private:
  std::shared_ptr<const MissionTrace> trace_;
  SimulatedDelays delays_;
};

std::unique_ptr<InferenceBackend> trace_backend(std::shared_ptr<const MissionTrace> trace,
                                                SimulatedDelays delays = {});

/// Live backend over a local stream socket speaking newline-delimited JSON:
/// the request is {"frame_index": N}, the response one frame object in trace
/// schema. Address forms: `unix:/path/to.sock` or `tcp:host:port`. Detection
/// covers the whole round trip; classification is a no-op.
class SocketBackend final : public InferenceBackend {
 public:
  explicit SocketBackend(std::string address);
  ~SocketBackend() override;
  SocketBackend(const SocketBackend&) = delete;
  SocketBackend& operator=(const SocketBackend&) = delete;

  BackendCapability capability() const override;
  FrameObservation detect(FrameIndex frame, Deadline deadline) override;
  void classify(FrameObservation& frame, Deadline deadline) override;

 private:
  void connect();
  void disconnect();

  std::string address_;
  int fd_ = -1;
  std::string buffer_;
};

/// Serves a trace over the SocketBackend protocol on a Unix socket, one
/// client at a time. Used for demos and tests of the live path.
class TraceBackendServer {
 public:
  TraceBackendServer(std::shared_ptr<const MissionTrace> trace, std::filesystem::path socket_path,
                     SimulatedDelays delays = {});
  ~TraceBackendServer();
  TraceBackendServer(const TraceBackendServer&) = delete;
  TraceBackendServer& operator=(const TraceBackendServer&) = delete;

  std::string address() const { return "unix:" + path_.string(); }
  void stop();

 private:
  void serve();

  std::shared_ptr<const MissionTrace> trace_;
  std::filesystem::path path_;
  SimulatedDelays delays_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread thread_;
};

}  // namespace vigil

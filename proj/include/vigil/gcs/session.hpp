#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "vigil/gcs/protocol.hpp"
#include "vigil/pipeline.hpp"

namespace vigil::gcs {

enum class SessionMode : std::uint8_t { replay, live };
enum class SessionStatus : std::uint8_t { idle, running, finished, stopped, failed };

std::string_view to_string(SessionMode mode);
std::string_view to_string(SessionStatus status);

struct ReplaySourceSpec {
  std::shared_ptr<const MissionTrace> trace;
  ReplaySpeed speed = ReplaySpeed::realtime(1.0);
  SimulatedDelays delays;
};

struct LiveSourceSpec {
  /// "unix:/path" or "tcp:host:port".
  std::string backend;
  double fps = 30.0;
  std::optional<FrameIndex> frame_count;
};

struct SessionOptions {
  std::variant<ReplaySourceSpec, LiveSourceSpec> source;
  VigilanceConfig config;
  std::optional<SamplingPolicy> policy;
  double budget_ms = kDefaultBudgetMs;
  /// Telemetry messages buffered per client before it is marked behind.
  std::size_t client_buffer = 1024;
  /// Publish a LATENCY message every n processed frames.
  int latency_every = 1;
  bool autostart = true;
};

/// Throws std::invalid_argument naming the offending field. Replay traces are
/// loaded from `trace` (a file path).
SessionOptions session_options_from_json(const json& j);

struct ModelConfidence {
  std::optional<double> mean_detection;
  std::optional<double> mean_behavior;
  bool degraded = false;
};

struct SessionSnapshot {
  std::string id;
  SessionMode mode = SessionMode::replay;
  SessionStatus status = SessionStatus::idle;
  std::string mission_id;
  double theta_s = 0.3;
  AlertLevel alert_level = AlertLevel::green;
  DroneState drone_state = DroneState::tracking;
  /// Trace collection mode; no flight stack exists to report a real one.
  std::string navigation_mode;
  std::optional<double> battery_pct;
  std::optional<double> speed;
  ModelConfidence model_confidence;
  std::size_t frames_processed = 0;
  std::optional<std::size_t> frames_total;
  std::size_t frames_skipped = 0;
  std::size_t frames_dropped = 0;
  std::optional<Seq> last_seq;
};

json to_json(const SessionSnapshot& s);

/// Bounded per-client queue of serialized messages. Overflow drops messages
/// and queues one GAP notice naming the dropped seq range.
class Subscription {
 public:
  Subscription(std::string session, std::size_t capacity, std::function<void()> wake);

  std::optional<std::string> pop();
  /// True once MISSION_END was queued and everything has been popped.
  bool finished() const;
  std::size_t dropped() const;

 private:
  friend class Session;
  void push(Seq seq, std::string text, bool force);
  void close();
  void wake();

  const std::string session_;
  const std::size_t capacity_;
  std::function<void()> wake_;
  mutable std::mutex mutex_;
  std::deque<std::string> queue_;
  std::optional<std::pair<Seq, Seq>> gap_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

/// One mission stream. The pipeline runs on its own thread; commands queue up
/// and apply between frames.
class Session {
 public:
  using Reply = std::function<void(const json&)>;

  Session(std::string id, SessionOptions options);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  SessionSnapshot snapshot() const;

  /// The first message is a STATE snapshot carrying the last published seq.
  std::shared_ptr<Subscription> subscribe(std::function<void()> wake = {});
  void unsubscribe(const std::shared_ptr<Subscription>& sub);

  /// Parses and handles one command; `reply` receives ACK or REJECT, possibly
  /// from the pipeline thread.
  void submit(std::string_view text, Reply reply);
  void submit(const OperatorCommand& cmd, Reply reply);

  /// Throws std::logic_error unless idle.
  void start();
  void stop();
  /// Blocks until the session has ended.
  void wait();

 private:
  class Sink;
  struct Pending {
    OperatorCommand cmd;
    Reply reply;
  };

  void run();
  void apply_pending(VigilanceConfig& config);
  Seq publish_locked(TelemetryKind kind, json payload, bool force = false);
  SessionSnapshot snapshot_locked() const;
  void reject_pending_locked(std::vector<std::pair<Reply, json>>& replies);

  const std::string id_;
  SessionOptions options_;
  SessionMode mode_;
  std::unique_ptr<FrameSource> source_;
  TraceFrameSource* replay_source_ = nullptr;
  std::unique_ptr<InferenceBackend> backend_;

  mutable std::mutex mutex_;
  std::condition_variable done_;
  SessionStatus status_ = SessionStatus::idle;
  bool stop_requested_ = false;
  VigilanceConfig config_;
  DroneState drone_state_ = DroneState::tracking;
  AlertLevel level_ = AlertLevel::green;
  ModelConfidence confidence_;
  std::size_t processed_ = 0;
  std::size_t skipped_ = 0;
  std::size_t dropped_ = 0;
  Seq next_seq_ = 1;
  std::deque<Pending> pending_;
  std::vector<std::shared_ptr<Subscription>> subscribers_;
  std::thread runner_;
};

class SessionManager {
 public:
  SessionManager() = default;
  ~SessionManager();

  std::shared_ptr<Session> create(SessionOptions options);
  std::shared_ptr<Session> find(const std::string& id) const;
  std::vector<std::shared_ptr<Session>> list() const;
  /// Stops and forgets the session. False if unknown.
  bool remove(const std::string& id);
  void stop_all();

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace vigil::gcs

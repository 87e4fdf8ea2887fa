#include "vigil/gcs/session.hpp"

#include <stdexcept>

#include "vigil/json_codec.hpp"
#include "vigil/trace_io.hpp"

namespace vigil::gcs {

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string_view policy_name(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::every_frame: return "EVERY_FRAME";
    case SamplingMode::stride: return "STRIDE";
    case SamplingMode::adaptive: return "ADAPTIVE";
  }
  return "EVERY_FRAME";
}

SamplingPolicy policy_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == policy_name(SamplingMode::every_frame)) return SamplingPolicy::every_frame();
    if (s == policy_name(SamplingMode::adaptive)) return SamplingPolicy::adaptive();
  } else if (j.is_object() && j.contains("stride")) {
    return SamplingPolicy::fixed_stride(static_cast<int>(codec::get_int(j, "stride")));
  }
  throw std::invalid_argument("policy: expected EVERY_FRAME, ADAPTIVE or {\"stride\": k}");
}

SimulatedDelays delays_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "none") return {};
    if (s == "gpu") return SimulatedDelays::gpu();
    if (s == "cpu") return SimulatedDelays::cpu();
    throw std::invalid_argument("delays: expected none, gpu, cpu or an object");
  }
  SimulatedDelays d;
  d.detect_ms = codec::get_number(j, "detect_ms");
  d.behave_ms = codec::get_number(j, "behave_ms");
  if (d.detect_ms < 0.0 || d.behave_ms < 0.0) throw std::invalid_argument("delays must be non-negative");
  return d;
}

}  // namespace

std::string_view to_string(SessionMode mode) {
  return mode == SessionMode::replay ? "REPLAY" : "LIVE";
}

std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::idle: return "IDLE";
    case SessionStatus::running: return "RUNNING";
    case SessionStatus::finished: return "FINISHED";
    case SessionStatus::stopped: return "STOPPED";
    case SessionStatus::failed: return "FAILED";
  }
  return "IDLE";
}

SessionOptions session_options_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("session request must be a JSON object");
  SessionOptions o;
  try {
    const std::string mode = j.value("mode", std::string("replay"));
    if (mode == "replay") {
      ReplaySourceSpec spec;
      const auto path = codec::get_string(j, "trace");
      try {
        spec.trace = std::make_shared<const MissionTrace>(parse_trace(std::filesystem::path(path)));
      } catch (const TraceError& e) {
        throw std::invalid_argument(std::string("trace: ") + e.what());
      }
      if (auto it = j.find("speed"); it != j.end()) {
        if (it->is_string() && it->get<std::string>() == "afap") {
          spec.speed = ReplaySpeed::afap();
        } else if (it->is_number()) {
          const double s = it->get<double>();
          if (s < kMinSpeed || s > kMaxSpeed) throw std::invalid_argument("speed must lie in [0.1, 100]");
          spec.speed = ReplaySpeed::realtime(s);
        } else {
          throw std::invalid_argument("speed: expected a number or \"afap\"");
        }
      }
      if (auto it = j.find("delays"); it != j.end()) spec.delays = delays_from_json(*it);
      o.source = std::move(spec);
    } else if (mode == "live") {
      LiveSourceSpec spec;
      spec.backend = codec::get_string(j, "backend");
      if (j.contains("fps")) spec.fps = codec::get_number(j, "fps");
      if (j.contains("frames")) spec.frame_count = codec::get_uint(j, "frames");
      if (!(spec.fps > 0.0)) throw std::invalid_argument("fps must be positive");
      o.source = std::move(spec);
    } else {
      throw std::invalid_argument("mode: expected replay or live");
    }
    if (auto it = j.find("config"); it != j.end()) o.config = codec::config_from_json(*it);
    if (j.contains("theta_S")) o.config.theta_s = codec::get_number(j, "theta_S");
    validate(o.config);
    if (auto it = j.find("policy"); it != j.end()) o.policy = policy_from_json(*it);
    if (j.contains("budget_ms")) {
      o.budget_ms = codec::get_number(j, "budget_ms");
      if (!(o.budget_ms > 0.0)) throw std::invalid_argument("budget_ms must be positive");
    }
    if (j.contains("client_buffer")) o.client_buffer = codec::get_uint(j, "client_buffer");
    if (o.client_buffer == 0) throw std::invalid_argument("client_buffer must be positive");
    if (j.contains("latency_every")) o.latency_every = static_cast<int>(codec::get_int(j, "latency_every"));
    if (o.latency_every < 1) throw std::invalid_argument("latency_every must be at least 1");
    if (j.contains("autostart")) o.autostart = codec::get_bool(j, "autostart");
  } catch (const codec::JsonFieldError& e) {
    throw std::invalid_argument(e.what());
  }
  return o;
}

json to_json(const SessionSnapshot& s) {
  return {
      {"id", s.id},
      {"mode", to_string(s.mode)},
      {"status", to_string(s.status)},
      {"mission_id", s.mission_id},
      {"theta_S", s.theta_s},
      {"alert_level", to_string(s.alert_level)},
      {"drone_state", to_string(s.drone_state)},
      {"navigation_mode", s.navigation_mode},
      {"battery_pct", optional_json(s.battery_pct)},
      {"speed", optional_json(s.speed)},
      {"model_confidence",
       {{"mean_detection", optional_json(s.model_confidence.mean_detection)},
        {"mean_behavior", optional_json(s.model_confidence.mean_behavior)},
        {"degraded", s.model_confidence.degraded}}},
      {"frames_processed", s.frames_processed},
      {"frames_total", s.frames_total ? json(*s.frames_total) : json(nullptr)},
      {"frames_skipped", s.frames_skipped},
      {"frames_dropped", s.frames_dropped},
      {"last_seq", s.last_seq ? json(*s.last_seq) : json(nullptr)},
  };
}

// Subscription

Subscription::Subscription(std::string session, std::size_t capacity, std::function<void()> wake)
    : session_(std::move(session)), capacity_(capacity), wake_(std::move(wake)) {}

void Subscription::push(Seq seq, std::string text, bool force) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    if (!force && queue_.size() >= capacity_) {
      if (gap_) {
        gap_->second = seq;
      } else {
        gap_ = {seq, seq};
      }
      ++dropped_;
      return;
    }
    if (gap_) {
      queue_.push_back(gap_notice(session_, gap_->first, gap_->second).dump());
      gap_.reset();
    }
    queue_.push_back(std::move(text));
  }
  wake();
}

void Subscription::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  wake();
}

void Subscription::wake() {
  if (wake_) wake_();
}

std::optional<std::string> Subscription::pop() {
  std::lock_guard lock(mutex_);
  if (queue_.empty()) return std::nullopt;
  auto s = std::move(queue_.front());
  queue_.pop_front();
  return s;
}

bool Subscription::finished() const {
  std::lock_guard lock(mutex_);
  return closed_ && queue_.empty();
}

std::size_t Subscription::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

// Session

class Session::Sink final : public PipelineSink {
 public:
  explicit Sink(Session& s) : s_(s) {}

  void on_frame(const PipelineOutput& out) override {
    std::lock_guard lock(s_.mutex_);
    ++s_.processed_;
    s_.level_ = out.level;
    const bool was_degraded = s_.confidence_.degraded;
    s_.confidence_.degraded = out.sample.degraded();
    s_.confidence_.mean_behavior = out.sample.mean_behavior_confidence;
    if (!out.frame.individuals.empty()) {
      double sum = 0.0;
      for (const auto& ind : out.frame.individuals) sum += ind.detection_confidence;
      s_.confidence_.mean_detection = sum / static_cast<double>(out.frame.individuals.size());
    } else {
      s_.confidence_.mean_detection.reset();
    }
    s_.publish_locked(TelemetryKind::sample, sample_payload(out, s_.config_));
    if (out.event) s_.publish_locked(TelemetryKind::alert, alert_payload(*out.event, out.level));
    if (was_degraded != s_.confidence_.degraded) {
      s_.publish_locked(TelemetryKind::state, to_json(s_.snapshot_locked()));
    }
    if (s_.processed_ % static_cast<std::size_t>(s_.options_.latency_every) == 0) {
      s_.publish_locked(TelemetryKind::latency, latency_payload(out.latency));
    }
  }

  void on_skip(const SkipMarker& skip) override {
    std::lock_guard lock(s_.mutex_);
    if (skip.reason == SkipReason::stride) {
      s_.skipped_ += skip.count;
    } else {
      s_.dropped_ += skip.count;
    }
  }

 private:
  Session& s_;
};

Session::Session(std::string id, SessionOptions options)
    : id_(std::move(id)), options_(std::move(options)), config_(options_.config) {
  validate(config_);
  if (options_.client_buffer == 0) throw std::invalid_argument("client_buffer must be positive");
  if (options_.latency_every < 1) throw std::invalid_argument("latency_every must be at least 1");
  if (auto* replay = std::get_if<ReplaySourceSpec>(&options_.source)) {
    if (!replay->trace) throw std::invalid_argument("replay session needs a trace");
    mode_ = SessionMode::replay;
    auto source = std::make_unique<TraceFrameSource>(replay->trace, replay->speed);
    replay_source_ = source.get();
    source_ = std::move(source);
    backend_ = std::make_unique<TraceBackend>(replay->trace, replay->delays);
  } else {
    const auto& live = std::get<LiveSourceSpec>(options_.source);
    mode_ = SessionMode::live;
    source_ = std::make_unique<CameraFrameSource>(live.fps, live.frame_count);
    backend_ = std::make_unique<SocketBackend>(live.backend);
  }
}

Session::~Session() {
  stop();
  if (runner_.joinable()) runner_.join();
}

SessionSnapshot Session::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_locked();
}

SessionSnapshot Session::snapshot_locked() const {
  SessionSnapshot s;
  s.id = id_;
  s.mode = mode_;
  s.status = status_;
  s.theta_s = config_.theta_s;
  s.alert_level = level_;
  s.drone_state = drone_state_;
  s.model_confidence = confidence_;
  s.frames_processed = processed_;
  s.frames_skipped = skipped_;
  s.frames_dropped = dropped_;
  if (next_seq_ > 1) s.last_seq = next_seq_ - 1;
  if (const auto* replay = std::get_if<ReplaySourceSpec>(&options_.source)) {
    const auto& meta = replay->trace->metadata;
    s.mission_id = meta.mission_id;
    s.navigation_mode = std::string(to_string(meta.collection_mode));
    s.battery_pct = meta.battery_pct;
    s.frames_total = replay->trace->frames.size();
    if (!replay->speed.unpaced()) s.speed = replay_source_->speed_multiplier();
  } else {
    const auto& live = std::get<LiveSourceSpec>(options_.source);
    s.navigation_mode = "LIVE";
    if (live.frame_count) s.frames_total = static_cast<std::size_t>(*live.frame_count);
  }
  return s;
}

Seq Session::publish_locked(TelemetryKind kind, json payload, bool force) {
  const Seq seq = next_seq_++;
  const auto text = to_json(TelemetryMessage{id_, seq, kind, std::move(payload), false}).dump();
  for (const auto& sub : subscribers_) sub->push(seq, text, force);
  return seq;
}

std::shared_ptr<Subscription> Session::subscribe(std::function<void()> wake) {
  std::lock_guard lock(mutex_);
  auto sub = std::make_shared<Subscription>(id_, options_.client_buffer, std::move(wake));
  TelemetryMessage snap{id_, next_seq_ - 1, TelemetryKind::state, to_json(snapshot_locked()), true};
  sub->push(snap.seq, to_json(snap).dump(), true);
  const bool ended = status_ != SessionStatus::idle && status_ != SessionStatus::running;
  if (ended) {
    sub->close();
  } else {
    subscribers_.push_back(sub);
  }
  return sub;
}

void Session::unsubscribe(const std::shared_ptr<Subscription>& sub) {
  std::lock_guard lock(mutex_);
  std::erase(subscribers_, sub);
}

void Session::submit(std::string_view text, Reply reply) {
  OperatorCommand cmd;
  try {
    cmd = parse_command(text);
  } catch (const CommandRejected& e) {
    std::optional<CommandKind> kind;
    try {
      const auto j = json::parse(text);
      if (j.is_object() && j.contains("kind") && j["kind"].is_string()) {
        kind = parse_command_kind(j["kind"].get<std::string>());
      }
    } catch (const json::exception&) {
    }
    reply(reject(e, kind));
    return;
  }
  submit(cmd, std::move(reply));
}

void Session::submit(const OperatorCommand& cmd, Reply reply) {
  auto refuse = [&](RejectCode code, const std::string& why) {
    reply(reject(CommandRejected(code, why, cmd.id), cmd.kind));
  };
  std::unique_lock lock(mutex_);
  if (status_ != SessionStatus::idle && status_ != SessionStatus::running) {
    lock.unlock();
    refuse(RejectCode::session_ended, "session has ended");
    return;
  }
  switch (cmd.kind) {
    case CommandKind::stop:
      lock.unlock();
      stop();
      reply(ack(cmd));
      return;
    case CommandKind::start_replay: {
      if (status_ != SessionStatus::idle) {
        lock.unlock();
        refuse(RejectCode::invalid_state, "session already running");
        return;
      }
      if (cmd.speed) {
        if (!replay_source_ || !replay_source_->realtime()) {
          lock.unlock();
          refuse(RejectCode::invalid_state, "speed applies to paced replays only");
          return;
        }
        replay_source_->set_speed(ReplaySpeed::realtime(*cmd.speed));
      }
      lock.unlock();
      start();
      reply(ack(cmd));
      return;
    }
    case CommandKind::set_speed:
      if (!replay_source_ || !replay_source_->realtime()) {
        lock.unlock();
        refuse(RejectCode::invalid_state, "speed applies to paced replays only");
        return;
      }
      break;
    default: break;
  }
  pending_.push_back({cmd, std::move(reply)});
}

void Session::apply_pending(VigilanceConfig& config) {
  std::vector<std::pair<Reply, json>> replies;
  {
    std::lock_guard lock(mutex_);
    if (pending_.empty()) return;
    std::vector<Pending> batch(std::make_move_iterator(pending_.begin()),
                               std::make_move_iterator(pending_.end()));
    pending_.clear();
    std::vector<std::size_t> threshold_acks;
    for (auto& p : batch) {
      switch (p.cmd.kind) {
        case CommandKind::set_threshold:
          config.theta_s = *p.cmd.theta_s;
          config_.theta_s = *p.cmd.theta_s;
          threshold_acks.push_back(replies.size());
          break;
        case CommandKind::pause: drone_state_ = DroneState::pause; break;
        case CommandKind::retreat: drone_state_ = DroneState::retreat; break;
        case CommandKind::resume: drone_state_ = DroneState::tracking; break;
        case CommandKind::set_speed: replay_source_->set_speed(ReplaySpeed::realtime(*p.cmd.speed)); break;
        default: break;
      }
      replies.emplace_back(std::move(p.reply), ack(p.cmd));
    }
    publish_locked(TelemetryKind::state, to_json(snapshot_locked()));
    // The frame being processed publishes its SAMPLE next.
    for (auto i : threshold_acks) replies[i].second["applies_from_seq"] = next_seq_;
  }
  for (auto& [reply, msg] : replies) reply(msg);
}

void Session::reject_pending_locked(std::vector<std::pair<Reply, json>>& replies) {
  for (auto& p : pending_) {
    replies.emplace_back(std::move(p.reply),
                         reject(CommandRejected(RejectCode::session_ended, "session has ended", p.cmd.id),
                                p.cmd.kind));
  }
  pending_.clear();
}

void Session::start() {
  std::lock_guard lock(mutex_);
  if (status_ != SessionStatus::idle) throw std::logic_error("session " + id_ + " is not idle");
  status_ = SessionStatus::running;
  publish_locked(TelemetryKind::state, to_json(snapshot_locked()));
  runner_ = std::thread([this] { run(); });
}

void Session::stop() {
  std::vector<std::pair<Reply, json>> replies;
  {
    std::lock_guard lock(mutex_);
    if (status_ == SessionStatus::running) {
      stop_requested_ = true;
      source_->cancel();
      return;
    }
    if (status_ != SessionStatus::idle) return;
    status_ = SessionStatus::stopped;
    publish_locked(TelemetryKind::mission_end, {{"reason", "STOPPED"}, {"frames_processed", 0}}, true);
    for (const auto& sub : subscribers_) sub->close();
    subscribers_.clear();
    reject_pending_locked(replies);
  }
  done_.notify_all();
  for (auto& [reply, msg] : replies) reply(msg);
}

void Session::wait() {
  std::unique_lock lock(mutex_);
  done_.wait(lock, [&] { return status_ != SessionStatus::idle && status_ != SessionStatus::running; });
}

void Session::run() {
  PipelineOptions po;
  {
    std::lock_guard lock(mutex_);
    po.config = config_;
  }
  po.policy = options_.policy.value_or(SamplingPolicy::for_backend(backend_->capability()));
  po.budget_ms = options_.budget_ms;
  po.between_frames = [this](VigilanceConfig& c) { apply_pending(c); };
  Sink sink(*this);
  PipelineSink* sinks[] = {&sink};
  std::optional<PipelineStats> stats;
  std::optional<std::string> error;
  try {
    stats = run_pipeline(*source_, *backend_, po, sinks);
  } catch (const std::exception& e) {
    error = e.what();
  }

  std::vector<std::pair<Reply, json>> replies;
  {
    std::lock_guard lock(mutex_);
    status_ = error ? SessionStatus::failed : stop_requested_ ? SessionStatus::stopped : SessionStatus::finished;
    json end = {{"reason", error ? "ERROR" : stop_requested_ ? "STOPPED" : "COMPLETED"},
                {"frames_processed", processed_},
                {"frames_skipped", skipped_},
                {"frames_dropped", dropped_},
                {"alert_level", to_string(level_)}};
    if (error) end["error"] = *error;
    if (stats) {
      end["frames_seen"] = stats->frames_seen;
      end["slo_misses"] = stats->slo_misses;
      end["backend_failures"] = stats->backend_failures;
      end["mean_overhead_ms"] = stats->mean_overhead_ms;
      end["wall_seconds"] = stats->wall_seconds;
    }
    publish_locked(TelemetryKind::state, to_json(snapshot_locked()), true);
    publish_locked(TelemetryKind::mission_end, std::move(end), true);
    for (const auto& sub : subscribers_) sub->close();
    subscribers_.clear();
    reject_pending_locked(replies);
  }
  done_.notify_all();
  for (auto& [reply, msg] : replies) reply(msg);
}

// SessionManager

SessionManager::~SessionManager() { stop_all(); }

std::shared_ptr<Session> SessionManager::create(SessionOptions options) {
  const bool autostart = options.autostart;
  std::shared_ptr<Session> session;
  {
    std::lock_guard lock(mutex_);
    const auto id = "s" + std::to_string(++counter_);
    session = std::make_shared<Session>(id, std::move(options));
    sessions_[id] = session;
  }
  if (autostart) session->start();
  return session;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<Session>> SessionManager::list() const {
  std::lock_guard lock(mutex_);
  std::vector<std::shared_ptr<Session>> out;
  for (const auto& [id, s] : sessions_) out.push_back(s);
  return out;
}

bool SessionManager::remove(const std::string& id) {
  std::shared_ptr<Session> session;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return false;
    session = it->second;
    sessions_.erase(it);
  }
  session->stop();
  return true;
}

void SessionManager::stop_all() {
  std::map<std::string, std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    all.swap(sessions_);
  }
  for (auto& [id, s] : all) s->stop();
  for (auto& [id, s] : all) s->wait();
}

}  // namespace vigil::gcs

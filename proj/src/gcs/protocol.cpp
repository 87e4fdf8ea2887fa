#include "vigil/gcs/protocol.hpp"

#include <cmath>

#include "vigil/json_codec.hpp"
#include "vigil/vigilance.hpp"

namespace vigil::gcs {

using codec::JsonFieldError;

namespace {

constexpr TelemetryKind kTelemetryKinds[] = {TelemetryKind::sample, TelemetryKind::alert,
                                             TelemetryKind::state, TelemetryKind::latency,
                                             TelemetryKind::mission_end};

constexpr CommandKind kCommandKinds[] = {CommandKind::set_threshold, CommandKind::pause,
                                         CommandKind::retreat,       CommandKind::resume,
                                         CommandKind::start_replay,  CommandKind::set_speed,
                                         CommandKind::stop};

void check_version(const json& j) {
  const auto it = j.find("v");
  if (it == j.end() || !it->is_number_integer()) throw JsonFieldError("v", "missing protocol version");
  if (it->get<int>() != kProtocolVersion) throw JsonFieldError("v", "unsupported protocol version");
}

}  // namespace

std::string_view to_string(TelemetryKind kind) {
  switch (kind) {
    case TelemetryKind::sample: return "SAMPLE";
    case TelemetryKind::alert: return "ALERT";
    case TelemetryKind::state: return "STATE";
    case TelemetryKind::latency: return "LATENCY";
    case TelemetryKind::mission_end: return "MISSION_END";
  }
  return "STATE";
}

std::optional<TelemetryKind> parse_telemetry_kind(std::string_view text) {
  for (auto k : kTelemetryKinds) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

json to_json(const TelemetryMessage& msg) {
  json j = {{"v", kProtocolVersion},
            {"session", msg.session},
            {"seq", msg.seq},
            {"kind", to_string(msg.kind)},
            {"payload", msg.payload}};
  if (msg.snapshot) j["snapshot"] = true;
  return j;
}

TelemetryMessage telemetry_from_json(const json& j) {
  if (!j.is_object()) throw JsonFieldError("message", "expected an object");
  check_version(j);
  TelemetryMessage m;
  m.session = codec::get_string(j, "session");
  m.seq = codec::get_uint(j, "seq");
  const auto kind = parse_telemetry_kind(codec::get_string(j, "kind"));
  if (!kind) throw JsonFieldError("kind", "unknown telemetry kind");
  m.kind = *kind;
  m.payload = codec::require(j, "payload");
  if (auto it = j.find("snapshot"); it != j.end()) m.snapshot = it->get<bool>();
  return m;
}

json gap_notice(const std::string& session, Seq from_seq, Seq to_seq) {
  return {{"v", kProtocolVersion},
          {"session", session},
          {"kind", "GAP"},
          {"from_seq", from_seq},
          {"to_seq", to_seq}};
}

std::string_view to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::set_threshold: return "SET_THRESHOLD";
    case CommandKind::pause: return "PAUSE";
    case CommandKind::retreat: return "RETREAT";
    case CommandKind::resume: return "RESUME";
    case CommandKind::start_replay: return "START_REPLAY";
    case CommandKind::set_speed: return "SET_SPEED";
    case CommandKind::stop: return "STOP";
  }
  return "STOP";
}

std::optional<CommandKind> parse_command_kind(std::string_view text) {
  for (auto k : kCommandKinds) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string_view to_string(RejectCode code) {
  switch (code) {
    case RejectCode::malformed: return "MALFORMED";
    case RejectCode::unsupported_version: return "UNSUPPORTED_VERSION";
    case RejectCode::unknown_command: return "UNKNOWN_COMMAND";
    case RejectCode::out_of_range: return "OUT_OF_RANGE";
    case RejectCode::invalid_state: return "INVALID_STATE";
    case RejectCode::session_ended: return "SESSION_ENDED";
  }
  return "MALFORMED";
}

OperatorCommand parse_command(const json& j) {
  if (!j.is_object()) throw CommandRejected(RejectCode::malformed, "command must be a JSON object");
  OperatorCommand cmd;
  if (auto it = j.find("id"); it != j.end()) {
    if (!it->is_string()) throw CommandRejected(RejectCode::malformed, "id must be a string");
    cmd.id = it->get<std::string>();
  }
  const auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer()) {
    throw CommandRejected(RejectCode::malformed, "missing protocol version", cmd.id);
  }
  if (v->get<int>() != kProtocolVersion) {
    throw CommandRejected(RejectCode::unsupported_version, "unsupported protocol version", cmd.id);
  }
  const auto k = j.find("kind");
  if (k == j.end() || !k->is_string()) throw CommandRejected(RejectCode::malformed, "missing kind", cmd.id);
  const auto kind = parse_command_kind(k->get<std::string>());
  if (!kind) throw CommandRejected(RejectCode::unknown_command, "unknown command " + k->dump(), cmd.id);
  cmd.kind = *kind;

  static const json empty = json::object();
  const json* args = &empty;
  if (auto a = j.find("args"); a != j.end() && !a->is_null()) {
    if (!a->is_object()) throw CommandRejected(RejectCode::malformed, "args must be an object", cmd.id);
    args = &*a;
  }
  auto number = [&](const char* field) -> double {
    const auto it = args->find(field);
    if (it == args->end() || !it->is_number()) {
      throw CommandRejected(RejectCode::malformed, std::string("args.") + field + " must be a number", cmd.id);
    }
    const double x = it->get<double>();
    if (!std::isfinite(x)) throw CommandRejected(RejectCode::malformed, std::string("args.") + field, cmd.id);
    return x;
  };

  switch (cmd.kind) {
    case CommandKind::set_threshold: {
      const double theta = number("theta_S");
      if (theta < kMinThetaS || theta > kMaxThetaS) {
        throw CommandRejected(RejectCode::out_of_range, "theta_S must lie in [0.1, 0.9]", cmd.id);
      }
      cmd.theta_s = theta;
      break;
    }
    case CommandKind::set_speed: {
      const double speed = number("speed");
      if (speed < kMinSpeed || speed > kMaxSpeed) {
        throw CommandRejected(RejectCode::out_of_range, "speed must lie in [0.1, 100]", cmd.id);
      }
      cmd.speed = speed;
      break;
    }
    case CommandKind::start_replay:
      if (args->contains("speed")) {
        const double speed = number("speed");
        if (speed < kMinSpeed || speed > kMaxSpeed) {
          throw CommandRejected(RejectCode::out_of_range, "speed must lie in [0.1, 100]", cmd.id);
        }
        cmd.speed = speed;
      }
      break;
    default: break;
  }
  return cmd;
}

OperatorCommand parse_command(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw CommandRejected(RejectCode::malformed, "command is not valid JSON");
  }
  return parse_command(j);
}

json to_json(const OperatorCommand& cmd) {
  json args = json::object();
  if (cmd.theta_s) args["theta_S"] = *cmd.theta_s;
  if (cmd.speed) args["speed"] = *cmd.speed;
  json j = {{"v", kProtocolVersion}, {"kind", to_string(cmd.kind)}, {"args", std::move(args)}};
  if (!cmd.id.empty()) j["id"] = cmd.id;
  return j;
}

json ack(const OperatorCommand& cmd, std::optional<Seq> applies_from_seq) {
  json j = {{"v", kProtocolVersion}, {"kind", "ACK"}, {"command", to_string(cmd.kind)}};
  j["id"] = cmd.id.empty() ? json(nullptr) : json(cmd.id);
  if (applies_from_seq) j["applies_from_seq"] = *applies_from_seq;
  return j;
}

json reject(const CommandRejected& error, std::optional<CommandKind> kind) {
  json j = {{"v", kProtocolVersion},
            {"kind", "REJECT"},
            {"error", {{"code", to_string(error.code())}, {"message", error.what()}}}};
  j["id"] = error.command_id().empty() ? json(nullptr) : json(error.command_id());
  j["command"] = kind ? json(to_string(*kind)) : json(nullptr);
  return j;
}

json sample_payload(const PipelineOutput& out, const VigilanceConfig& config) {
  json j = codec::to_json(out.sample);
  j["theta_S"] = config.theta_s;
  j["band"] = out.sample.score ? json(to_string(instantaneous_level(*out.sample.score, config)))
                               : json(to_string(AlertLevel::no_detections));
  j["alert_level"] = to_string(out.level);
  json individuals = json::array();
  for (const auto& ind : out.frame.individuals) individuals.push_back(codec::to_json(ind));
  j["individuals"] = std::move(individuals);
  if (out.backend_error) j["backend_error"] = *out.backend_error;
  return j;
}

json alert_payload(const AlertEvent& event, AlertLevel level) {
  json j = codec::to_json(event);
  j["alert_level"] = to_string(level);
  return j;
}

json latency_payload(const LatencyRecord& r) {
  return {{"frame_index", r.frame_index}, {"queue_ms", r.queue_ms},   {"detect_ms", r.detect_ms},
          {"behave_ms", r.behave_ms},     {"score_ms", r.score_ms},   {"alert_ms", r.alert_ms},
          {"total_ms", r.total_ms},       {"budget_ms", r.budget_ms}, {"met_slo", r.met_slo}};
}

}  // namespace vigil::gcs

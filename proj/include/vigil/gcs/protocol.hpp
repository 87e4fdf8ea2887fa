#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "vigil/pipeline.hpp"
#include "vigil/replay.hpp"

// Wire protocol between the ground-control service and dashboards. Every
// message is one JSON text frame; see docs/protocol.md.
namespace vigil::gcs {

using nlohmann::json;
using Seq = std::uint64_t;

inline constexpr int kProtocolVersion = 1;
inline constexpr double kMinSpeed = 0.1;
inline constexpr double kMaxSpeed = 100.0;

enum class TelemetryKind : std::uint8_t { sample, alert, state, latency, mission_end };

std::string_view to_string(TelemetryKind kind);
std::optional<TelemetryKind> parse_telemetry_kind(std::string_view text);

struct TelemetryMessage {
  std::string session;
  Seq seq = 0;
  TelemetryKind kind = TelemetryKind::state;
  json payload;
  /// STATE sent to one client on connect; carries the last published seq.
  bool snapshot = false;

  bool operator==(const TelemetryMessage&) const = default;
};

json to_json(const TelemetryMessage& msg);
/// Throws codec::JsonFieldError on a malformed message.
TelemetryMessage telemetry_from_json(const json& j);

/// Sent instead of the dropped range when a client falls behind. Not part of
/// the seq stream.
json gap_notice(const std::string& session, Seq from_seq, Seq to_seq);

enum class CommandKind : std::uint8_t {
  set_threshold,
  pause,
  retreat,
  resume,
  start_replay,
  set_speed,
  stop,
};

std::string_view to_string(CommandKind kind);
std::optional<CommandKind> parse_command_kind(std::string_view text);

struct OperatorCommand {
  std::string id;
  CommandKind kind = CommandKind::stop;
  std::optional<double> theta_s;
  std::optional<double> speed;

  bool operator==(const OperatorCommand&) const = default;
};

enum class RejectCode : std::uint8_t {
  malformed,
  unsupported_version,
  unknown_command,
  out_of_range,
  invalid_state,
  session_ended,
};

std::string_view to_string(RejectCode code);

class CommandRejected : public std::runtime_error {
 public:
  CommandRejected(RejectCode code, const std::string& message, std::string command_id = {})
      : std::runtime_error(message), code_(code), command_id_(std::move(command_id)) {}
  RejectCode code() const { return code_; }
  const std::string& command_id() const { return command_id_; }

 private:
  RejectCode code_;
  std::string command_id_;
};

/// Validates shape and ranges. Throws CommandRejected.
OperatorCommand parse_command(const json& j);
OperatorCommand parse_command(std::string_view text);
json to_json(const OperatorCommand& cmd);

/// `applies_from_seq` is the seq of the first SAMPLE scored under a new
/// threshold; absent for other commands.
json ack(const OperatorCommand& cmd, std::optional<Seq> applies_from_seq = std::nullopt);
json reject(const CommandRejected& error, std::optional<CommandKind> kind = std::nullopt);

json sample_payload(const PipelineOutput& out, const VigilanceConfig& config);
json alert_payload(const AlertEvent& event, AlertLevel level);
json latency_payload(const LatencyRecord& record);

}  // namespace vigil::gcs

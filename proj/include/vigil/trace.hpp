#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vigil/types.hpp"

namespace vigil {

enum class CollectionMode : std::uint8_t { hitl, hotl, synthetic };

std::string_view to_string(CollectionMode mode);
std::optional<CollectionMode> parse_collection_mode(std::string_view text);

/// Half-open [start_ms, end_ms) interval of mission time.
struct TimeSpan {
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;

  TimestampMs duration() const { return end_ms - start_ms; }
  bool contains(TimestampMs t) const { return t >= start_ms && t < end_ms; }
  bool operator==(const TimeSpan&) const = default;
};

struct MissionMetadata {
  std::string mission_id;
  std::string species;
  int herd_size = 1;
  double fps = 30.0;
  std::optional<double> altitude_m;
  CollectionMode collection_mode = CollectionMode::synthetic;
  std::optional<double> battery_pct;
  /// Intervals during which the drone was collecting behavioral data.
  std::vector<TimeSpan> sampling_phases;
  Extras extras;

  double frame_interval_ms() const { return 1000.0 / fps; }
  bool operator==(const MissionMetadata&) const = default;
};

enum class GroundTruthKind : std::uint8_t { flight_response, alert_vigilance };

std::string_view to_string(GroundTruthKind kind);
std::optional<GroundTruthKind> parse_ground_truth_kind(std::string_view text);

struct GroundTruthEvent {
  GroundTruthKind kind = GroundTruthKind::flight_response;
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;
  Extras extras;

  bool operator==(const GroundTruthEvent&) const = default;
};

struct MissionTrace {
  MissionMetadata metadata;
  std::vector<FrameObservation> frames;
  std::vector<GroundTruthEvent> events;
  /// Unrecognised members of the header line.
  Extras extras;

  bool operator==(const MissionTrace&) const = default;
};

/// Start of the earliest FLIGHT_RESPONSE event, if any.
std::optional<TimestampMs> first_flight_start(const std::vector<GroundTruthEvent>& events);

}  // namespace vigil

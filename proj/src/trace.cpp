#include "vigil/trace.hpp"

#include <algorithm>

namespace vigil {

std::string_view to_string(CollectionMode mode) {
  switch (mode) {
    case CollectionMode::hitl: return "HITL";
    case CollectionMode::hotl: return "HOTL";
    case CollectionMode::synthetic: return "SYNTHETIC";
  }
  return "SYNTHETIC";
}

std::optional<CollectionMode> parse_collection_mode(std::string_view text) {
  for (auto m : {CollectionMode::hitl, CollectionMode::hotl, CollectionMode::synthetic}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

std::string_view to_string(GroundTruthKind kind) {
  return kind == GroundTruthKind::flight_response ? "FLIGHT_RESPONSE" : "ALERT_VIGILANCE";
}

std::optional<GroundTruthKind> parse_ground_truth_kind(std::string_view text) {
  if (text == "FLIGHT_RESPONSE") return GroundTruthKind::flight_response;
  if (text == "ALERT_VIGILANCE") return GroundTruthKind::alert_vigilance;
  return std::nullopt;
}

std::optional<TimestampMs> first_flight_start(const std::vector<GroundTruthEvent>& events) {
  std::optional<TimestampMs> first;
  for (const auto& e : events) {
    if (e.kind != GroundTruthKind::flight_response) continue;
    if (!first || e.start_ms < *first) first = e.start_ms;
  }
  return first;
}

}  // namespace vigil

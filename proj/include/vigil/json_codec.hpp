#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "vigil/alerting.hpp"
#include "vigil/trace.hpp"
#include "vigil/types.hpp"

// JSON encodings shared by the trace format, replay results and the telemetry
// protocol. Decoders throw JsonFieldError naming the offending member.
namespace vigil::codec {

using nlohmann::json;

class JsonFieldError : public std::runtime_error {
 public:
  JsonFieldError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

json to_json(const IndividualObservation& ind);
json to_json(const FrameObservation& frame);
json to_json(const MissionMetadata& meta);
json to_json(const GroundTruthEvent& event);
json to_json(const VigilanceSample& sample);
json to_json(const AlertEvent& event);
json to_json(const VigilanceConfig& config);

IndividualObservation individual_from_json(const json& j);
FrameObservation frame_from_json(const json& j);
MissionMetadata metadata_from_json(const json& j);
GroundTruthEvent event_from_json(const json& j);
VigilanceSample sample_from_json(const json& j);
AlertEvent alert_event_from_json(const json& j);
/// Members absent from `j` keep the values already in `base`.
VigilanceConfig config_from_json(const json& j, VigilanceConfig base = {});

// Field accessors with typed errors; `field` is used in the error message.
const json& require(const json& obj, const char* field);
double get_number(const json& obj, const char* field);
std::int64_t get_int(const json& obj, const char* field);
std::uint64_t get_uint(const json& obj, const char* field);
std::string get_string(const json& obj, const char* field);
bool get_bool(const json& obj, const char* field);

}  // namespace vigil::codec

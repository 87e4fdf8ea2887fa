#include "vigil/json_codec.hpp"

#include <cmath>
#include <initializer_list>
#include <string_view>

namespace vigil::codec {

namespace {

Extras collect_extras(const json& obj, std::initializer_list<std::string_view> known) {
  Extras extras;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool is_known = false;
    for (auto k : known) {
      if (it.key() == k) {
        is_known = true;
        break;
      }
    }
    if (!is_known) extras[it.key()] = it.value();
  }
  return extras;
}

void append_extras(json& obj, const Extras& extras) {
  if (!extras.is_object()) return;
  for (auto it = extras.begin(); it != extras.end(); ++it) {
    if (!obj.contains(it.key())) obj[it.key()] = it.value();
  }
}

void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw JsonFieldError(what, "expected a JSON object");
}

std::optional<double> get_optional_number(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw JsonFieldError(field, "expected a number");
  return it->get<double>();
}

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

const json& require(const json& obj, const char* field) {
  require_object(obj, field);
  auto it = obj.find(field);
  if (it == obj.end()) throw JsonFieldError(field, "missing required member");
  return *it;
}

double get_number(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_number()) throw JsonFieldError(field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw JsonFieldError(field, "expected a finite number");
  return d;
}

std::int64_t get_int(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) {
      throw JsonFieldError(field, "integer out of range");
    }
    return static_cast<std::int64_t>(u);
  }
  if (!v.is_number_integer()) throw JsonFieldError(field, "expected an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_uint(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_number_unsigned()) {
    throw JsonFieldError(field, "expected a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_string()) throw JsonFieldError(field, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_boolean()) throw JsonFieldError(field, "expected a boolean");
  return v.get<bool>();
}

json to_json(const IndividualObservation& ind) {
  json j = {
      {"id", ind.individual_id},
      {"bbox", {ind.bbox.x, ind.bbox.y, ind.bbox.w, ind.bbox.h}},
      {"p", ind.detection_confidence},
      {"behavior", to_string(ind.behavior)},
      {"q", ind.behavior_confidence},
  };
  append_extras(j, ind.extras);
  return j;
}

IndividualObservation individual_from_json(const json& j) {
  require_object(j, "individuals[]");
  IndividualObservation ind;
  ind.individual_id = get_string(j, "id");
  const auto& box = require(j, "bbox");
  if (!box.is_array() || box.size() != 4) {
    throw JsonFieldError("bbox", "expected [x, y, w, h]");
  }
  for (const auto& v : box) {
    if (!v.is_number()) throw JsonFieldError("bbox", "expected numeric coordinates");
  }
  ind.bbox = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
              box[3].get<double>()};
  ind.detection_confidence = get_number(j, "p");
  const auto label = parse_behavior(get_string(j, "behavior"));
  if (!label) throw JsonFieldError("behavior", "unknown behavior label");
  ind.behavior = *label;
  ind.behavior_confidence = get_number(j, "q");
  ind.extras = collect_extras(j, {"id", "bbox", "p", "behavior", "q"});
  return ind;
}

json to_json(const FrameObservation& frame) {
  json inds = json::array();
  for (const auto& ind : frame.individuals) inds.push_back(to_json(ind));
  json j = {
      {"frame_index", frame.frame_index},
      {"timestamp_ms", frame.timestamp_ms},
      {"individuals", std::move(inds)},
  };
  append_extras(j, frame.extras);
  return j;
}

FrameObservation frame_from_json(const json& j) {
  require_object(j, "frame");
  FrameObservation frame;
  frame.frame_index = get_uint(j, "frame_index");
  frame.timestamp_ms = get_int(j, "timestamp_ms");
  const auto& inds = require(j, "individuals");
  if (!inds.is_array()) throw JsonFieldError("individuals", "expected an array");
  frame.individuals.reserve(inds.size());
  for (const auto& ind : inds) frame.individuals.push_back(individual_from_json(ind));
  frame.extras = collect_extras(j, {"frame_index", "timestamp_ms", "individuals"});
  return frame;
}

json to_json(const MissionMetadata& meta) {
  json phases = json::array();
  for (const auto& p : meta.sampling_phases) phases.push_back({p.start_ms, p.end_ms});
  json j = {
      {"mission_id", meta.mission_id},
      {"species", meta.species},
      {"herd_size", meta.herd_size},
      {"fps", meta.fps},
      {"collection_mode", to_string(meta.collection_mode)},
      {"sampling_phases", std::move(phases)},
  };
  if (meta.altitude_m) j["altitude_m"] = *meta.altitude_m;
  if (meta.battery_pct) j["battery_pct"] = *meta.battery_pct;
  append_extras(j, meta.extras);
  return j;
}

MissionMetadata metadata_from_json(const json& j) {
  require_object(j, "metadata");
  MissionMetadata meta;
  meta.mission_id = get_string(j, "mission_id");
  meta.species = get_string(j, "species");
  const auto herd = get_int(j, "herd_size");
  if (herd < 0 || herd > INT32_MAX) throw JsonFieldError("herd_size", "out of range");
  meta.herd_size = static_cast<int>(herd);
  meta.fps = get_number(j, "fps");
  const auto mode = parse_collection_mode(get_string(j, "collection_mode"));
  if (!mode) throw JsonFieldError("collection_mode", "expected HITL, HOTL or SYNTHETIC");
  meta.collection_mode = *mode;
  meta.altitude_m = get_optional_number(j, "altitude_m");
  meta.battery_pct = get_optional_number(j, "battery_pct");
  if (auto it = j.find("sampling_phases"); it != j.end()) {
    if (!it->is_array()) throw JsonFieldError("sampling_phases", "expected an array");
    for (const auto& p : *it) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() ||
          !p[1].is_number_integer()) {
        throw JsonFieldError("sampling_phases", "expected [start_ms, end_ms] pairs");
      }
      meta.sampling_phases.push_back({p[0].get<TimestampMs>(), p[1].get<TimestampMs>()});
    }
  }
  meta.extras = collect_extras(j, {"mission_id", "species", "herd_size", "fps",
                                   "collection_mode", "altitude_m", "battery_pct",
                                   "sampling_phases"});
  return meta;
}

json to_json(const GroundTruthEvent& event) {
  json j = {
      {"kind", to_string(event.kind)},
      {"start_ms", event.start_ms},
      {"end_ms", event.end_ms},
  };
  append_extras(j, event.extras);
  return j;
}

GroundTruthEvent event_from_json(const json& j) {
  require_object(j, "events[]");
  GroundTruthEvent e;
  const auto kind = parse_ground_truth_kind(get_string(j, "kind"));
  if (!kind) throw JsonFieldError("kind", "expected FLIGHT_RESPONSE or ALERT_VIGILANCE");
  e.kind = *kind;
  e.start_ms = get_int(j, "start_ms");
  e.end_ms = get_int(j, "end_ms");
  e.extras = collect_extras(j, {"kind", "start_ms", "end_ms"});
  return e;
}

json to_json(const VigilanceSample& s) {
  json j = {
      {"frame_index", s.frame_index},
      {"timestamp_ms", s.timestamp_ms},
      {"score", optional_number(s.score)},
      {"n_included", s.n_included},
      {"n_adverse", s.n_adverse},
      {"n_detected_raw", s.n_detected_raw},
      {"centroid", s.centroid ? json{s.centroid->x, s.centroid->y} : json(nullptr)},
      {"degraded", s.degraded()},
      {"degrade_reason", to_string(s.degrade)},
      {"mean_behavior_confidence", optional_number(s.mean_behavior_confidence)},
  };
  return j;
}

VigilanceSample sample_from_json(const json& j) {
  require_object(j, "sample");
  VigilanceSample s;
  s.frame_index = get_uint(j, "frame_index");
  s.timestamp_ms = get_int(j, "timestamp_ms");
  s.score = get_optional_number(j, "score");
  s.n_included = static_cast<std::uint32_t>(get_uint(j, "n_included"));
  s.n_adverse = static_cast<std::uint32_t>(get_uint(j, "n_adverse"));
  s.n_detected_raw = static_cast<std::uint32_t>(get_uint(j, "n_detected_raw"));
  if (auto it = j.find("centroid"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 2) throw JsonFieldError("centroid", "expected [x, y]");
    s.centroid = Point2{(*it)[0].get<double>(), (*it)[1].get<double>()};
  }
  const auto reason = get_string(j, "degrade_reason");
  for (auto r : {DegradeReason::none, DegradeReason::no_detections,
                 DegradeReason::low_confidence, DegradeReason::backend_failure}) {
    if (to_string(r) == reason) s.degrade = r;
  }
  s.mean_behavior_confidence = get_optional_number(j, "mean_behavior_confidence");
  return s;
}

json to_json(const AlertEvent& e) {
  return {
      {"kind", to_string(e.kind)},
      {"frame_index", e.frame_index},
      {"timestamp_ms", e.timestamp_ms},
      {"score", optional_number(e.score)},
      {"audio", e.audio},
      {"flashing", e.flashing},
  };
}

AlertEvent alert_event_from_json(const json& j) {
  require_object(j, "alert");
  AlertEvent e;
  const auto kind = parse_alert_event_kind(get_string(j, "kind"));
  if (!kind) throw JsonFieldError("kind", "unknown alert event kind");
  e.kind = *kind;
  e.frame_index = get_uint(j, "frame_index");
  e.timestamp_ms = get_int(j, "timestamp_ms");
  e.score = get_optional_number(j, "score");
  e.audio = get_bool(j, "audio");
  e.flashing = get_bool(j, "flashing");
  return e;
}

json to_json(const VigilanceConfig& c) {
  json weights = json::object();
  for (auto label : kAllBehaviors) weights[std::string(to_string(label))] = c.weights[label];
  json j = {
      {"theta_S", c.theta_s},
      {"theta_c", c.theta_c},
      {"weights", std::move(weights)},
      {"debounce_frames", c.debounce_frames},
      {"yellow_factor", c.yellow_factor},
      {"escalation_persist_ms", c.escalation_persist_ms},
  };
  if (c.theta_q) j["theta_q"] = *c.theta_q;
  return j;
}

VigilanceConfig config_from_json(const json& j, VigilanceConfig c) {
  require_object(j, "config");
  if (j.contains("theta_S")) c.theta_s = get_number(j, "theta_S");
  if (j.contains("theta_c")) c.theta_c = get_number(j, "theta_c");
  if (j.contains("theta_q")) c.theta_q = get_number(j, "theta_q");
  if (j.contains("debounce_frames")) {
    c.debounce_frames = static_cast<int>(get_int(j, "debounce_frames"));
  }
  if (j.contains("yellow_factor")) c.yellow_factor = get_number(j, "yellow_factor");
  if (j.contains("escalation_persist_ms")) {
    c.escalation_persist_ms = get_int(j, "escalation_persist_ms");
  }
  if (auto it = j.find("weights"); it != j.end()) {
    require_object(*it, "weights");
    for (auto w = it->begin(); w != it->end(); ++w) {
      const auto label = parse_behavior(w.key());
      if (!label) throw JsonFieldError("weights", "unknown behavior " + w.key());
      if (!w->is_number()) throw JsonFieldError("weights", "expected numeric weight");
      try {
        c.weights.set(*label, w->get<double>());
      } catch (const std::invalid_argument& ex) {
        throw JsonFieldError("weights", ex.what());
      }
    }
  }
  return c;
}

}  // namespace vigil::codec

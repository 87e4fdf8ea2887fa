#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vigil/trace.hpp"

namespace vigil {

enum class Visibility : std::uint8_t {
  visible,   // herd in frame, confident detections
  occluded,  // herd in frame, every detection below the confidence cut-off
  absent,    // no animals in frame
};

std::string_view to_string(Visibility v);
std::optional<Visibility> parse_visibility(std::string_view text);

/// One contiguous stretch of a synthetic mission.
struct PhaseSpec {
  std::string label;
  TimestampMs duration_ms = 0;
  /// Share of the herd showing `active_behavior`; the rest show
  /// `background_behavior`. Rounded to whole animals per frame.
  double vigilant_fraction = 0.0;
  /// Per-animal, per-frame probability of swapping between the two behaviors.
  double noise = 0.0;
  BehaviorLabel active_behavior = BehaviorLabel::head_up;
  BehaviorLabel background_behavior = BehaviorLabel::grazing;
  Visibility visibility = Visibility::visible;
  bool sampling = true;
  /// Ground-truth annotation covering the whole phase.
  std::optional<GroundTruthKind> event;
};

struct SyntheticParams {
  std::string mission_id = "synthetic";
  std::string species = "plains zebra";
  int herd_size = 4;
  double fps = 30.0;
  std::uint64_t seed = 0;
  CollectionMode collection_mode = CollectionMode::synthetic;
  std::optional<double> altitude_m = 20.0;
  std::optional<double> battery_pct = 100.0;
  std::vector<PhaseSpec> phases;
};

/// Deterministic mission built from the phase list. Throws
/// std::invalid_argument for out-of-range parameters.
MissionTrace generate_synthetic_trace(const SyntheticParams& params);

/// First frame index of each phase plus the end index, at the given fps.
std::vector<FrameIndex> phase_frame_boundaries(const SyntheticParams& params);

/// Timestamp assigned to frame `index` by the generator.
TimestampMs synthetic_timestamp(FrameIndex index, double fps);

/// Phase-file codec (`*.phases.json`). Unknown members such as free-text
/// derivations are ignored.
SyntheticParams synthetic_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticParams& params);

/// Compact phase grammar used on the command line:
///   duration_ms:fraction[:flag...]
/// flags: a behavior name (sets the active behavior), `flight`, `alert`,
/// `nosample`, `absent`, `occluded`, `noise=<p>`, `bg=<behavior>`.
PhaseSpec parse_phase_spec(std::string_view text);

}  // namespace vigil

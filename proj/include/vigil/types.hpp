#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace vigil {

using FrameIndex = std::uint64_t;
using TimestampMs = std::int64_t;

// Unrecognised JSON members carried through parse/write so newer files survive
// a round trip through older tools. Always null or an object.
using Extras = nlohmann::json;

enum class BehaviorLabel : std::uint8_t {
  head_up,
  grazing,
  walking,
  running,
  standing,
  other,
  unknown,
};

inline constexpr std::size_t kBehaviorCount = 7;

inline constexpr std::array<BehaviorLabel, kBehaviorCount> kAllBehaviors = {
    BehaviorLabel::head_up, BehaviorLabel::grazing, BehaviorLabel::walking,
    BehaviorLabel::running, BehaviorLabel::standing, BehaviorLabel::other,
    BehaviorLabel::unknown};

std::string_view to_string(BehaviorLabel label);
std::optional<BehaviorLabel> parse_behavior(std::string_view text);

/// Normalized rectangle; all fields are fractions of the frame.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_x() const { return x + w / 2.0; }
  double center_y() const { return y + h / 2.0; }
  bool inside_unit_square() const;

  bool operator==(const BoundingBox&) const = default;
};

struct IndividualObservation {
  std::string individual_id;
  BoundingBox bbox;
  double detection_confidence = 0.0;  // p_i
  BehaviorLabel behavior = BehaviorLabel::unknown;
  double behavior_confidence = 0.0;  // q_i
  Extras extras;

  bool operator==(const IndividualObservation&) const = default;
};

struct FrameObservation {
  FrameIndex frame_index = 0;
  TimestampMs timestamp_ms = 0;
  std::vector<IndividualObservation> individuals;
  Extras extras;

  bool operator==(const FrameObservation&) const = default;
};

/// Per-behavior weights used by the group score. Indexed by BehaviorLabel.
class BehaviorWeights {
 public:
  /// head_up = 1, everything else 0.
  BehaviorWeights();

  static BehaviorWeights zeros();

  double operator[](BehaviorLabel label) const {
    return weights_[static_cast<std::size_t>(label)];
  }
  /// Throws std::invalid_argument for weights outside [0,1] or a non-zero
  /// weight on `unknown`.
  void set(BehaviorLabel label, double weight);
  double max() const;

  bool operator==(const BehaviorWeights&) const = default;

 private:
  std::array<double, kBehaviorCount> weights_{};
};

struct VigilanceConfig {
  double theta_s = 0.3;
  double theta_c = 0.5;
  /// Separate behavior-confidence cut-off; falls back to theta_c when unset.
  std::optional<double> theta_q;
  BehaviorWeights weights;
  int debounce_frames = 3;
  double yellow_factor = 0.5;
  TimestampMs escalation_persist_ms = 10000;

  double behavior_threshold() const { return theta_q.value_or(theta_c); }

  bool operator==(const VigilanceConfig&) const = default;
};

inline constexpr double kMinThetaS = 0.1;
inline constexpr double kMaxThetaS = 0.9;

/// Throws std::invalid_argument naming the first violated bound.
void validate(const VigilanceConfig& config);

enum class DegradeReason : std::uint8_t {
  none,
  no_detections,    // nothing detected at all
  low_confidence,   // detections exist but none pass both confidence filters
  backend_failure,  // inference backend raised an error for this frame
};

std::string_view to_string(DegradeReason reason);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct VigilanceSample {
  FrameIndex frame_index = 0;
  TimestampMs timestamp_ms = 0;
  /// Absent on degraded frames. Never substitute zero for a missing score.
  std::optional<double> score;
  std::uint32_t n_included = 0;
  std::uint32_t n_adverse = 0;
  std::uint32_t n_detected_raw = 0;
  std::optional<Point2> centroid;
  DegradeReason degrade = DegradeReason::none;
  /// Mean behavior confidence over included individuals.
  std::optional<double> mean_behavior_confidence;

  bool degraded() const { return degrade != DegradeReason::none; }
  bool exceeds(double theta_s) const { return score && *score > theta_s; }

  bool operator==(const VigilanceSample&) const = default;
};

enum class AlertLevel : std::uint8_t {
  green,
  yellow,
  red,
  red_escalated,
  no_detections,
};

std::string_view to_string(AlertLevel level);
std::optional<AlertLevel> parse_alert_level(std::string_view text);

inline bool is_red(AlertLevel level) {
  return level == AlertLevel::red || level == AlertLevel::red_escalated;
}

}  // namespace vigil

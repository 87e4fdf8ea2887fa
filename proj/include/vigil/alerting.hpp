#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "vigil/types.hpp"

namespace vigil {

enum class AlertEventKind : std::uint8_t {
  enter_green,
  enter_yellow,
  enter_red,
  escalate,
  no_detections,
  model_degraded,
};

std::string_view to_string(AlertEventKind kind);
std::optional<AlertEventKind> parse_alert_event_kind(std::string_view text);

struct AlertEvent {
  AlertEventKind kind = AlertEventKind::enter_green;
  FrameIndex frame_index = 0;
  TimestampMs timestamp_ms = 0;
  std::optional<double> score;
  bool audio = false;     // single chime, ENTER_RED only
  bool flashing = false;  // persistent-red prompt, ESCALATE only

  bool operator==(const AlertEvent&) const = default;
};

struct AlertState {
  /// Displayed alert level. NO_DETECTIONS while the model is degraded.
  AlertLevel level = AlertLevel::green;
  /// Level in force before the current degraded run; equals `level` otherwise.
  AlertLevel held_level = AlertLevel::green;
  int consecutive_red_frames = 0;
  std::optional<TimestampMs> red_entered_at_ms;
  std::optional<VigilanceSample> last_sample;

  bool operator==(const AlertState&) const = default;
};

class AlertOrderingError : public std::runtime_error {
 public:
  AlertOrderingError(TimestampMs previous, TimestampMs offending)
      : std::runtime_error("sample timestamp " + std::to_string(offending) +
                           " ms precedes previous sample at " +
                           std::to_string(previous) + " ms"),
        previous_ms(previous),
        offending_ms(offending) {}

  TimestampMs previous_ms;
  TimestampMs offending_ms;
};

/// Initial state: GREEN with all counters cleared.
AlertState reset_alert();

/// Advances the graduated alert machine by one sample.
///
/// RED is entered only after `debounce_frames` consecutive samples with a score
/// strictly above theta_s; until then an above-threshold frame is shown as
/// YELLOW. Leaving RED happens on the first sample at or below theta_s. RED
/// escalates once it has been held longer than `escalation_persist_ms` of
/// sample time. Degraded samples freeze the red streak and report
/// NO_DETECTIONS / MODEL_DEGRADED once per degraded run.
///
/// Throws AlertOrderingError when the sample is older than the previous one.
std::pair<AlertState, std::optional<AlertEvent>> step_alert(const AlertState& state,
                                                            const VigilanceSample& sample,
                                                            const VigilanceConfig& config);

/// Convenience wrapper that owns its state.
class AlertMachine {
 public:
  AlertMachine() = default;

  std::optional<AlertEvent> step(const VigilanceSample& sample,
                                 const VigilanceConfig& config) {
    auto [next, event] = step_alert(state_, sample, config);
    state_ = std::move(next);
    return event;
  }
  void reset() { state_ = reset_alert(); }
  const AlertState& state() const { return state_; }

 private:
  AlertState state_ = reset_alert();
};

}  // namespace vigil

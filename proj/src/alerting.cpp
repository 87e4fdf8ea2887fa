#include "vigil/alerting.hpp"

#include "vigil/vigilance.hpp"

namespace vigil {

namespace {

AlertEvent make_event(AlertEventKind kind, const VigilanceSample& sample) {
  AlertEvent e;
  e.kind = kind;
  e.frame_index = sample.frame_index;
  e.timestamp_ms = sample.timestamp_ms;
  e.score = sample.score;
  e.audio = kind == AlertEventKind::enter_red;
  e.flashing = kind == AlertEventKind::escalate;
  return e;
}

AlertEventKind degraded_event_kind(DegradeReason reason) {
  return reason == DegradeReason::no_detections ? AlertEventKind::no_detections
                                                : AlertEventKind::model_degraded;
}

}  // namespace

std::string_view to_string(AlertEventKind kind) {
  switch (kind) {
    case AlertEventKind::enter_green: return "ENTER_GREEN";
    case AlertEventKind::enter_yellow: return "ENTER_YELLOW";
    case AlertEventKind::enter_red: return "ENTER_RED";
    case AlertEventKind::escalate: return "ESCALATE";
    case AlertEventKind::no_detections: return "NO_DETECTIONS";
    case AlertEventKind::model_degraded: return "MODEL_DEGRADED";
  }
  return "ENTER_GREEN";
}

std::optional<AlertEventKind> parse_alert_event_kind(std::string_view text) {
  for (auto k : {AlertEventKind::enter_green, AlertEventKind::enter_yellow,
                 AlertEventKind::enter_red, AlertEventKind::escalate,
                 AlertEventKind::no_detections, AlertEventKind::model_degraded}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

AlertState reset_alert() { return AlertState{}; }

std::pair<AlertState, std::optional<AlertEvent>> step_alert(const AlertState& state,
                                                            const VigilanceSample& sample,
                                                            const VigilanceConfig& config) {
  if (state.last_sample && sample.timestamp_ms < state.last_sample->timestamp_ms) {
    throw AlertOrderingError(state.last_sample->timestamp_ms, sample.timestamp_ms);
  }

  AlertState next = state;
  next.last_sample = sample;
  std::optional<AlertEvent> event;

  if (sample.degraded()) {
    const auto kind = degraded_event_kind(sample.degrade);
    const bool already_reported =
        state.level == AlertLevel::no_detections && state.last_sample &&
        state.last_sample->degraded() &&
        degraded_event_kind(state.last_sample->degrade) == kind;
    next.level = AlertLevel::no_detections;
    if (!already_reported) event = make_event(kind, sample);
    return {std::move(next), event};
  }

  const double score = *sample.score;
  const bool was_degraded = state.level == AlertLevel::no_detections;
  const AlertLevel previous = was_degraded ? state.held_level : state.level;

  next.consecutive_red_frames = score > config.theta_s ? state.consecutive_red_frames + 1 : 0;

  AlertLevel target;
  if (next.consecutive_red_frames >= config.debounce_frames) {
    if (is_red(previous)) {
      target = previous;
      const auto held_for = sample.timestamp_ms - *next.red_entered_at_ms;
      if (previous == AlertLevel::red && held_for > config.escalation_persist_ms) {
        target = AlertLevel::red_escalated;
        event = make_event(AlertEventKind::escalate, sample);
      }
    } else {
      target = AlertLevel::red;
      next.red_entered_at_ms = sample.timestamp_ms;
      event = make_event(AlertEventKind::enter_red, sample);
    }
  } else {
    // The display colour may already be red here (score == theta_s, or the
    // streak is still inside the debounce window); the alert stays yellow
    // until the debounce condition holds.
    target = instantaneous_level(score, config) == AlertLevel::green ? AlertLevel::green
                                                                     : AlertLevel::yellow;
    next.red_entered_at_ms.reset();
    if (target != previous || was_degraded) {
      event = make_event(target == AlertLevel::green ? AlertEventKind::enter_green
                                                     : AlertEventKind::enter_yellow,
                         sample);
    }
  }

  next.level = target;
  next.held_level = target;
  return {std::move(next), event};
}

}  // namespace vigil

#pragma once

#include <chrono>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"
#include "vigil/alerting.hpp"
#include "vigil/trace.hpp"
#include "vigil/types.hpp"

namespace vigil {

enum class DroneState : std::uint8_t { tracking, pause, retreat, holding };

std::string_view to_string(DroneState state);
std::optional<DroneState> parse_drone_state(std::string_view text);

/// Counterfactual operator response to a red alert.
///
/// Engagement happens `response_latency_ms` after the alert machine first shows
/// red in an adverse run. Animals are assumed to settle below threshold
/// `deescalation_delay_ms` after engagement. The drone holds its pause/retreat
/// for `intervention_duration_ms` and releases once `resume_calm_frames`
/// consecutive sub-threshold samples follow.
struct InterventionModel {
  /// tau_h. Infinity disables engagement entirely.
  double response_latency_ms = 0.0;
  TimestampMs intervention_duration_ms = 5000;
  TimestampMs deescalation_delay_ms = 1000;
  int resume_calm_frames = 5;
  DroneState action = DroneState::pause;

  /// A human operator reacting within five seconds of the chime.
  static InterventionModel operator_profile();
  static InterventionModel never();

  bool operator==(const InterventionModel&) const = default;
};

/// Throws std::invalid_argument for negative durations or a non-positive
/// resume count.
void validate(const InterventionModel& model);

struct Intervention {
  TimestampMs engage_ms = 0;
  TimestampMs release_ms = 0;
  /// False when the mission ended before the resume condition held.
  bool released = true;

  bool operator==(const Intervention&) const = default;
};

struct DroneStateSpan {
  DroneState state = DroneState::tracking;
  TimestampMs start_ms = 0;
  TimestampMs end_ms = 0;

  bool operator==(const DroneStateSpan&) const = default;
};

/// Real-time multiplier, or unpaced ("as fast as possible").
class ReplaySpeed {
 public:
  static ReplaySpeed realtime(double multiplier);
  static ReplaySpeed afap() { return ReplaySpeed(0.0); }

  bool unpaced() const { return multiplier_ == 0.0; }
  double multiplier() const { return multiplier_; }

 private:
  explicit ReplaySpeed(double m) : multiplier_(m) {}
  double multiplier_;
};

/// Paces replay against mission timestamps: mission time t is due at
/// anchor + (t - t0) / speed of wall time.
class ReplayClock {
 public:
  using clock = std::chrono::steady_clock;

  explicit ReplayClock(ReplaySpeed speed) : speed_(speed) {}

  /// Anchors mission time `t` to the current instant.
  void start(TimestampMs mission_time);
  /// Blocks until mission time `t` is due. Returns immediately when unpaced.
  void wait_until(TimestampMs mission_time) const;
  clock::time_point due(TimestampMs mission_time) const;
  /// Changes the multiplier without jumping: `mission_time` stays due now.
  void set_speed(ReplaySpeed speed, TimestampMs mission_time);
  ReplaySpeed speed() const { return speed_; }

 private:
  ReplaySpeed speed_;
  clock::time_point anchor_wall_{};
  TimestampMs anchor_mission_ = 0;
};

/// Frame-by-frame scorer over a trace. Threshold changes apply from the next
/// step onwards.
class ReplayEngine {
 public:
  struct Step {
    const FrameObservation* frame = nullptr;
    VigilanceSample sample;
    std::optional<AlertEvent> event;
    AlertLevel level = AlertLevel::green;
  };

  ReplayEngine(std::shared_ptr<const MissionTrace> trace, VigilanceConfig config);

  bool finished() const { return position_ >= trace_->frames.size(); }
  std::size_t position() const { return position_; }
  /// Timestamp of the frame the next step() will score.
  std::optional<TimestampMs> next_timestamp() const;
  Step step();

  /// Throws std::invalid_argument outside [0.1, 0.9].
  void set_threshold(double theta_s);
  const VigilanceConfig& config() const { return config_; }
  const AlertState& alert_state() const { return alerts_.state(); }
  const MissionTrace& trace() const { return *trace_; }

 private:
  std::shared_ptr<const MissionTrace> trace_;
  VigilanceConfig config_;
  AlertMachine alerts_;
  std::size_t position_ = 0;
};

struct InterventionOutcome {
  std::vector<Intervention> interventions;
  std::vector<bool> intervened;
  std::vector<bool> counterfactual_adverse;
  std::vector<DroneStateSpan> drone_timeline;
  double counterfactual_adverse_ms = 0.0;
};

/// Counterfactual accounting over a scored timeline. Each adverse run (maximal
/// stretch of consecutive scores above theta_s) contributes
/// min(run length, time from run start to first red + tau_h + d).
InterventionOutcome simulate_intervention(const std::vector<VigilanceSample>& samples,
                                          const std::vector<AlertLevel>& alert_levels,
                                          double theta_s, const InterventionModel& model,
                                          double nominal_interval_ms);

struct ReplayResult {
  MissionMetadata metadata;
  std::vector<GroundTruthEvent> events;
  VigilanceConfig config;
  std::optional<InterventionModel> intervention;

  std::vector<VigilanceSample> samples;
  /// Alert level after each sample.
  std::vector<AlertLevel> alert_levels;
  std::vector<AlertEvent> alert_events;

  std::vector<Intervention> interventions;
  std::vector<bool> intervened;
  std::vector<bool> counterfactual_adverse;
  std::vector<DroneStateSpan> drone_timeline;

  double raw_adverse_ms = 0.0;
  double counterfactual_adverse_ms = 0.0;
};

/// Scores and alerts over the whole trace, then applies the intervention
/// model if given. Results do not depend on `speed`.
///
/// Throws TraceError for an invalid trace and std::invalid_argument for a bad
/// configuration.
ReplayResult replay_mission(const MissionTrace& trace, const VigilanceConfig& config,
                            const std::optional<InterventionModel>& intervention,
                            ReplaySpeed speed = ReplaySpeed::afap());

nlohmann::json to_json(const InterventionModel& model);
InterventionModel intervention_from_json(const nlohmann::json& j,
                                         InterventionModel base = {});
/// Versioned ReplayResult document; see docs/replay-result.md.
nlohmann::json to_json(const ReplayResult& result);

}  // namespace vigil

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vigil/metrics.hpp"
#include "vigil/replay.hpp"

namespace vigil {

/// How frames inside an intervention count towards usable frames.
enum class InterventionAccounting : std::uint8_t {
  /// Scored counterfactually: adverse frames after the simulated settle
  /// point count as calm.
  counterfactual,
  /// Every intervened frame is unusable.
  intervened_unusable,
  /// Intervened frames are dropped from numerator and denominator.
  intervened_excluded,
};

std::string_view to_string(InterventionAccounting accounting);

struct DetectionOutcome {
  GroundTruthEvent event;
  bool true_positive = false;
  /// First score above threshold inside the event, relative to its start.
  std::optional<TimestampMs> latency_ms;
};

struct MetricsReport {
  std::string mission_id;
  double theta_s = 0.3;
  std::optional<InterventionModel> intervention;

  std::optional<double> warning_window_s;
  /// First score above threshold, relative to the first frame.
  std::optional<TimestampMs> first_detection_ms;

  UsableFrames usable;
  double usable_total_pct = 0.0;
  std::optional<double> usable_sampling_pct;
  /// All three accountings when an intervention model was applied.
  std::vector<std::pair<InterventionAccounting, UsableFrames>> usable_accountings;

  /// Counterfactual when an intervention model was applied, raw otherwise.
  double adverse_behavior_ms = 0.0;
  double raw_adverse_ms = 0.0;

  double mission_duration_ms = 0.0;
  double sampling_duration_ms = 0.0;
  /// Summed FLIGHT_RESPONSE durations (running time, not score time).
  double flight_duration_ms = 0.0;

  std::vector<DetectionOutcome> detections;
  std::size_t alert_count = 0;
  std::size_t intervention_count = 0;
  std::vector<std::string> diagnostics;
};

/// Never throws for a result produced by replay_mission.
MetricsReport compute_metrics(const ReplayResult& result);

nlohmann::json to_json(const MetricsReport& report);

struct ComparisonRow {
  std::string label;
  MetricsReport report;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  std::optional<double> mean_warning_window_s;
  std::optional<double> mean_first_detection_ms;
  std::optional<double> mean_flight_duration_ms;

  std::string to_csv() const;
  std::string to_markdown() const;
  nlohmann::json to_json() const;
};

/// Throws std::invalid_argument for an empty list.
ComparisonReport comparison_report(const std::vector<std::pair<std::string, ReplayResult>>& results);

}  // namespace vigil

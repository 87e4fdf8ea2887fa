#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vigil/trace.hpp"
#include "vigil/types.hpp"

// Retrospective mission metrics over a scored sample timeline.
//
// Time attribution: a sample stands for the interval until the next sample;
// the last sample covers one nominal frame interval.
namespace vigil {

std::vector<double> sample_durations_ms(std::span<const VigilanceSample> samples,
                                        double nominal_interval_ms);

/// First sample whose score is strictly above theta_s.
std::optional<TimestampMs> first_exceedance_ms(std::span<const VigilanceSample> samples,
                                               double theta_s);

/// Seconds from the first score above theta_s to the start of the first
/// FLIGHT_RESPONSE. Absent if either endpoint is missing. A negative value
/// means the threshold was first crossed after the animals fled.
std::optional<double> warning_window(std::span<const VigilanceSample> samples,
                                     const std::vector<GroundTruthEvent>& events,
                                     double theta_s);

/// Cumulative time with a score strictly above theta_s.
double adverse_duration(std::span<const VigilanceSample> samples, double theta_s,
                        double nominal_interval_ms);

struct UsableFrames {
  std::size_t total_frames = 0;
  std::size_t usable = 0;
  std::size_t no_confident_detection = 0;
  std::size_t above_threshold = 0;
  /// Frames counted unusable regardless of score (intervention accounting).
  std::size_t forced_unusable = 0;
  /// Frames removed from the denominator (only under the "excluded" accounting).
  std::size_t excluded = 0;
  std::size_t sampling_frames = 0;
  std::size_t sampling_usable = 0;

  double total_pct() const;
  /// Absent when the trace marks no sampling phase.
  std::optional<double> sampling_pct() const;
};

/// Frames with at least one confidently scored individual and a score at or
/// below theta_s, over all frames and over frames inside sampling phases.
UsableFrames usable_frames(std::span<const VigilanceSample> samples, const MissionTrace& trace,
                           const VigilanceConfig& config);

/// General form used for counterfactual accounting: `calm_override[i]` marks
/// frames whose recorded score is treated as at/below threshold, `excluded[i]`
/// drops a frame from both numerator and denominator, `forced_unusable[i]`
/// counts a frame as unusable. Empty spans mean "none".
UsableFrames usable_frames(std::span<const VigilanceSample> samples,
                           const MissionMetadata& metadata, double theta_s,
                           std::span<const bool> calm_override,
                           std::span<const bool> excluded,
                           std::span<const bool> forced_unusable);

/// Round to one decimal place, as reported.
double round_pct(double pct);

/// mm:ss rendering rounded to the nearest second.
std::string format_mmss(double milliseconds);

}  // namespace vigil

#pragma once

#include <vector>

#include "vigil/types.hpp"

namespace vigil {

/// Individuals whose detection confidence is strictly above theta_c, in input
/// order.
std::vector<IndividualObservation> filter_confident(const FrameObservation& frame,
                                                    double theta_c);

/// Group vigilance score for one frame.
///
/// An individual is included only when both its detection confidence and its
/// behavior confidence are strictly above the configured thresholds. The score
/// is the mean behavior weight over included individuals; `n_adverse` counts
/// included individuals whose weight is at least 0.5. When nothing is included
/// the sample is degraded and carries no score or centroid.
VigilanceSample compute_vigilance(const FrameObservation& frame,
                                  const VigilanceConfig& config);

/// Display colour for a defined score: green below yellow_factor * theta_s,
/// red at or above theta_s, yellow in between.
AlertLevel instantaneous_level(double score, const VigilanceConfig& config);

/// Scores every frame in order.
std::vector<VigilanceSample> score_frames(const std::vector<FrameObservation>& frames,
                                          const VigilanceConfig& config);

}  // namespace vigil

#include "vigil/vigilance.hpp"

#include <algorithm>
#include <numeric>

namespace vigil {

namespace {

// Summing in sorted order makes the result independent of input order.
double canonical_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0);
}

}  // namespace

std::vector<IndividualObservation> filter_confident(const FrameObservation& frame,
                                                    double theta_c) {
  std::vector<IndividualObservation> kept;
  kept.reserve(frame.individuals.size());
  for (const auto& ind : frame.individuals) {
    if (ind.detection_confidence > theta_c) kept.push_back(ind);
  }
  return kept;
}

VigilanceSample compute_vigilance(const FrameObservation& frame,
                                  const VigilanceConfig& config) {
  VigilanceSample sample;
  sample.frame_index = frame.frame_index;
  sample.timestamp_ms = frame.timestamp_ms;
  sample.n_detected_raw = static_cast<std::uint32_t>(frame.individuals.size());

  const double theta_q = config.behavior_threshold();
  std::vector<double> weights, qs, xs, ys;
  weights.reserve(frame.individuals.size());
  for (const auto& ind : frame.individuals) {
    if (!(ind.detection_confidence > config.theta_c)) continue;
    if (!(ind.behavior_confidence > theta_q)) continue;
    const double w = config.weights[ind.behavior];
    ++sample.n_included;
    if (w >= 0.5) ++sample.n_adverse;
    weights.push_back(w);
    qs.push_back(ind.behavior_confidence);
    xs.push_back(ind.bbox.center_x());
    ys.push_back(ind.bbox.center_y());
  }

  if (sample.n_included == 0) {
    sample.degrade = sample.n_detected_raw == 0 ? DegradeReason::no_detections
                                                : DegradeReason::low_confidence;
    return sample;
  }

  const double n = static_cast<double>(sample.n_included);
  sample.score = canonical_sum(weights) / n;
  sample.centroid = Point2{canonical_sum(xs) / n, canonical_sum(ys) / n};
  sample.mean_behavior_confidence = canonical_sum(qs) / n;
  return sample;
}

AlertLevel instantaneous_level(double score, const VigilanceConfig& config) {
  if (score >= config.theta_s) return AlertLevel::red;
  if (score >= config.yellow_factor * config.theta_s) return AlertLevel::yellow;
  return AlertLevel::green;
}

std::vector<VigilanceSample> score_frames(const std::vector<FrameObservation>& frames,
                                          const VigilanceConfig& config) {
  std::vector<VigilanceSample> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(compute_vigilance(f, config));
  return out;
}

}  // namespace vigil

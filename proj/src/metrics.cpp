#include "vigil/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace vigil {

std::vector<double> sample_durations_ms(std::span<const VigilanceSample> samples,
                                        double nominal_interval_ms) {
  std::vector<double> out(samples.size(), 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = i + 1 < samples.size()
                 ? static_cast<double>(samples[i + 1].timestamp_ms - samples[i].timestamp_ms)
                 : nominal_interval_ms;
  }
  return out;
}

std::optional<TimestampMs> first_exceedance_ms(std::span<const VigilanceSample> samples,
                                               double theta_s) {
  for (const auto& s : samples) {
    if (s.exceeds(theta_s)) return s.timestamp_ms;
  }
  return std::nullopt;
}

std::optional<double> warning_window(std::span<const VigilanceSample> samples,
                                     const std::vector<GroundTruthEvent>& events,
                                     double theta_s) {
  const auto flight = first_flight_start(events);
  const auto first = first_exceedance_ms(samples, theta_s);
  if (!flight || !first) return std::nullopt;
  return static_cast<double>(*flight - *first) / 1000.0;
}

double adverse_duration(std::span<const VigilanceSample> samples, double theta_s,
                        double nominal_interval_ms) {
  const auto durations = sample_durations_ms(samples, nominal_interval_ms);
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].exceeds(theta_s)) total += durations[i];
  }
  return total;
}

double UsableFrames::total_pct() const {
  const auto denom = total_frames - excluded;
  return denom == 0 ? 0.0 : 100.0 * static_cast<double>(usable) / static_cast<double>(denom);
}

std::optional<double> UsableFrames::sampling_pct() const {
  if (sampling_frames == 0) return std::nullopt;
  return 100.0 * static_cast<double>(sampling_usable) / static_cast<double>(sampling_frames);
}

UsableFrames usable_frames(std::span<const VigilanceSample> samples, const MissionTrace& trace,
                           const VigilanceConfig& config) {
  return usable_frames(samples, trace.metadata, config.theta_s, {}, {}, {});
}

UsableFrames usable_frames(std::span<const VigilanceSample> samples,
                           const MissionMetadata& metadata, double theta_s,
                           std::span<const bool> calm_override,
                           std::span<const bool> excluded,
                           std::span<const bool> forced_unusable) {
  auto flag = [](std::span<const bool> flags, std::size_t i) {
    return i < flags.size() && flags[i];
  };
  UsableFrames out;
  out.total_frames = samples.size();
  std::size_t phase = 0;
  const auto& phases = metadata.sampling_phases;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    while (phase < phases.size() && phases[phase].end_ms <= s.timestamp_ms) ++phase;
    const bool in_sampling = phase < phases.size() && phases[phase].contains(s.timestamp_ms);

    if (flag(excluded, i)) {
      ++out.excluded;
      continue;
    }
    if (in_sampling) ++out.sampling_frames;

    bool usable = false;
    if (!s.score) {
      ++out.no_confident_detection;
    } else if (s.exceeds(theta_s) && !flag(calm_override, i)) {
      ++out.above_threshold;
    } else if (flag(forced_unusable, i)) {
      ++out.forced_unusable;
    } else {
      usable = true;
    }
    if (usable) {
      ++out.usable;
      if (in_sampling) ++out.sampling_usable;
    }
  }
  return out;
}

double round_pct(double pct) { return std::round(pct * 10.0) / 10.0; }

std::string format_mmss(double milliseconds) {
  const auto total = static_cast<long long>(std::llround(std::max(0.0, milliseconds) / 1000.0));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld", total / 60, total % 60);
  return buf;
}

}  // namespace vigil

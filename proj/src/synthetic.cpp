#include "vigil/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "vigil/json_codec.hpp"

namespace vigil {

namespace {

using nlohmann::json;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Portable uniform in [0, 1); std distributions differ between libraries.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

double quantize(double v, double step) { return std::round(v / step) * step; }

struct Animal {
  double base_x;
  double base_y;
  double w;
  double h;
  double phase;
};

void check_params(const SyntheticParams& p) {
  if (p.herd_size < 1 || p.herd_size > 4096) {
    throw std::invalid_argument("herd_size must lie in [1, 4096]");
  }
  if (!(p.fps > 0.0) || !std::isfinite(p.fps)) {
    throw std::invalid_argument("fps must be positive");
  }
  for (const auto& phase : p.phases) {
    if (phase.duration_ms < 0) throw std::invalid_argument("phase duration must be >= 0");
    if (!(phase.vigilant_fraction >= 0.0 && phase.vigilant_fraction <= 1.0)) {
      throw std::invalid_argument("vigilant_fraction must lie in [0,1]");
    }
    if (!(phase.noise >= 0.0 && phase.noise <= 1.0)) {
      throw std::invalid_argument("noise must lie in [0,1]");
    }
  }
}

void push_span(std::vector<TimeSpan>& spans, TimeSpan span) {
  if (span.start_ms >= span.end_ms) return;
  if (!spans.empty() && spans.back().end_ms == span.start_ms) {
    spans.back().end_ms = span.end_ms;
  } else {
    spans.push_back(span);
  }
}

}  // namespace

std::string_view to_string(Visibility v) {
  switch (v) {
    case Visibility::visible: return "visible";
    case Visibility::occluded: return "occluded";
    case Visibility::absent: return "absent";
  }
  return "visible";
}

std::optional<Visibility> parse_visibility(std::string_view text) {
  for (auto v : {Visibility::visible, Visibility::occluded, Visibility::absent}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

TimestampMs synthetic_timestamp(FrameIndex index, double fps) {
  return static_cast<TimestampMs>(std::llround(static_cast<double>(index) * 1000.0 / fps));
}

std::vector<FrameIndex> phase_frame_boundaries(const SyntheticParams& params) {
  std::vector<FrameIndex> bounds{0};
  TimestampMs cumulative = 0;
  for (const auto& phase : params.phases) {
    cumulative += phase.duration_ms;
    bounds.push_back(static_cast<FrameIndex>(
        std::llround(static_cast<double>(cumulative) * params.fps / 1000.0)));
  }
  return bounds;
}

MissionTrace generate_synthetic_trace(const SyntheticParams& params) {
  check_params(params);
  Rng rng(params.seed);

  MissionTrace trace;
  auto& meta = trace.metadata;
  meta.mission_id = params.mission_id;
  meta.species = params.species;
  meta.herd_size = params.herd_size;
  meta.fps = params.fps;
  meta.altitude_m = params.altitude_m;
  meta.collection_mode = params.collection_mode;
  meta.battery_pct = params.battery_pct;

  const auto n = static_cast<std::size_t>(params.herd_size);
  std::vector<Animal> herd(n);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = herd[i];
    a.w = rng.uniform(0.03, 0.08);
    a.h = rng.uniform(0.03, 0.08);
    a.base_x = rng.uniform(0.05, 0.95 - a.w - 0.05);
    a.base_y = rng.uniform(0.05, 0.95 - a.h - 0.05);
    a.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ids[i] = "ind-" + std::to_string(i);
  }

  const auto bounds = phase_frame_boundaries(params);
  trace.frames.reserve(bounds.back());
  std::vector<bool> vigilant(n);
  for (std::size_t k = 0; k < params.phases.size(); ++k) {
    const auto& phase = params.phases[k];
    const FrameIndex first = bounds[k];
    const FrameIndex last = bounds[k + 1];
    const TimeSpan span{synthetic_timestamp(first, params.fps),
                        synthetic_timestamp(last, params.fps)};
    if (phase.sampling) push_span(meta.sampling_phases, span);
    if (phase.event && span.start_ms < span.end_ms) {
      auto& events = trace.events;
      if (!events.empty() && events.back().kind == *phase.event &&
          events.back().end_ms == span.start_ms) {
        events.back().end_ms = span.end_ms;
      } else {
        events.push_back({*phase.event, span.start_ms, span.end_ms, {}});
      }
    }

    const auto active_count = static_cast<std::size_t>(
        std::llround(phase.vigilant_fraction * static_cast<double>(n)));
    const std::size_t rotation = static_cast<std::size_t>(rng.below(n));

    for (FrameIndex f = first; f < last; ++f) {
      FrameObservation frame;
      frame.frame_index = f;
      frame.timestamp_ms = synthetic_timestamp(f, params.fps);
      if (phase.visibility != Visibility::absent) {
        for (std::size_t i = 0; i < n; ++i) vigilant[(i + rotation) % n] = i < active_count;
        frame.individuals.reserve(n);
        const double t = static_cast<double>(frame.timestamp_ms) / 1000.0;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& a = herd[i];
          bool is_active = vigilant[i];
          if (phase.noise > 0.0 && rng.uniform() < phase.noise) is_active = !is_active;
          IndividualObservation ind;
          ind.individual_id = ids[i];
          const double dx = 0.04 * std::sin(0.2 * t + a.phase);
          const double dy = 0.04 * std::cos(0.13 * t + a.phase);
          ind.bbox = {quantize(a.base_x + dx, 1e-4), quantize(a.base_y + dy, 1e-4),
                      quantize(a.w, 1e-4), quantize(a.h, 1e-4)};
          if (phase.visibility == Visibility::visible) {
            ind.detection_confidence = quantize(rng.uniform(0.6, 0.99), 1e-3);
          } else {
            ind.detection_confidence = quantize(rng.uniform(0.05, 0.45), 1e-3);
          }
          ind.behavior = is_active ? phase.active_behavior : phase.background_behavior;
          ind.behavior_confidence = quantize(rng.uniform(0.55, 0.99), 1e-3);
          frame.individuals.push_back(std::move(ind));
        }
      }
      trace.frames.push_back(std::move(frame));
    }
  }
  return trace;
}

SyntheticParams synthetic_params_from_json(const json& j) {
  using namespace codec;
  SyntheticParams p;
  if (j.contains("mission_id")) p.mission_id = get_string(j, "mission_id");
  if (j.contains("species")) p.species = get_string(j, "species");
  if (j.contains("herd_size")) p.herd_size = static_cast<int>(get_int(j, "herd_size"));
  if (j.contains("fps")) p.fps = get_number(j, "fps");
  if (j.contains("seed")) p.seed = get_uint(j, "seed");
  if (j.contains("collection_mode")) {
    const auto mode = parse_collection_mode(get_string(j, "collection_mode"));
    if (!mode) throw JsonFieldError("collection_mode", "expected HITL, HOTL or SYNTHETIC");
    p.collection_mode = *mode;
  }
  if (j.contains("altitude_m")) p.altitude_m = get_number(j, "altitude_m");
  if (j.contains("battery_pct")) p.battery_pct = get_number(j, "battery_pct");
  const auto& phases = require(j, "phases");
  if (!phases.is_array()) throw JsonFieldError("phases", "expected an array");
  for (const auto& ph : phases) {
    PhaseSpec s;
    if (ph.contains("label")) s.label = get_string(ph, "label");
    s.duration_ms = get_int(ph, "duration_ms");
    if (ph.contains("vigilant_fraction")) s.vigilant_fraction = get_number(ph, "vigilant_fraction");
    if (ph.contains("noise")) s.noise = get_number(ph, "noise");
    if (ph.contains("active_behavior")) {
      auto b = parse_behavior(get_string(ph, "active_behavior"));
      if (!b) throw JsonFieldError("active_behavior", "unknown behavior");
      s.active_behavior = *b;
    }
    if (ph.contains("background_behavior")) {
      auto b = parse_behavior(get_string(ph, "background_behavior"));
      if (!b) throw JsonFieldError("background_behavior", "unknown behavior");
      s.background_behavior = *b;
    }
    if (ph.contains("visibility")) {
      auto v = parse_visibility(get_string(ph, "visibility"));
      if (!v) throw JsonFieldError("visibility", "expected visible, occluded or absent");
      s.visibility = *v;
    }
    if (ph.contains("sampling")) s.sampling = get_bool(ph, "sampling");
    if (ph.contains("event") && !ph["event"].is_null()) {
      auto e = parse_ground_truth_kind(get_string(ph, "event"));
      if (!e) throw JsonFieldError("event", "expected FLIGHT_RESPONSE or ALERT_VIGILANCE");
      s.event = *e;
    }
    p.phases.push_back(std::move(s));
  }
  return p;
}

json to_json(const SyntheticParams& p) {
  json phases = json::array();
  for (const auto& s : p.phases) {
    json ph = {
        {"label", s.label},
        {"duration_ms", s.duration_ms},
        {"vigilant_fraction", s.vigilant_fraction},
        {"noise", s.noise},
        {"active_behavior", to_string(s.active_behavior)},
        {"background_behavior", to_string(s.background_behavior)},
        {"visibility", to_string(s.visibility)},
        {"sampling", s.sampling},
    };
    if (s.event) ph["event"] = to_string(*s.event);
    phases.push_back(std::move(ph));
  }
  json j = {
      {"mission_id", p.mission_id},
      {"species", p.species},
      {"herd_size", p.herd_size},
      {"fps", p.fps},
      {"seed", p.seed},
      {"collection_mode", to_string(p.collection_mode)},
      {"phases", std::move(phases)},
  };
  if (p.altitude_m) j["altitude_m"] = *p.altitude_m;
  if (p.battery_pct) j["battery_pct"] = *p.battery_pct;
  return j;
}

PhaseSpec parse_phase_spec(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon == std::string_view::npos ? text.npos
                                                                        : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  if (parts.size() < 2) {
    throw std::invalid_argument("phase '" + std::string(text) +
                                "' must look like duration_ms:fraction[:flags]");
  }
  auto to_double = [&](std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw std::invalid_argument("bad number '" + std::string(s) + "' in phase");
    }
    return v;
  };
  PhaseSpec spec;
  const double duration = to_double(parts[0]);
  if (duration < 0 || duration != std::floor(duration)) {
    throw std::invalid_argument("phase duration must be a non-negative integer (ms)");
  }
  spec.duration_ms = static_cast<TimestampMs>(duration);
  spec.vigilant_fraction = to_double(parts[1]);
  for (std::size_t i = 2; i < parts.size(); ++i) {
    const auto flag = parts[i];
    if (auto b = parse_behavior(flag)) {
      spec.active_behavior = *b;
    } else if (flag == "flight") {
      spec.event = GroundTruthKind::flight_response;
    } else if (flag == "alert") {
      spec.event = GroundTruthKind::alert_vigilance;
    } else if (flag == "nosample") {
      spec.sampling = false;
    } else if (auto v = parse_visibility(flag)) {
      spec.visibility = *v;
    } else if (flag.starts_with("noise=")) {
      spec.noise = to_double(flag.substr(6));
    } else if (flag.starts_with("bg=")) {
      auto b = parse_behavior(flag.substr(3));
      if (!b) throw std::invalid_argument("unknown behavior in '" + std::string(flag) + "'");
      spec.background_behavior = *b;
    } else {
      throw std::invalid_argument("unknown phase flag '" + std::string(flag) + "'");
    }
  }
  return spec;
}

}  // namespace vigil

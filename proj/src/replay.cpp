#include "vigil/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "vigil/json_codec.hpp"
#include "vigil/metrics.hpp"
#include "vigil/trace_io.hpp"
#include "vigil/vigilance.hpp"

namespace vigil {

namespace {

using nlohmann::json;

struct Run {
  std::size_t first;
  std::size_t last;  // inclusive
};

std::vector<Run> adverse_runs(const std::vector<VigilanceSample>& samples, double theta_s) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].exceeds(theta_s)) continue;
    if (!runs.empty() && runs.back().last + 1 == i) {
      runs.back().last = i;
    } else {
      runs.push_back({i, i});
    }
  }
  return runs;
}

void push_span(std::vector<DroneStateSpan>& timeline, DroneState state, TimestampMs start,
               TimestampMs end) {
  if (start >= end) return;
  if (!timeline.empty() && timeline.back().state == state && timeline.back().end_ms == start) {
    timeline.back().end_ms = end;
    return;
  }
  timeline.push_back({state, start, end});
}

}  // namespace

std::string_view to_string(DroneState state) {
  switch (state) {
    case DroneState::tracking: return "TRACKING";
    case DroneState::pause: return "PAUSE";
    case DroneState::retreat: return "RETREAT";
    case DroneState::holding: return "HOLDING";
  }
  return "TRACKING";
}

std::optional<DroneState> parse_drone_state(std::string_view text) {
  for (auto s : {DroneState::tracking, DroneState::pause, DroneState::retreat,
                 DroneState::holding}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

InterventionModel InterventionModel::operator_profile() {
  InterventionModel m;
  m.response_latency_ms = 5000.0;
  return m;
}

InterventionModel InterventionModel::never() {
  InterventionModel m;
  m.response_latency_ms = std::numeric_limits<double>::infinity();
  return m;
}

void validate(const InterventionModel& m) {
  if (!(m.response_latency_ms >= 0.0)) {
    throw std::invalid_argument("response latency must be >= 0");
  }
  if (m.intervention_duration_ms < 0 || m.deescalation_delay_ms < 0) {
    throw std::invalid_argument("intervention durations must be >= 0");
  }
  if (m.resume_calm_frames < 1) throw std::invalid_argument("resume_calm_frames must be >= 1");
  if (m.action != DroneState::pause && m.action != DroneState::retreat) {
    throw std::invalid_argument("intervention action must be PAUSE or RETREAT");
  }
}

ReplaySpeed ReplaySpeed::realtime(double multiplier) {
  if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
    throw std::invalid_argument("replay speed must be a positive multiplier");
  }
  return ReplaySpeed(multiplier);
}

void ReplayClock::start(TimestampMs mission_time) {
  anchor_wall_ = clock::now();
  anchor_mission_ = mission_time;
}

ReplayClock::clock::time_point ReplayClock::due(TimestampMs mission_time) const {
  if (speed_.unpaced()) return anchor_wall_;
  const double wall_ms =
      static_cast<double>(mission_time - anchor_mission_) / speed_.multiplier();
  return anchor_wall_ + std::chrono::duration_cast<clock::duration>(
                            std::chrono::duration<double, std::milli>(wall_ms));
}

void ReplayClock::wait_until(TimestampMs mission_time) const {
  if (speed_.unpaced()) return;
  std::this_thread::sleep_until(due(mission_time));
}

void ReplayClock::set_speed(ReplaySpeed speed, TimestampMs mission_time) {
  speed_ = speed;
  start(mission_time);
}

ReplayEngine::ReplayEngine(std::shared_ptr<const MissionTrace> trace, VigilanceConfig config)
    : trace_(std::move(trace)), config_(std::move(config)) {
  if (!trace_) throw std::invalid_argument("replay needs a trace");
  vigil::validate(config_);
}

std::optional<TimestampMs> ReplayEngine::next_timestamp() const {
  if (finished()) return std::nullopt;
  return trace_->frames[position_].timestamp_ms;
}

ReplayEngine::Step ReplayEngine::step() {
  if (finished()) throw std::logic_error("replay already finished");
  Step out;
  out.frame = &trace_->frames[position_++];
  out.sample = compute_vigilance(*out.frame, config_);
  out.event = alerts_.step(out.sample, config_);
  out.level = alerts_.state().level;
  return out;
}

void ReplayEngine::set_threshold(double theta_s) {
  auto next = config_;
  next.theta_s = theta_s;
  vigil::validate(next);
  config_ = next;
}

InterventionOutcome simulate_intervention(const std::vector<VigilanceSample>& samples,
                                          const std::vector<AlertLevel>& alert_levels,
                                          double theta_s, const InterventionModel& model,
                                          double nominal_interval_ms) {
  validate(model);
  if (alert_levels.size() != samples.size()) {
    throw std::invalid_argument("alert level timeline does not match samples");
  }
  const auto n = samples.size();
  InterventionOutcome out;
  out.intervened.assign(n, false);
  out.counterfactual_adverse.assign(n, false);
  if (n == 0) return out;

  const auto durations = sample_durations_ms(samples, nominal_interval_ms);
  const bool engages = std::isfinite(model.response_latency_ms);
  std::vector<TimestampMs> engage_times;

  for (const auto& run : adverse_runs(samples, theta_s)) {
    const TimestampMs run_start = samples[run.first].timestamp_ms;
    double run_length = 0.0;
    for (auto i = run.first; i <= run.last; ++i) run_length += durations[i];

    std::optional<std::size_t> red;
    for (auto i = run.first; i <= run.last; ++i) {
      if (is_red(alert_levels[i])) {
        red = i;
        break;
      }
    }
    const double limit =
        red ? static_cast<double>(samples[*red].timestamp_ms - run_start) +
                  model.response_latency_ms + static_cast<double>(model.deescalation_delay_ms)
            : std::numeric_limits<double>::infinity();
    for (auto i = run.first; i <= run.last; ++i) {
      out.counterfactual_adverse[i] =
          static_cast<double>(samples[i].timestamp_ms - run_start) < limit;
    }
    if (limit < run_length) {
      out.counterfactual_adverse_ms += limit;
    } else {
      // Frame-order accumulation keeps uncapped totals bit-identical to the raw sum.
      for (auto i = run.first; i <= run.last; ++i) out.counterfactual_adverse_ms += durations[i];
    }
    if (!red) continue;
    if (engages) {
      engage_times.push_back(samples[*red].timestamp_ms +
                             static_cast<TimestampMs>(std::llround(model.response_latency_ms)));
    }
  }

  const TimestampMs mission_end =
      samples.back().timestamp_ms + static_cast<TimestampMs>(std::llround(nominal_interval_ms));
  const TimestampMs mission_start = samples.front().timestamp_ms;

  struct Active {
    TimestampMs engage;
    TimestampMs hold_until;
  };
  std::optional<Active> active;
  int calm = 0;
  std::size_t pending = 0;
  TimestampMs cursor = mission_start;

  auto close = [&](TimestampMs release, bool released) {
    out.interventions.push_back({active->engage, release, released});
    push_span(out.drone_timeline, DroneState::tracking, cursor, active->engage);
    const auto action_end = std::min(active->hold_until, release);
    push_span(out.drone_timeline, model.action, active->engage, action_end);
    push_span(out.drone_timeline, DroneState::holding, action_end, release);
    cursor = release;
    active.reset();
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    while (pending < engage_times.size() && engage_times[pending] <= s.timestamp_ms) {
      const auto at = engage_times[pending++];
      if (!active) {
        active = Active{at, at + model.intervention_duration_ms};
      } else {
        active->hold_until = std::max(active->hold_until, at + model.intervention_duration_ms);
      }
      calm = 0;
    }
    if (!active) continue;
    out.intervened[i] = true;
    if (s.timestamp_ms < active->hold_until) continue;
    const bool settled = s.score && (*s.score < theta_s ||
                                     (*s.score > theta_s && !out.counterfactual_adverse[i]));
    calm = settled ? calm + 1 : 0;
    if (calm >= model.resume_calm_frames) {
      close(s.timestamp_ms, true);
      calm = 0;
    }
  }
  if (active) close(mission_end, false);
  push_span(out.drone_timeline, DroneState::tracking, cursor, mission_end);
  return out;
}

ReplayResult replay_mission(const MissionTrace& trace, const VigilanceConfig& config,
                            const std::optional<InterventionModel>& intervention,
                            ReplaySpeed speed) {
  const auto diags = validate_trace(trace);
  if (!diags.empty()) throw TraceError(diags.front());
  validate(config);
  if (intervention) validate(*intervention);

  ReplayResult result;
  result.metadata = trace.metadata;
  result.events = trace.events;
  result.config = config;
  result.intervention = intervention;

  // Non-owning handle; the engine does not outlive this call.
  std::shared_ptr<const MissionTrace> view(&trace, [](const MissionTrace*) {});
  ReplayEngine engine(view, config);
  ReplayClock clock(speed);
  if (!trace.frames.empty()) clock.start(trace.frames.front().timestamp_ms);

  result.samples.reserve(trace.frames.size());
  result.alert_levels.reserve(trace.frames.size());
  while (!engine.finished()) {
    clock.wait_until(*engine.next_timestamp());
    auto step = engine.step();
    result.samples.push_back(step.sample);
    result.alert_levels.push_back(step.level);
    if (step.event) result.alert_events.push_back(*step.event);
  }

  const double interval = trace.metadata.frame_interval_ms();
  result.raw_adverse_ms = adverse_duration(result.samples, config.theta_s, interval);
  if (intervention) {
    auto outcome = simulate_intervention(result.samples, result.alert_levels, config.theta_s,
                                         *intervention, interval);
    result.interventions = std::move(outcome.interventions);
    result.intervened = std::move(outcome.intervened);
    result.counterfactual_adverse = std::move(outcome.counterfactual_adverse);
    result.drone_timeline = std::move(outcome.drone_timeline);
    result.counterfactual_adverse_ms = outcome.counterfactual_adverse_ms;
  } else {
    result.intervened.assign(result.samples.size(), false);
    result.counterfactual_adverse.resize(result.samples.size());
    for (std::size_t i = 0; i < result.samples.size(); ++i) {
      result.counterfactual_adverse[i] = result.samples[i].exceeds(config.theta_s);
    }
    result.counterfactual_adverse_ms = result.raw_adverse_ms;
    if (!result.samples.empty()) {
      result.drone_timeline.push_back(
          {DroneState::tracking, result.samples.front().timestamp_ms,
           result.samples.back().timestamp_ms +
               static_cast<TimestampMs>(std::llround(interval))});
    }
  }
  return result;
}

json to_json(const InterventionModel& m) {
  json j = {
      {"response_latency_ms",
       std::isfinite(m.response_latency_ms) ? json(m.response_latency_ms) : json(nullptr)},
      {"intervention_duration_ms", m.intervention_duration_ms},
      {"deescalation_delay_ms", m.deescalation_delay_ms},
      {"resume_calm_frames", m.resume_calm_frames},
      {"action", to_string(m.action)},
  };
  return j;
}

InterventionModel intervention_from_json(const json& j, InterventionModel m) {
  using namespace codec;
  if (auto it = j.find("response_latency_ms"); it != j.end()) {
    m.response_latency_ms = it->is_null() ? std::numeric_limits<double>::infinity()
                                          : get_number(j, "response_latency_ms");
  }
  if (j.contains("intervention_duration_ms")) {
    m.intervention_duration_ms = get_int(j, "intervention_duration_ms");
  }
  if (j.contains("deescalation_delay_ms")) {
    m.deescalation_delay_ms = get_int(j, "deescalation_delay_ms");
  }
  if (j.contains("resume_calm_frames")) {
    m.resume_calm_frames = static_cast<int>(get_int(j, "resume_calm_frames"));
  }
  if (j.contains("action")) {
    auto a = parse_drone_state(get_string(j, "action"));
    if (!a) throw JsonFieldError("action", "expected PAUSE or RETREAT");
    m.action = *a;
  }
  return m;
}

json to_json(const ReplayResult& r) {
  json samples = json::array();
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    auto s = codec::to_json(r.samples[i]);
    s["alert_level"] = to_string(r.alert_levels[i]);
    s["intervened"] = static_cast<bool>(r.intervened[i]);
    s["counterfactual_adverse"] = static_cast<bool>(r.counterfactual_adverse[i]);
    samples.push_back(std::move(s));
  }
  json alerts = json::array();
  for (const auto& e : r.alert_events) alerts.push_back(codec::to_json(e));
  json interventions = json::array();
  for (const auto& iv : r.interventions) {
    interventions.push_back(
        {{"engage_ms", iv.engage_ms}, {"release_ms", iv.release_ms}, {"released", iv.released}});
  }
  json timeline = json::array();
  for (const auto& span : r.drone_timeline) {
    timeline.push_back(
        {{"state", to_string(span.state)}, {"start_ms", span.start_ms}, {"end_ms", span.end_ms}});
  }
  json events = json::array();
  for (const auto& e : r.events) events.push_back(codec::to_json(e));
  return {
      {"v", 1},
      {"kind", "replay_result"},
      {"metadata", codec::to_json(r.metadata)},
      {"events", std::move(events)},
      {"config", codec::to_json(r.config)},
      {"intervention", r.intervention ? to_json(*r.intervention) : json(nullptr)},
      {"raw_adverse_ms", r.raw_adverse_ms},
      {"counterfactual_adverse_ms", r.counterfactual_adverse_ms},
      {"interventions", std::move(interventions)},
      {"drone_timeline", std::move(timeline)},
      {"alert_events", std::move(alerts)},
      {"samples", std::move(samples)},
  };
}

}  // namespace vigil

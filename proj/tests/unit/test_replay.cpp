#include <chrono>

#include "doctest.h"
#include "generators.hpp"
#include "oracles.hpp"
#include "vigil/replay.hpp"
#include "vigil/synthetic.hpp"
#include "vigil/trace_io.hpp"
#include "vigil/vigilance.hpp"

using namespace vigil;

namespace {

MissionTrace trace_from(const std::vector<std::string>& phases, int herd = 4, std::uint64_t seed = 3) {
  SyntheticParams p;
  p.herd_size = herd;
  p.seed = seed;
  for (const auto& s : phases) p.phases.push_back(parse_phase_spec(s));
  return generate_synthetic_trace(p);
}

MissionTrace random_mission(gen::Rng& rng) {
  SyntheticParams p;
  p.herd_size = rng.integer(1, 10);
  p.seed = static_cast<std::uint64_t>(rng.integer(0, 1 << 30));
  const int n = rng.integer(1, 8);
  for (int i = 0; i < n; ++i) {
    PhaseSpec s;
    s.duration_ms = rng.integer(0, 4000);
    s.vigilant_fraction = rng.chance(0.5) ? 0.0 : rng.uniform(0.2, 1.0);
    s.noise = rng.chance(0.5) ? 0.0 : rng.uniform(0.0, 0.3);
    if (rng.chance(0.15)) s.visibility = Visibility::occluded;
    if (rng.chance(0.1)) s.visibility = Visibility::absent;
    p.phases.push_back(s);
  }
  return generate_synthetic_trace(p);
}

std::vector<TimestampMs> timestamps(const ReplayResult& r) {
  std::vector<TimestampMs> out;
  for (const auto& s : r.samples) out.push_back(s.timestamp_ms);
  return out;
}

std::vector<std::optional<double>> scores(const ReplayResult& r) {
  std::vector<std::optional<double>> out;
  for (const auto& s : r.samples) out.push_back(s.score);
  return out;
}

}  // namespace

TEST_CASE("one 14 s adverse run without intervention") {
  const auto t = trace_from({"5000:0", "14000:0.5", "5000:0"});
  const auto r = replay_mission(t, {}, std::nullopt);
  CHECK(r.raw_adverse_ms == 14000.0);
  CHECK(r.counterfactual_adverse_ms == r.raw_adverse_ms);
  CHECK(r.interventions.empty());
  CHECK(r.samples == score_frames(t.frames, {}));
  REQUIRE(r.drone_timeline.size() == 1);
  CHECK(r.drone_timeline[0].state == DroneState::tracking);
}

TEST_CASE("default intervention caps the run at debounce time plus de-escalation") {
  const auto t = trace_from({"5000:0", "14000:0.5", "5000:0"});
  const auto r = replay_mission(t, {}, InterventionModel{});
  // red on the third adverse frame: 5067 - 5000 = 67 ms of debounce
  CHECK(r.counterfactual_adverse_ms == doctest::Approx(1067.0));
  const double oracle = oracle::counterfactual_adverse_ms(timestamps(r), scores(r), 0.3, 3, 0.0, 1000.0,
                                                          t.metadata.frame_interval_ms());
  CHECK(std::abs(r.counterfactual_adverse_ms - oracle) <= t.metadata.frame_interval_ms());
  REQUIRE(r.interventions.size() == 1);
  CHECK(r.interventions[0].engage_ms == 5067);
  CHECK(r.interventions[0].released);
  CHECK(r.interventions[0].release_ms >= 5067 + 5000);

  std::size_t adverse_frames = 0;
  for (bool b : r.counterfactual_adverse) adverse_frames += b;
  CHECK(adverse_frames == 32);

  // timeline: tracking, pause for 5 s, holding until release, tracking
  REQUIRE(r.drone_timeline.size() == 4);
  CHECK(r.drone_timeline[1].state == DroneState::pause);
  CHECK(r.drone_timeline[1].end_ms - r.drone_timeline[1].start_ms == 5000);
  CHECK(r.drone_timeline[2].state == DroneState::holding);
  CHECK(r.drone_timeline[3].state == DroneState::tracking);
}

TEST_CASE("operator profile engages five seconds after red") {
  const auto t = trace_from({"5000:0", "14000:0.5", "5000:0"});
  const auto r = replay_mission(t, {}, InterventionModel::operator_profile());
  CHECK(r.counterfactual_adverse_ms == doctest::Approx(6067.0));
  REQUIRE(r.interventions.size() == 1);
  CHECK(r.interventions[0].engage_ms == 10067);
}

TEST_CASE("retreat action is recorded on the timeline") {
  const auto t = trace_from({"1000:0", "3000:1", "8000:0"});
  InterventionModel m;
  m.action = DroneState::retreat;
  const auto r = replay_mission(t, {}, m);
  bool saw = false;
  for (const auto& s : r.drone_timeline) saw |= s.state == DroneState::retreat;
  CHECK(saw);
}

TEST_CASE("calm mission needs no intervention") {
  const auto t = trace_from({"5000:0"});
  const auto r = replay_mission(t, {}, InterventionModel{});
  CHECK(r.interventions.empty());
  CHECK(r.raw_adverse_ms == 0.0);
  CHECK(r.counterfactual_adverse_ms == 0.0);
}

TEST_CASE("runs shorter than the debounce window never engage") {
  const auto t = trace_from({"1000:0", "60:1", "1000:0"});
  const auto r = replay_mission(t, {}, InterventionModel{});
  CHECK(r.raw_adverse_ms > 0.0);
  CHECK(r.interventions.empty());
  CHECK(r.counterfactual_adverse_ms == r.raw_adverse_ms);
}

TEST_CASE("an intervention open at mission end is closed unreleased") {
  const auto t = trace_from({"1000:0", "3000:1"});
  const auto r = replay_mission(t, {}, InterventionModel{});
  REQUIRE(r.interventions.size() == 1);
  CHECK_FALSE(r.interventions[0].released);
  CHECK(r.interventions[0].release_ms == t.frames.back().timestamp_ms + 33);
}

TEST_CASE("invalid inputs") {
  auto t = trace_from({"1000:0"});
  VigilanceConfig bad;
  bad.theta_s = 0.95;
  CHECK_THROWS_AS(replay_mission(t, bad, std::nullopt), std::invalid_argument);
  InterventionModel m;
  m.deescalation_delay_ms = -1;
  CHECK_THROWS_AS(replay_mission(t, {}, m), std::invalid_argument);
  m = {};
  m.resume_calm_frames = 0;
  CHECK_THROWS_AS(replay_mission(t, {}, m), std::invalid_argument);
  CHECK_THROWS_AS(ReplaySpeed::realtime(0.0), std::invalid_argument);
  CHECK_THROWS_AS(ReplaySpeed::realtime(-1.0), std::invalid_argument);
  t.frames[3].frame_index = 1;
  CHECK_THROWS_AS(replay_mission(t, {}, std::nullopt), TraceError);
}

TEST_CASE("replay clock pacing arithmetic") {
  ReplayClock c(ReplaySpeed::realtime(2.0));
  c.start(1000);
  using namespace std::chrono;
  const auto base = c.due(1000);
  CHECK(duration<double, std::milli>(c.due(1033) - base).count() == doctest::Approx(16.5));
  c.set_speed(ReplaySpeed::realtime(1.0), 1033);
  CHECK(duration<double, std::milli>(c.due(1066) - c.due(1033)).count() == doctest::Approx(33.0));
  ReplayClock afap(ReplaySpeed::afap());
  afap.start(0);
  CHECK(afap.due(1'000'000) == afap.due(0));
}

TEST_CASE("unpaced replay of 1000 frames is quick; paced replay follows mission time") {
  const auto t = trace_from({"33334:0.25"});
  REQUIRE(t.frames.size() == 1000);
  auto t0 = std::chrono::steady_clock::now();
  const auto fast = replay_mission(t, {}, std::nullopt, ReplaySpeed::afap());
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(2));

  const auto short_trace = trace_from({"1000:0", "500:1"});
  t0 = std::chrono::steady_clock::now();
  const auto paced = replay_mission(short_trace, {}, InterventionModel{}, ReplaySpeed::realtime(1.0));
  const auto wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  CHECK(wall >= 1400.0);
  const auto unpaced = replay_mission(short_trace, {}, InterventionModel{}, ReplaySpeed::afap());
  CHECK(paced.samples == unpaced.samples);
  CHECK(paced.alert_events == unpaced.alert_events);
  CHECK(paced.interventions == unpaced.interventions);
  CHECK(paced.counterfactual_adverse_ms == unpaced.counterfactual_adverse_ms);
  CHECK(to_json(paced) == to_json(unpaced));
  (void)fast;
}

TEST_CASE("replay engine applies threshold changes between frames") {
  auto t = std::make_shared<const MissionTrace>(trace_from({"1000:0.5"}));
  ReplayEngine e(t, {});
  for (int i = 0; i < 3; ++i) e.step();
  CHECK(e.alert_state().level == AlertLevel::red);
  CHECK_THROWS_AS(e.set_threshold(0.05), std::invalid_argument);
  CHECK(e.config().theta_s == 0.3);
  e.set_threshold(0.6);
  const auto s = e.step();
  REQUIRE(s.event);
  CHECK(s.event->kind == AlertEventKind::enter_yellow);
  CHECK(e.position() == 4);
}

TEST_CASE("intervention model JSON") {
  const auto j = to_json(InterventionModel::never());
  CHECK(j["response_latency_ms"].is_null());
  CHECK(std::isinf(intervention_from_json(j).response_latency_ms));
  const auto m = intervention_from_json(nlohmann::json{{"deescalation_delay_ms", 2000}, {"action", "RETREAT"}});
  CHECK(m.deescalation_delay_ms == 2000);
  CHECK(m.action == DroneState::retreat);
  CHECK(m.response_latency_ms == 0.0);
}

TEST_CASE("replay result document") {
  const auto r = replay_mission(trace_from({"1000:0", "2000:0.5", "6000:0"}), {}, InterventionModel{});
  const auto j = to_json(r);
  CHECK(j["v"] == 1);
  CHECK(j["kind"] == "replay_result");
  CHECK(j["samples"].size() == r.samples.size());
  CHECK(j["samples"][40]["alert_level"] == "RED");
  CHECK(j["samples"][40]["intervened"] == true);
  CHECK(j["interventions"].size() == 1);
  CHECK(j["intervention"]["deescalation_delay_ms"] == 1000);
}

TEST_CASE("property: counterfactual accounting over random missions") {
  gen::Rng rng(51);
  for (int trial = 0; trial < 150; ++trial) {
    const auto t = random_mission(rng);
    const VigilanceConfig cfg;
    const double interval = t.metadata.frame_interval_ms();
    const auto raw = replay_mission(t, cfg, std::nullopt);
    REQUIRE(raw.samples == score_frames(t.frames, cfg));

    const auto never = replay_mission(t, cfg, InterventionModel::never());
    CHECK(never.counterfactual_adverse_ms == raw.raw_adverse_ms);
    CHECK(never.interventions.empty());

    double previous = never.counterfactual_adverse_ms;
    for (double tau : {20000.0, 5000.0, 1000.0, 100.0, 0.0}) {
      InterventionModel m;
      m.response_latency_ms = tau;
      m.resume_calm_frames = rng.integer(1, 6);
      const auto r = replay_mission(t, cfg, m);
      CHECK(r.counterfactual_adverse_ms <= r.raw_adverse_ms);
      CHECK(r.counterfactual_adverse_ms <= previous);
      previous = r.counterfactual_adverse_ms;

      // Frame-level oracle agrees to within one frame per run.
      const double oracle = oracle::counterfactual_adverse_ms(timestamps(r), scores(r), cfg.theta_s,
                                                              cfg.debounce_frames, tau, 1000.0, interval);
      std::size_t runs = 0;
      for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const bool a = r.samples[i].exceeds(cfg.theta_s);
        const bool prev = i > 0 && r.samples[i - 1].exceeds(cfg.theta_s);
        runs += a && !prev;
      }
      CHECK(std::abs(r.counterfactual_adverse_ms - oracle) <= interval * static_cast<double>(runs) + 1e-6);

      // Interventions are ordered and disjoint.
      for (std::size_t k = 1; k < r.interventions.size(); ++k) {
        CHECK(r.interventions[k].engage_ms >= r.interventions[k - 1].release_ms);
      }
      // Resume correctness: the releasing sample closes a streak of
      // resume_calm_frames counterfactually calm samples, all after the hold.
      for (const auto& iv : r.interventions) {
        if (!iv.released) continue;
        std::size_t rel = 0;
        while (r.samples[rel].timestamp_ms != iv.release_ms) ++rel;
        REQUIRE(rel + 1 >= static_cast<std::size_t>(m.resume_calm_frames));
        for (int b = 0; b < m.resume_calm_frames; ++b) {
          const auto& s = r.samples[rel - static_cast<std::size_t>(b)];
          CHECK(s.timestamp_ms >= iv.engage_ms + m.intervention_duration_ms);
          REQUIRE(s.score);
          CHECK((*s.score < cfg.theta_s || !r.counterfactual_adverse[rel - static_cast<std::size_t>(b)]));
          CHECK(*s.score != cfg.theta_s);
        }
      }
      // Drone timeline is contiguous.
      for (std::size_t k = 1; k < r.drone_timeline.size(); ++k) {
        CHECK(r.drone_timeline[k].start_ms == r.drone_timeline[k - 1].end_ms);
      }
    }
  }
}

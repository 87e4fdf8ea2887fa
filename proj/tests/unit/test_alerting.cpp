#include "doctest.h"
#include "generators.hpp"
#include "oracles.hpp"
#include "vigil/alerting.hpp"

using namespace vigil;

namespace {

VigilanceSample scored(FrameIndex i, TimestampMs ts, double s) {
  VigilanceSample v;
  v.frame_index = i;
  v.timestamp_ms = ts;
  v.score = s;
  v.n_included = 4;
  v.n_detected_raw = 4;
  return v;
}

VigilanceSample degraded(FrameIndex i, TimestampMs ts, DegradeReason why) {
  VigilanceSample v;
  v.frame_index = i;
  v.timestamp_ms = ts;
  v.degrade = why;
  v.n_detected_raw = why == DegradeReason::no_detections ? 0 : 3;
  return v;
}

struct Run {
  std::vector<std::optional<AlertEvent>> events;
  std::vector<AlertLevel> levels;
};

Run feed(const std::vector<double>& scores, const VigilanceConfig& cfg = {},
         TimestampMs step_ms = 33) {
  AlertMachine m;
  Run r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    r.events.push_back(m.step(scored(i, static_cast<TimestampMs>(i) * step_ms, scores[i]), cfg));
    r.levels.push_back(m.state().level);
  }
  return r;
}

std::vector<std::size_t> red_entries(const Run& r) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < r.events.size(); ++i) {
    if (r.events[i] && r.events[i]->kind == AlertEventKind::enter_red) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_CASE("two exceedances are not enough") {
  const auto r = feed({0.4, 0.4});
  CHECK(red_entries(r).empty());
  CHECK(r.levels.back() == AlertLevel::yellow);
}

TEST_CASE("third consecutive exceedance enters red with a chime") {
  const auto r = feed({0.4, 0.4, 0.4});
  REQUIRE(red_entries(r) == std::vector<std::size_t>{2});
  CHECK(r.events[2]->audio);
  CHECK_FALSE(r.events[2]->flashing);
  CHECK(r.events[2]->score == 0.4);
  CHECK(r.levels[2] == AlertLevel::red);
}

TEST_CASE("a calm sample resets the streak") {
  const std::vector<double> s{0.4, 0.4, 0.1, 0.4, 0.4, 0.4};
  const auto r = feed(s);
  CHECK(red_entries(r) == std::vector<std::size_t>{5});
  std::vector<bool> above;
  for (double v : s) above.push_back(v > 0.3);
  CHECK(red_entries(r) == oracle::expected_enter_red(above, 3));
}

TEST_CASE("score equal to the threshold shows red colour but never counts towards debounce") {
  const auto r = feed({0.3, 0.3, 0.3, 0.3});
  CHECK(red_entries(r).empty());
  for (auto l : r.levels) CHECK(l == AlertLevel::yellow);
}

TEST_CASE("red persisting beyond ten seconds escalates once with flashing") {
  std::vector<double> s(400, 0.6);
  const auto r = feed(s, {}, 33);
  std::size_t escalations = 0;
  std::size_t at = 0;
  for (std::size_t i = 0; i < r.events.size(); ++i) {
    if (r.events[i] && r.events[i]->kind == AlertEventKind::escalate) {
      ++escalations;
      at = i;
      CHECK(r.events[i]->flashing);
      CHECK_FALSE(r.events[i]->audio);
    }
  }
  CHECK(escalations == 1);
  CHECK(red_entries(r).size() == 1);
  // red entered at frame 2 (66 ms); first sample with more than 10000 ms held
  CHECK(static_cast<TimestampMs>(at) * 33 - 66 > 10000);
  CHECK(static_cast<TimestampMs>(at - 1) * 33 - 66 <= 10000);
  CHECK(r.levels.back() == AlertLevel::red_escalated);
}

TEST_CASE("red held exactly ten seconds does not escalate") {
  VigilanceConfig cfg;
  AlertMachine m;
  std::optional<AlertEvent> last;
  for (int i = 0; i < 3; ++i) m.step(scored(i, i * 100, 0.5), cfg);
  const auto red_at = *m.state().red_entered_at_ms;
  last = m.step(scored(3, red_at + 10000, 0.5), cfg);
  CHECK_FALSE(last.has_value());
  last = m.step(scored(4, red_at + 10001, 0.5), cfg);
  REQUIRE(last);
  CHECK(last->kind == AlertEventKind::escalate);
}

TEST_CASE("leaving red is immediate") {
  const auto r = feed({0.5, 0.5, 0.5, 0.2});
  REQUIRE(r.events[3]);
  CHECK(r.events[3]->kind == AlertEventKind::enter_yellow);
  const auto g = feed({0.5, 0.5, 0.5, 0.0});
  CHECK(g.events[3]->kind == AlertEventKind::enter_green);
}

TEST_CASE("green and yellow transitions are immediate and emitted once") {
  const auto r = feed({0.0, 0.2, 0.2, 0.0, 0.0});
  CHECK_FALSE(r.events[0].has_value());
  CHECK(r.events[1]->kind == AlertEventKind::enter_yellow);
  CHECK_FALSE(r.events[2].has_value());
  CHECK(r.events[3]->kind == AlertEventKind::enter_green);
  CHECK_FALSE(r.events[4].has_value());
}

TEST_CASE("degraded samples freeze the streak and report once per run") {
  const VigilanceConfig cfg;
  AlertMachine m;
  CHECK(m.step(scored(0, 0, 0.5), cfg)->kind == AlertEventKind::enter_yellow);
  m.step(scored(1, 33, 0.5), cfg);
  auto e = m.step(degraded(2, 66, DegradeReason::no_detections), cfg);
  REQUIRE(e);
  CHECK(e->kind == AlertEventKind::no_detections);
  CHECK(m.state().consecutive_red_frames == 2);
  CHECK_FALSE(m.step(degraded(3, 99, DegradeReason::no_detections), cfg));
  e = m.step(degraded(4, 132, DegradeReason::low_confidence), cfg);
  REQUIRE(e);
  CHECK(e->kind == AlertEventKind::model_degraded);
  e = m.step(scored(5, 165, 0.5), cfg);
  REQUIRE(e);
  CHECK(e->kind == AlertEventKind::enter_red);
  CHECK(m.state().consecutive_red_frames == 3);
}

TEST_CASE("recovering from a degraded run inside red is silent") {
  const VigilanceConfig cfg;
  AlertMachine m;
  for (int i = 0; i < 3; ++i) m.step(scored(i, i * 33, 0.5), cfg);
  CHECK(m.state().level == AlertLevel::red);
  m.step(degraded(3, 99, DegradeReason::backend_failure), cfg);
  CHECK(m.state().level == AlertLevel::no_detections);
  CHECK(m.state().held_level == AlertLevel::red);
  CHECK_FALSE(m.step(scored(4, 132, 0.5), cfg));
  CHECK(m.state().level == AlertLevel::red);
}

TEST_CASE("recovering from a degraded run announces the current colour") {
  const VigilanceConfig cfg;
  AlertMachine m;
  m.step(degraded(0, 0, DegradeReason::no_detections), cfg);
  const auto e = m.step(scored(1, 33, 0.0), cfg);
  REQUIRE(e);
  CHECK(e->kind == AlertEventKind::enter_green);
}

TEST_CASE("out-of-order samples are rejected") {
  const VigilanceConfig cfg;
  AlertMachine m;
  m.step(scored(0, 100, 0.1), cfg);
  CHECK_THROWS_AS(m.step(scored(1, 99, 0.1), cfg), AlertOrderingError);
  CHECK_NOTHROW(m.step(scored(1, 100, 0.1), cfg));
}

TEST_CASE("reset") {
  CHECK(reset_alert().level == AlertLevel::green);
  CHECK(reset_alert().consecutive_red_frames == 0);
  AlertMachine m;
  for (int i = 0; i < 3; ++i) m.step(scored(i, i, 0.9), {});
  CHECK(m.state().level == AlertLevel::red);
  m.reset();
  CHECK(m.state() == reset_alert());
  m.reset();
  CHECK(m.state() == reset_alert());
}

TEST_CASE("threshold changes apply from the next sample") {
  VigilanceConfig cfg;
  AlertMachine m;
  m.step(scored(0, 0, 0.5), cfg);
  m.step(scored(1, 33, 0.5), cfg);
  cfg.theta_s = 0.6;
  CHECK_FALSE(m.step(scored(2, 66, 0.5), cfg).has_value());
  CHECK(m.state().consecutive_red_frames == 0);
}

TEST_CASE("property: exhaustive debounce over length-10 sequences for several debounce values") {
  for (int debounce = 1; debounce <= 4; ++debounce) {
    VigilanceConfig cfg;
    cfg.debounce_frames = debounce;
    for (unsigned mask = 0; mask < (1u << 10); ++mask) {
      std::vector<double> s;
      std::vector<bool> above;
      for (int i = 0; i < 10; ++i) {
        const bool a = (mask >> i) & 1u;
        above.push_back(a);
        s.push_back(a ? 0.75 : ((i % 2) ? 0.3 : 0.05));
      }
      const auto r = feed(s, cfg);
      REQUIRE(red_entries(r) == oracle::expected_enter_red(above, debounce));
      for (std::size_t k : red_entries(r)) {
        for (int back = 0; back < debounce; ++back) CHECK(above[k - static_cast<std::size_t>(back)]);
      }
    }
  }
}

TEST_CASE("property: determinism and one event per frame") {
  gen::Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s;
    for (int i = 0; i < 200; ++i) s.push_back(rng.chance(0.5) ? rng.uniform(0.3, 1.0) : rng.uniform(0.0, 0.3));
    const auto a = feed(s);
    const auto b = feed(s);
    CHECK(a.events == b.events);
    for (std::size_t i = 0; i < a.levels.size(); ++i) {
      if (is_red(a.levels[i])) CHECK(s[i] > 0.3);
    }
  }
}

#include "doctest.h"
#include "generators.hpp"
#include "vigil/report.hpp"
#include "vigil/synthetic.hpp"
#include "vigil/vigilance.hpp"

using namespace vigil;

namespace {

MissionTrace trace_from(const std::vector<std::string>& phases, const std::string& id = "m") {
  SyntheticParams p;
  p.mission_id = id;
  p.seed = 4;
  for (const auto& s : phases) p.phases.push_back(parse_phase_spec(s));
  return generate_synthetic_trace(p);
}

}  // namespace

TEST_CASE("metrics for a field-shaped mission with a long warning window") {
  const auto t = trace_from({"10000:0", "53000:0.5:alert", "19000:1:running:flight"}, "row1");
  const auto r = compute_metrics(replay_mission(t, {}, std::nullopt));
  CHECK(r.mission_id == "row1");
  REQUIRE(r.warning_window_s);
  CHECK(*r.warning_window_s == doctest::Approx(53.0));
  CHECK(r.first_detection_ms == 10000);
  CHECK(r.flight_duration_ms == 19000.0);
  CHECK(r.adverse_behavior_ms == 53000.0);
  CHECK(r.mission_duration_ms == doctest::Approx(82000.0).epsilon(1e-3));
  REQUIRE(r.detections.size() == 1);
  CHECK(r.detections[0].true_positive);
  CHECK(r.detections[0].latency_ms == 0);
  CHECK(r.diagnostics.empty());
  CHECK(r.usable_accountings.empty());
}

TEST_CASE("late detection yields a negative window and a diagnostic") {
  const auto t = trace_from({"5000:0", "3000:0:running:flight", "2000:0.5:alert"});
  const auto r = compute_metrics(replay_mission(t, {}, std::nullopt));
  REQUIRE(r.warning_window_s);
  CHECK(*r.warning_window_s == doctest::Approx(-3.0));
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].find("missed warning") != std::string::npos);
}

TEST_CASE("undetected vigilance event is a false negative") {
  const auto t = trace_from({"2000:0", "2000:0.25:alert", "1000:0"});
  const auto r = compute_metrics(replay_mission(t, {}, std::nullopt));
  REQUIRE(r.detections.size() == 1);
  CHECK_FALSE(r.detections[0].true_positive);
  CHECK_FALSE(r.warning_window_s.has_value());
}

TEST_CASE("intervention reports carry all three accountings") {
  const auto t = trace_from({"2000:0", "3000:0.5", "8000:0"});
  const auto result = replay_mission(t, {}, InterventionModel{});
  const auto r = compute_metrics(result);
  REQUIRE(r.usable_accountings.size() == 3);
  const auto& cf = r.usable_accountings[0].second;
  const auto& unusable = r.usable_accountings[1].second;
  const auto& excluded = r.usable_accountings[2].second;
  CHECK(r.usable_accountings[0].first == InterventionAccounting::counterfactual);
  CHECK(cf.usable == t.frames.size() - 32);
  std::size_t intervened = 0;
  for (bool b : result.intervened) intervened += b;
  CHECK(excluded.excluded == intervened);
  CHECK(unusable.usable <= cf.usable);
  CHECK(r.adverse_behavior_ms == doctest::Approx(1067.0));
  CHECK(r.raw_adverse_ms == 3000.0);
  CHECK(r.intervention_count == 1);
}

TEST_CASE("a flight during an intervention still counts towards the warning window") {
  const auto t = trace_from({"2000:0", "4000:0.5:alert", "3000:1:running:flight", "4000:0"});
  const auto raw = compute_metrics(replay_mission(t, {}, std::nullopt));
  const auto with = compute_metrics(replay_mission(t, {}, InterventionModel{}));
  REQUIRE(with.warning_window_s);
  CHECK(*with.warning_window_s == *raw.warning_window_s);
  CHECK(*with.warning_window_s == doctest::Approx(4.0));
}

TEST_CASE("comparison report renders CSV and markdown") {
  const auto a = replay_mission(trace_from({"10000:0", "5000:0.5:alert", "2000:1:running:flight"}, "a"), {},
                                std::nullopt);
  const auto b = replay_mission(trace_from({"20000:0", "7000:0.5:alert", "4000:1:running:flight"}, "b"), {},
                                std::nullopt);
  const auto rep = comparison_report({{"first", a}, {"second, quoted", b}});
  REQUIRE(rep.rows.size() == 2);
  CHECK(*rep.mean_warning_window_s == doctest::Approx(6.0));
  CHECK(*rep.mean_first_detection_ms == doctest::Approx(15000.0));
  CHECK(*rep.mean_flight_duration_ms == doctest::Approx(3000.0));
  const auto csv = rep.to_csv();
  CHECK(csv.find("label,mission_id,usable_total_pct") == 0);
  CHECK(csv.find("\"second, quoted\"") != std::string::npos);
  CHECK(csv.find(",00:05,") != std::string::npos);
  const auto md = rep.to_markdown();
  CHECK(md.find("| Mean |") != std::string::npos);
  const auto j = rep.to_json();
  CHECK(j["rows"].size() == 2);
  CHECK(j["rows"][1]["label"] == "second, quoted");
}

TEST_CASE("single calm result gives a one-row table with zero adverse time") {
  const auto rep = comparison_report({{"only", replay_mission(trace_from({"3000:0"}), {}, std::nullopt)}});
  CHECK(rep.rows.size() == 1);
  CHECK(rep.to_markdown().find("| Mean |") == std::string::npos);
  CHECK(rep.to_markdown().find("| only | 100.0 | 100.0 | 00:00 |") != std::string::npos);
  CHECK_THROWS_AS(comparison_report({}), std::invalid_argument);
}

TEST_CASE("property: every replay result yields a report") {
  gen::Rng rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = gen::trace(rng, rng.integer(0, 60), 5);
    std::optional<InterventionModel> m;
    if (rng.chance(0.5)) m = InterventionModel{};
    const auto r = compute_metrics(replay_mission(t, {}, m));
    CHECK(r.usable_total_pct >= 0.0);
    CHECK(r.usable_total_pct <= 100.0);
    CHECK(r.adverse_behavior_ms <= r.raw_adverse_ms);
    const bool has_flight = first_flight_start(t.events).has_value();
    bool crossed = false;
    for (const auto& f : t.frames) {
      const auto s = compute_vigilance(f, {});
      crossed |= s.exceeds(0.3);
    }
    CHECK(r.warning_window_s.has_value() == (has_flight && crossed));
    CHECK_NOTHROW(to_json(r).dump());
  }
}

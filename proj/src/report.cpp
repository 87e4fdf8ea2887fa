#include "vigil/report.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "vigil/json_codec.hpp"

namespace vigil {

namespace {

using nlohmann::json;

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string opt_fixed1(const std::optional<double>& v) { return v ? fixed1(*v) : ""; }

json usable_json(const UsableFrames& u) {
  json j{{"total_frames", u.total_frames},
         {"usable", u.usable},
         {"no_confident_detection", u.no_confident_detection},
         {"above_threshold", u.above_threshold},
         {"forced_unusable", u.forced_unusable},
         {"excluded", u.excluded},
         {"sampling_frames", u.sampling_frames},
         {"sampling_usable", u.sampling_usable},
         {"total_pct", round_pct(u.total_pct())}};
  const auto s = u.sampling_pct();
  j["sampling_pct"] = s ? json(round_pct(*s)) : json(nullptr);
  return j;
}

template <typename T>
std::optional<double> mean_of(const std::vector<ComparisonRow>& rows, T get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (const auto v = get(r.report)) {
      sum += static_cast<double>(*v);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string_view to_string(InterventionAccounting accounting) {
  switch (accounting) {
    case InterventionAccounting::counterfactual: return "counterfactual";
    case InterventionAccounting::intervened_unusable: return "intervened_unusable";
    case InterventionAccounting::intervened_excluded: return "intervened_excluded";
  }
  return "counterfactual";
}

MetricsReport compute_metrics(const ReplayResult& result) {
  MetricsReport r;
  const auto& samples = result.samples;
  const double theta = result.config.theta_s;
  const double interval = result.metadata.frame_interval_ms();
  r.mission_id = result.metadata.mission_id;
  r.theta_s = theta;
  r.intervention = result.intervention;

  r.warning_window_s = warning_window(samples, result.events, theta);
  if (const auto first = first_exceedance_ms(samples, theta)) {
    r.first_detection_ms = *first - samples.front().timestamp_ms;
  }
  if (r.warning_window_s && *r.warning_window_s < 0.0) {
    r.diagnostics.push_back("threshold first exceeded " + fixed1(-*r.warning_window_s) +
                            " s after flight onset (missed warning)");
  }

  if (result.intervention) {
    const auto n = samples.size();
    auto calm = std::make_unique<bool[]>(n);
    auto intervened = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
      calm[i] = samples[i].exceeds(theta) && !result.counterfactual_adverse[i];
      intervened[i] = result.intervened[i];
    }
    const std::span<const bool> calm_span(calm.get(), n);
    const std::span<const bool> int_span(intervened.get(), n);
    r.usable_accountings.emplace_back(
        InterventionAccounting::counterfactual,
        usable_frames(samples, result.metadata, theta, calm_span, {}, {}));
    r.usable_accountings.emplace_back(
        InterventionAccounting::intervened_unusable,
        usable_frames(samples, result.metadata, theta, {}, {}, int_span));
    r.usable_accountings.emplace_back(
        InterventionAccounting::intervened_excluded,
        usable_frames(samples, result.metadata, theta, {}, int_span, {}));
    r.usable = r.usable_accountings.front().second;
    r.adverse_behavior_ms = result.counterfactual_adverse_ms;
  } else {
    r.usable = usable_frames(samples, result.metadata, theta, {}, {}, {});
    r.adverse_behavior_ms = result.raw_adverse_ms;
  }
  r.usable_total_pct = round_pct(r.usable.total_pct());
  if (const auto s = r.usable.sampling_pct()) r.usable_sampling_pct = round_pct(*s);
  r.raw_adverse_ms = result.raw_adverse_ms;

  if (!samples.empty()) {
    r.mission_duration_ms =
        static_cast<double>(samples.back().timestamp_ms - samples.front().timestamp_ms) +
        interval;
  }
  for (const auto& span : result.metadata.sampling_phases) {
    r.sampling_duration_ms += static_cast<double>(span.duration());
  }

  for (const auto& e : result.events) {
    if (e.kind == GroundTruthKind::flight_response) {
      r.flight_duration_ms += static_cast<double>(e.end_ms - e.start_ms);
      continue;
    }
    DetectionOutcome d{e, false, std::nullopt};
    for (const auto& s : samples) {
      if (s.timestamp_ms < e.start_ms) continue;
      if (s.timestamp_ms >= e.end_ms) break;
      if (s.exceeds(theta)) {
        d.true_positive = true;
        d.latency_ms = s.timestamp_ms - e.start_ms;
        break;
      }
    }
    if (!d.true_positive) {
      r.diagnostics.push_back("vigilance event at " + std::to_string(e.start_ms) +
                              " ms not detected");
    }
    r.detections.push_back(std::move(d));
  }
  r.alert_count = result.alert_events.size();
  r.intervention_count = result.interventions.size();
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  json j;
  j["mission_id"] = r.mission_id;
  j["theta_S"] = r.theta_s;
  j["intervention"] = r.intervention ? to_json(*r.intervention) : json(nullptr);
  j["warning_window_s"] = r.warning_window_s ? json(*r.warning_window_s) : json(nullptr);
  j["first_detection_ms"] = r.first_detection_ms ? json(*r.first_detection_ms) : json(nullptr);
  j["usable_frames_pct"] = {
      {"total", r.usable_total_pct},
      {"sampling_phase", r.usable_sampling_pct ? json(*r.usable_sampling_pct) : json(nullptr)}};
  j["usable_frames"] = usable_json(r.usable);
  json acc = json::object();
  for (const auto& [kind, u] : r.usable_accountings) acc[std::string(to_string(kind))] = usable_json(u);
  j["usable_accountings"] = acc;
  j["adverse_behavior_ms"] = r.adverse_behavior_ms;
  j["raw_adverse_ms"] = r.raw_adverse_ms;
  j["mission_duration_ms"] = {{"total", r.mission_duration_ms},
                              {"sampling", r.sampling_duration_ms}};
  j["flight_duration_ms"] = r.flight_duration_ms;
  json det = json::array();
  for (const auto& d : r.detections) {
    det.push_back({{"start_ms", d.event.start_ms},
                   {"end_ms", d.event.end_ms},
                   {"true_positive", d.true_positive},
                   {"latency_ms", d.latency_ms ? json(*d.latency_ms) : json(nullptr)}});
  }
  j["detection_true_positive"] = det;
  j["alert_count"] = r.alert_count;
  j["intervention_count"] = r.intervention_count;
  j["diagnostics"] = r.diagnostics;
  return j;
}

ComparisonReport comparison_report(
    const std::vector<std::pair<std::string, ReplayResult>>& results) {
  if (results.empty()) throw std::invalid_argument("comparison report needs at least one result");
  ComparisonReport out;
  for (const auto& [label, result] : results) out.rows.push_back({label, compute_metrics(result)});
  out.mean_warning_window_s =
      mean_of(out.rows, [](const MetricsReport& r) { return r.warning_window_s; });
  out.mean_first_detection_ms =
      mean_of(out.rows, [](const MetricsReport& r) { return r.first_detection_ms; });
  out.mean_flight_duration_ms = mean_of(out.rows, [](const MetricsReport& r) {
    return r.flight_duration_ms > 0.0 ? std::optional<double>(r.flight_duration_ms)
                                      : std::nullopt;
  });
  return out;
}

std::string ComparisonReport::to_csv() const {
  std::ostringstream os;
  os << "label,mission_id,usable_total_pct,usable_sampling_pct,adverse,adverse_ms,"
        "mission_time,sampling_time,warning_window_s,first_detection,flight_duration_s\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    os << csv_field(row.label) << ',' << csv_field(r.mission_id) << ','
       << fixed1(r.usable_total_pct) << ',' << opt_fixed1(r.usable_sampling_pct) << ','
       << format_mmss(r.adverse_behavior_ms) << ',' << fixed1(r.adverse_behavior_ms) << ','
       << format_mmss(r.mission_duration_ms) << ',' << format_mmss(r.sampling_duration_ms)
       << ',' << opt_fixed1(r.warning_window_s) << ','
       << (r.first_detection_ms ? format_mmss(static_cast<double>(*r.first_detection_ms)) : "")
       << ',' << fixed1(r.flight_duration_ms / 1000.0) << '\n';
  }
  return os.str();
}

std::string ComparisonReport::to_markdown() const {
  std::ostringstream os;
  os << "| Method | Usable (total %) | Usable (sampling %) | Adverse | Mission | Sampling "
        "| Warning (s) | First detection | Flight (s) |\n";
  os << "|---|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    os << "| " << row.label << " | " << fixed1(r.usable_total_pct) << " | "
       << (r.usable_sampling_pct ? fixed1(*r.usable_sampling_pct) : "-") << " | "
       << format_mmss(r.adverse_behavior_ms) << " | " << format_mmss(r.mission_duration_ms)
       << " | " << format_mmss(r.sampling_duration_ms) << " | "
       << (r.warning_window_s ? fixed1(*r.warning_window_s) : "-") << " | "
       << (r.first_detection_ms ? format_mmss(static_cast<double>(*r.first_detection_ms)) : "-")
       << " | " << fixed1(r.flight_duration_ms / 1000.0) << " |\n";
  }
  if (rows.size() > 1) {
    os << "| Mean | | | | | | "
       << (mean_warning_window_s ? fixed1(*mean_warning_window_s) : "-") << " | "
       << (mean_first_detection_ms ? format_mmss(*mean_first_detection_ms) : "-") << " | "
       << (mean_flight_duration_ms ? fixed1(*mean_flight_duration_ms / 1000.0) : "-")
       << " |\n";
  }
  for (const auto& row : rows) {
    for (const auto& d : row.report.diagnostics) os << "\n> " << row.label << ": " << d;
    if (row.report.intervention) {
      os << "\n> " << row.label << ": counterfactual assumes de-escalation "
         << row.report.intervention->deescalation_delay_ms << " ms after engagement";
    }
  }
  return os.str();
}

nlohmann::json ComparisonReport::to_json() const {
  json j{{"v", 1}, {"kind", "comparison_report"}};
  json rows_json = json::array();
  for (const auto& row : rows) {
    auto r = vigil::to_json(row.report);
    r["label"] = row.label;
    rows_json.push_back(std::move(r));
  }
  j["rows"] = rows_json;
  j["mean_warning_window_s"] = mean_warning_window_s ? json(*mean_warning_window_s) : json(nullptr);
  j["mean_first_detection_ms"] =
      mean_first_detection_ms ? json(*mean_first_detection_ms) : json(nullptr);
  j["mean_flight_duration_ms"] =
      mean_flight_duration_ms ? json(*mean_flight_duration_ms) : json(nullptr);
  return j;
}

}  // namespace vigil

#include "vigil/trace_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "vigil/json_codec.hpp"

namespace vigil {

namespace {

using nlohmann::json;

constexpr std::size_t kHeaderLine = 1;

Diagnostic make_diag(TraceErrorKind kind, std::optional<std::size_t> line, std::string field,
                     std::string message) {
  return Diagnostic{Severity::error, kind, line, std::move(field), std::move(message)};
}

void check_metadata(const MissionMetadata& meta, std::vector<Diagnostic>& out) {
  if (!(meta.fps > 0.0)) {
    out.push_back(make_diag(TraceErrorKind::invariant, kHeaderLine, "metadata.fps",
                            "fps must be positive"));
  }
  if (meta.herd_size < 1) {
    out.push_back(make_diag(TraceErrorKind::invariant, kHeaderLine, "metadata.herd_size",
                            "herd_size must be at least 1"));
  }
  TimestampMs prev_end = 0;
  for (std::size_t i = 0; i < meta.sampling_phases.size(); ++i) {
    const auto& p = meta.sampling_phases[i];
    const std::string field = "metadata.sampling_phases[" + std::to_string(i) + "]";
    if (p.start_ms < 0 || p.start_ms >= p.end_ms) {
      out.push_back(make_diag(TraceErrorKind::invariant, kHeaderLine, field,
                              "sampling phase needs 0 <= start_ms < end_ms"));
    } else if (p.start_ms < prev_end) {
      out.push_back(make_diag(TraceErrorKind::ordering, kHeaderLine, field,
                              "sampling phases must be sorted and disjoint"));
    }
    prev_end = std::max(prev_end, p.end_ms);
  }
}

// Checks one frame in isolation and against its predecessor.
void check_frame(const FrameObservation& frame, const FrameObservation* previous,
                 const MissionMetadata& meta, std::size_t line, std::vector<Diagnostic>& out) {
  if (previous) {
    if (frame.frame_index <= previous->frame_index) {
      out.push_back(make_diag(TraceErrorKind::ordering, line, "frame_index",
                              "frame_index " + std::to_string(frame.frame_index) +
                                  " does not increase (previous " +
                                  std::to_string(previous->frame_index) + ")"));
    }
    if (frame.timestamp_ms < previous->timestamp_ms) {
      out.push_back(make_diag(TraceErrorKind::ordering, line, "timestamp_ms",
                              "timestamp_ms decreases"));
    }
  }
  if (frame.timestamp_ms < 0) {
    out.push_back(make_diag(TraceErrorKind::invariant, line, "timestamp_ms",
                            "timestamp_ms must be non-negative"));
  }
  if (meta.fps > 0.0) {
    const double interval = meta.frame_interval_ms();
    const double expected = static_cast<double>(frame.frame_index) * interval;
    if (std::abs(static_cast<double>(frame.timestamp_ms) - expected) > interval + 0.5) {
      out.push_back(make_diag(TraceErrorKind::invariant, line, "timestamp_ms",
                              "timestamp disagrees with frame_index at metadata fps by more "
                              "than one frame"));
    }
  }
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < frame.individuals.size(); ++i) {
    const auto& ind = frame.individuals[i];
    const std::string prefix = "individuals[" + std::to_string(i) + "]";
    if (!ids.insert(ind.individual_id).second) {
      out.push_back(make_diag(TraceErrorKind::invariant, line, prefix + ".id",
                              "duplicate individual id '" + ind.individual_id + "'"));
    }
    if (!(ind.detection_confidence >= 0.0 && ind.detection_confidence <= 1.0)) {
      out.push_back(make_diag(TraceErrorKind::invariant, line, prefix + ".p",
                              "detection confidence outside [0,1]"));
    }
    if (!(ind.behavior_confidence >= 0.0 && ind.behavior_confidence <= 1.0)) {
      out.push_back(make_diag(TraceErrorKind::invariant, line, prefix + ".q",
                              "behavior confidence outside [0,1]"));
    }
    if (!ind.bbox.inside_unit_square()) {
      out.push_back(make_diag(TraceErrorKind::invariant, line, prefix + ".bbox",
                              "bbox must have positive size and lie inside the unit square"));
    }
  }
}

void check_events(const MissionTrace& trace, std::vector<Diagnostic>& out) {
  // The last frame covers one nominal interval, so events may end there.
  TimestampMs horizon = 0;
  if (!trace.frames.empty()) {
    horizon = trace.frames.back().timestamp_ms;
    if (trace.metadata.fps > 0.0) {
      horizon += static_cast<TimestampMs>(std::ceil(trace.metadata.frame_interval_ms()));
    }
  }
  std::vector<TimeSpan> flights;
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const auto& e = trace.events[i];
    const std::string field = "events[" + std::to_string(i) + "]";
    if (e.start_ms >= e.end_ms) {
      out.push_back(make_diag(TraceErrorKind::invariant, kHeaderLine, field,
                              "event start_ms must precede end_ms"));
      continue;
    }
    if (e.start_ms < 0 || e.end_ms > horizon) {
      out.push_back(make_diag(TraceErrorKind::invariant, kHeaderLine, field,
                              "event interval lies outside the recorded frames"));
    }
    if (e.kind == GroundTruthKind::flight_response) flights.push_back({e.start_ms, e.end_ms});
  }
  std::sort(flights.begin(), flights.end(),
            [](const TimeSpan& a, const TimeSpan& b) { return a.start_ms < b.start_ms; });
  for (std::size_t i = 1; i < flights.size(); ++i) {
    if (flights[i].start_ms < flights[i - 1].end_ms) {
      out.push_back(make_diag(TraceErrorKind::invariant, kHeaderLine, "events",
                              "FLIGHT_RESPONSE intervals overlap"));
      break;
    }
  }
}

[[noreturn]] void throw_schema(std::size_t line, const std::string& field,
                               const std::string& message) {
  throw TraceError(make_diag(TraceErrorKind::schema, line, field, message));
}

json parse_line(const std::string& text, std::size_t line) {
  try {
    return json::parse(text);
  } catch (const json::exception& ex) {
    throw_schema(line, "", std::string("malformed JSON: ") + ex.what());
  }
}

}  // namespace

std::string_view to_string(TraceErrorKind kind) {
  switch (kind) {
    case TraceErrorKind::io: return "io";
    case TraceErrorKind::schema: return "schema";
    case TraceErrorKind::ordering: return "ordering";
    case TraceErrorKind::invariant: return "invariant";
  }
  return "invariant";
}

std::string_view to_string(Severity severity) {
  return severity == Severity::error ? "error" : "warning";
}

std::string Diagnostic::describe() const {
  std::ostringstream os;
  os << to_string(severity) << " [" << to_string(kind) << "]";
  if (line) os << " line " << *line;
  if (!field.empty()) os << " field '" << field << "'";
  os << ": " << message;
  return os.str();
}

TraceReader::TraceReader(std::istream& in) : in_(in) {
  std::string text;
  if (!std::getline(in_, text)) throw_schema(1, "", "missing header line");
  line_ = 1;
  const json header = parse_line(text, line_);
  try {
    if (!header.is_object()) throw codec::JsonFieldError("header", "expected a JSON object");
    const auto version = codec::get_int(header, "v");
    if (version != kTraceSchemaVersion) {
      throw codec::JsonFieldError("v", "unsupported schema version " + std::to_string(version));
    }
    metadata_ = codec::metadata_from_json(codec::require(header, "metadata"));
    if (auto it = header.find("events"); it != header.end()) {
      if (!it->is_array()) throw codec::JsonFieldError("events", "expected an array");
      for (const auto& e : *it) events_.push_back(codec::event_from_json(e));
    }
    for (auto it = header.begin(); it != header.end(); ++it) {
      if (it.key() != "v" && it.key() != "metadata" && it.key() != "events") {
        extras_[it.key()] = it.value();
      }
    }
  } catch (const codec::JsonFieldError& ex) {
    throw_schema(line_, ex.field(), ex.what());
  } catch (const json::exception& ex) {
    throw_schema(line_, "", ex.what());
  }
  std::vector<Diagnostic> diags;
  check_metadata(metadata_, diags);
  if (!diags.empty()) throw TraceError(diags.front());
}

std::optional<FrameObservation> TraceReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = parse_line(text, line_);
    FrameObservation frame;
    try {
      frame = codec::frame_from_json(j);
    } catch (const codec::JsonFieldError& ex) {
      throw_schema(line_, ex.field(), ex.what());
    } catch (const json::exception& ex) {
      throw_schema(line_, "", ex.what());
    }
    std::vector<Diagnostic> diags;
    check_frame(frame, previous_ ? &*previous_ : nullptr, metadata_, line_, diags);
    if (!diags.empty()) throw TraceError(diags.front());
    previous_ = frame;
    return frame;
  }
  if (in_.bad()) {
    throw TraceError(make_diag(TraceErrorKind::io, line_, "", "read failure"));
  }
  return std::nullopt;
}

MissionTrace parse_trace(std::istream& in) {
  TraceReader reader(in);
  MissionTrace trace;
  trace.metadata = reader.metadata();
  trace.events = reader.events();
  trace.extras = reader.header_extras();
  while (auto frame = reader.next()) trace.frames.push_back(std::move(*frame));
  std::vector<Diagnostic> diags;
  check_events(trace, diags);
  if (!diags.empty()) throw TraceError(diags.front());
  return trace;
}

MissionTrace parse_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw TraceError(make_diag(TraceErrorKind::io, std::nullopt, "",
                               "cannot open " + path.string()));
  }
  return parse_trace(in);
}

void write_trace(const MissionTrace& trace, std::ostream& out) {
  json header = {{"v", kTraceSchemaVersion}, {"metadata", codec::to_json(trace.metadata)}};
  json events = json::array();
  for (const auto& e : trace.events) events.push_back(codec::to_json(e));
  header["events"] = std::move(events);
  if (trace.extras.is_object()) {
    for (auto it = trace.extras.begin(); it != trace.extras.end(); ++it) {
      if (!header.contains(it.key())) header[it.key()] = it.value();
    }
  }
  out << header.dump() << '\n';
  for (const auto& frame : trace.frames) out << codec::to_json(frame).dump() << '\n';
}

void write_trace(const MissionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw TraceError(make_diag(TraceErrorKind::io, std::nullopt, "",
                               "cannot open " + path.string() + " for writing"));
  }
  write_trace(trace, out);
  out.flush();
  if (!out) {
    throw TraceError(make_diag(TraceErrorKind::io, std::nullopt, "",
                               "write failure on " + path.string()));
  }
}

std::vector<Diagnostic> validate_trace(const MissionTrace& trace) {
  std::vector<Diagnostic> diags;
  check_metadata(trace.metadata, diags);
  for (std::size_t i = 0; i < trace.frames.size(); ++i) {
    check_frame(trace.frames[i], i == 0 ? nullptr : &trace.frames[i - 1], trace.metadata,
                i + 2, diags);
  }
  check_events(trace, diags);
  return diags;
}

}  // namespace vigil

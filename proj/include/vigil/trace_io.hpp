#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vigil/trace.hpp"

// Mission trace interchange format (`.vtrace.jsonl`): one header object on the
// first line (schema version, metadata, ground-truth events), then one frame
// object per line. See docs/trace-format.md.
namespace vigil {

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr std::string_view kTraceExtension = ".vtrace.jsonl";

enum class TraceErrorKind : std::uint8_t { io, schema, ordering, invariant };
enum class Severity : std::uint8_t { error, warning };

std::string_view to_string(TraceErrorKind kind);
std::string_view to_string(Severity severity);

struct Diagnostic {
  Severity severity = Severity::error;
  TraceErrorKind kind = TraceErrorKind::invariant;
  /// 1-based line in the file representation (header is line 1).
  std::optional<std::size_t> line;
  std::string field;
  std::string message;

  std::string describe() const;
};

class TraceError : public std::runtime_error {
 public:
  explicit TraceError(Diagnostic diag)
      : std::runtime_error(diag.describe()), diagnostic_(std::move(diag)) {}

  TraceErrorKind kind() const { return diagnostic_.kind; }
  std::optional<std::size_t> line() const { return diagnostic_.line; }
  const std::string& field() const { return diagnostic_.field; }
  const Diagnostic& diagnostic() const { return diagnostic_; }

 private:
  Diagnostic diagnostic_;
};

/// Incremental reader: parses the header eagerly, then one frame per call.
/// Per-frame invariants and ordering are checked as frames arrive; checks that
/// need the whole trace (event bounds) are left to validate_trace.
class TraceReader {
 public:
  explicit TraceReader(std::istream& in);

  const MissionMetadata& metadata() const { return metadata_; }
  const std::vector<GroundTruthEvent>& events() const { return events_; }
  const Extras& header_extras() const { return extras_; }

  /// Next frame, or nullopt at end of input. Throws TraceError.
  std::optional<FrameObservation> next();
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  MissionMetadata metadata_;
  std::vector<GroundTruthEvent> events_;
  Extras extras_;
  std::optional<FrameObservation> previous_;
  std::size_t line_ = 0;
};

/// Reads and fully validates a trace. Throws TraceError naming line and field.
MissionTrace parse_trace(const std::filesystem::path& path);
MissionTrace parse_trace(std::istream& in);

/// Throws TraceError (kind io) when the file cannot be written.
void write_trace(const MissionTrace& trace, const std::filesystem::path& path);
void write_trace(const MissionTrace& trace, std::ostream& out);

/// Every invariant violation in the trace; empty iff the trace is valid.
std::vector<Diagnostic> validate_trace(const MissionTrace& trace);

}  // namespace vigil

#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "vigil/alerting.hpp"
#include "vigil/backend.hpp"
#include "vigil/replay.hpp"
#include "vigil/trace.hpp"
#include "vigil/types.hpp"

namespace vigil {

/// Default per-frame latency budget (30 fps).
inline constexpr double kDefaultBudgetMs = 33.0;
/// Stride applied to CPU-class backends when no policy is given.
inline constexpr int kCpuDefaultStride = 40;
inline constexpr int kMaxAdaptiveStride = 120;

/// VIGIL_BUDGET_MS when set to a positive number, otherwise `fallback`.
double budget_from_env(double fallback = kDefaultBudgetMs);

enum class SamplingMode : std::uint8_t { every_frame, stride, adaptive };

struct SamplingPolicy {
  SamplingMode mode = SamplingMode::every_frame;
  int stride = 1;

  static SamplingPolicy every_frame() { return {}; }
  static SamplingPolicy fixed_stride(int k);
  static SamplingPolicy adaptive() { return {SamplingMode::adaptive, 1}; }
  /// EVERY_FRAME for GPU-class and trace backends, STRIDE(40) for CPU-class.
  static SamplingPolicy for_backend(const BackendCapability& capability);
};

struct LatencyRecord {
  FrameIndex frame_index = 0;
  double queue_ms = 0.0;
  double detect_ms = 0.0;
  double behave_ms = 0.0;
  double score_ms = 0.0;
  double alert_ms = 0.0;
  /// Dequeue to alert decision; excludes queue wait.
  double total_ms = 0.0;
  double budget_ms = kDefaultBudgetMs;
  bool met_slo = true;
};

/// Smallest stride that keeps the backend within the frame rate: 1 while the
/// mean total latency fits the budget, otherwise ceil(mean / frame interval),
/// capped at kMaxAdaptiveStride.
int adaptive_stride(std::span<const LatencyRecord> window, double frame_interval_ms,
                    double budget_ms = kDefaultBudgetMs);

enum class SkipReason : std::uint8_t { stride, backpressure };

std::string_view to_string(SkipReason reason);

/// Frames not processed, coalesced. `count` may be smaller than the index
/// range when frames of another kind were interleaved.
struct SkipMarker {
  FrameIndex first = 0;
  FrameIndex last = 0;
  std::size_t count = 0;
  SkipReason reason = SkipReason::stride;
};

struct FrameTick {
  FrameIndex frame_index = 0;
  TimestampMs timestamp_ms = 0;
  std::chrono::steady_clock::time_point arrival{};
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Blocks until the next frame is due; nullopt at end of stream.
  virtual std::optional<FrameTick> next() = 0;
  /// Real-time sources never wait for the consumer; the pipeline drops the
  /// oldest queued frame instead.
  virtual bool realtime() const = 0;
  virtual double frame_interval_ms() const = 0;
  /// Makes next() return nullopt promptly.
  virtual void cancel() {}
};

/// Frame ticks for every frame of a trace, paced by its timestamps.
class TraceFrameSource final : public FrameSource {
 public:
  TraceFrameSource(std::shared_ptr<const MissionTrace> trace, ReplaySpeed speed);

  std::optional<FrameTick> next() override;
  bool realtime() const override { return !unpaced_; }
  double frame_interval_ms() const override;
  void cancel() override { cancelled_ = true; }

  /// Takes effect from the next frame without a jump in mission time. Throws
  /// std::invalid_argument when switching between paced and unpaced.
  void set_speed(ReplaySpeed speed);
  double speed_multiplier() const { return multiplier_; }

 private:
  std::shared_ptr<const MissionTrace> trace_;
  ReplayClock clock_;
  bool unpaced_;
  std::atomic<double> multiplier_;
  std::atomic<bool> speed_changed_{false};
  std::size_t position_ = 0;
  bool started_ = false;
  std::atomic<bool> cancelled_{false};
};

/// A camera clock: frame indices 0, 1, ... at a fixed rate, optionally bounded.
class CameraFrameSource final : public FrameSource {
 public:
  CameraFrameSource(double fps, std::optional<FrameIndex> frame_count = std::nullopt);

  std::optional<FrameTick> next() override;
  bool realtime() const override { return true; }
  double frame_interval_ms() const override { return 1000.0 / fps_; }
  void cancel() override { cancelled_ = true; }

 private:
  double fps_;
  std::optional<FrameIndex> count_;
  FrameIndex next_ = 0;
  std::chrono::steady_clock::time_point start_{};
  std::atomic<bool> cancelled_{false};
};

struct PipelineOutput {
  FrameObservation frame;
  VigilanceSample sample;
  std::optional<AlertEvent> event;
  AlertLevel level = AlertLevel::green;
  LatencyRecord latency;
  std::optional<std::string> backend_error;
};

struct PipelineStats {
  std::size_t frames_seen = 0;
  std::size_t processed = 0;
  std::size_t skipped_stride = 0;
  std::size_t dropped_backpressure = 0;
  std::size_t backend_failures = 0;
  std::size_t slo_misses = 0;
  /// Queued plus in-processing frames, maximum over the run.
  std::size_t max_in_flight = 0;
  /// Queue entries (frames and skip markers), maximum over the run.
  std::size_t max_queue_entries = 0;
  /// Per processed frame: wall time outside the two inference stages,
  /// including scoring, alerting, bookkeeping and sink delivery.
  double mean_overhead_ms = 0.0;
  double max_overhead_ms = 0.0;
  double wall_seconds = 0.0;
  /// Stride in force after each processed frame (adaptive policy).
  std::vector<int> stride_history;
};

class PipelineSink {
 public:
  virtual ~PipelineSink() = default;
  virtual void on_frame(const PipelineOutput& output) = 0;
  virtual void on_skip(const SkipMarker&) {}
  virtual void on_finish(const PipelineStats&) {}
};

struct PipelineOptions {
  VigilanceConfig config;
  SamplingPolicy policy;
  double budget_ms = kDefaultBudgetMs;
  /// Frames queued plus in processing.
  std::size_t buffer = 4;
  std::size_t adaptive_window = 8;
  std::chrono::milliseconds inference_timeout{2000};
  /// Called on the worker thread before each processed frame; may change the
  /// configuration that frame is scored with.
  std::function<void(VigilanceConfig&)> between_frames;
};

/// Streams frames from `source` through `backend`, scoring and alerting each
/// processed frame in order. Samples reach the sinks in strictly increasing
/// frame order. A backend failure yields a degraded sample, never a gap.
///
/// Throws std::invalid_argument for an invalid configuration.
PipelineStats run_pipeline(FrameSource& source, InferenceBackend& backend,
                           const PipelineOptions& options, std::span<PipelineSink* const> sinks);

/// Collects everything into memory.
class CollectingSink final : public PipelineSink {
 public:
  void on_frame(const PipelineOutput& output) override { outputs.push_back(output); }
  void on_skip(const SkipMarker& marker) override { skips.push_back(marker); }
  void on_finish(const PipelineStats& s) override { stats = s; }

  std::vector<PipelineOutput> outputs;
  std::vector<SkipMarker> skips;
  PipelineStats stats;
};

}  // namespace vigil

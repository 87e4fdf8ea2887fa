#include "vigil/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <iterator>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "vigil/vigilance.hpp"

namespace vigil {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

// Sleeps towards `due` in short slices so cancellation stays responsive.
bool sleep_until_due(Clock::time_point due, const std::atomic<bool>& cancelled) {
  constexpr auto slice = std::chrono::milliseconds(50);
  for (;;) {
    if (cancelled) return false;
    const auto now = Clock::now();
    if (now >= due) return true;
    std::this_thread::sleep_for(std::min<Clock::duration>(due - now, slice));
  }
}

struct Entry {
  bool is_frame = true;
  FrameTick tick;
  SkipMarker skip;
};

struct Shared {
  std::mutex mutex;
  std::condition_variable changed;
  std::deque<Entry> queue;
  std::size_t queued_frames = 0;
  bool busy = false;
  bool source_done = false;
  bool stopping = false;
  int stride = 1;
  std::optional<FrameIndex> last_admitted;
  std::size_t frames_seen = 0;
  std::size_t skipped_stride = 0;
  std::size_t dropped = 0;
  std::size_t max_in_flight = 0;
  std::size_t max_entries = 0;

  // Caller holds the lock.
  void push_skip(FrameIndex index, SkipReason reason) {
    if (!queue.empty() && !queue.back().is_frame && queue.back().skip.reason == reason) {
      auto& s = queue.back().skip;
      s.last = index;
      ++s.count;
    } else {
      Entry e;
      e.is_frame = false;
      e.skip = {index, index, 1, reason};
      queue.push_back(e);
    }
    if (reason == SkipReason::stride) {
      ++skipped_stride;
    } else {
      ++dropped;
    }
    max_entries = std::max(max_entries, queue.size());
  }

  // Turns the oldest queued frame into a backpressure skip. Caller holds the lock.
  void drop_oldest() {
    for (auto it = queue.begin(); it != queue.end(); ++it) {
      if (!it->is_frame) continue;
      const auto index = it->tick.frame_index;
      it->is_frame = false;
      it->skip = {index, index, 1, SkipReason::backpressure};
      --queued_frames;
      ++dropped;
      auto same = [](const Entry& e) { return !e.is_frame && e.skip.reason == SkipReason::backpressure; };
      if (auto next = std::next(it); next != queue.end() && same(*next)) {
        it->skip.last = next->skip.last;
        it->skip.count += next->skip.count;
        queue.erase(next);
      }
      if (it != queue.begin() && same(*std::prev(it))) {
        auto prev = std::prev(it);
        prev->skip.last = it->skip.last;
        prev->skip.count += it->skip.count;
        queue.erase(it);
      }
      return;
    }
  }
};

bool admit(Shared& shared, const SamplingPolicy& policy, FrameIndex index) {
  switch (policy.mode) {
    case SamplingMode::every_frame: return true;
    case SamplingMode::stride: return index % static_cast<FrameIndex>(policy.stride) == 0;
    case SamplingMode::adaptive:
      return !shared.last_admitted ||
             index - *shared.last_admitted >= static_cast<FrameIndex>(shared.stride);
  }
  return true;
}

void produce(FrameSource& source, const PipelineOptions& options, Shared& shared) {
  const bool realtime = source.realtime();
  while (auto tick = source.next()) {
    std::unique_lock lock(shared.mutex);
    if (shared.stopping) break;
    ++shared.frames_seen;
    if (!admit(shared, options.policy, tick->frame_index)) {
      shared.push_skip(tick->frame_index, SkipReason::stride);
      shared.changed.notify_all();
      continue;
    }
    if (realtime) {
      if (shared.queued_frames + (shared.busy ? 1 : 0) >= options.buffer) {
        if (shared.queued_frames == 0) {
          shared.push_skip(tick->frame_index, SkipReason::backpressure);
          shared.changed.notify_all();
          continue;
        }
        shared.drop_oldest();
      }
    } else {
      shared.changed.wait(lock, [&] {
        return shared.stopping || shared.queued_frames + (shared.busy ? 1 : 0) < options.buffer;
      });
      if (shared.stopping) break;
    }
    shared.last_admitted = tick->frame_index;
    Entry e;
    e.tick = *tick;
    shared.queue.push_back(e);
    ++shared.queued_frames;
    shared.max_in_flight =
        std::max(shared.max_in_flight, shared.queued_frames + (shared.busy ? 1 : 0));
    shared.max_entries = std::max(shared.max_entries, shared.queue.size());
    shared.changed.notify_all();
  }
  std::lock_guard lock(shared.mutex);
  shared.source_done = true;
  shared.changed.notify_all();
}

}  // namespace

double budget_from_env(double fallback) {
  const char* raw = std::getenv("VIGIL_BUDGET_MS");
  if (!raw) return fallback;
  char* end = nullptr;
  const double v = std::strtod(raw, &end);
  if (end == raw || *end != '\0' || !(v > 0.0) || !std::isfinite(v)) return fallback;
  return v;
}

SamplingPolicy SamplingPolicy::fixed_stride(int k) {
  if (k < 1) throw std::invalid_argument("stride must be at least 1");
  return {SamplingMode::stride, k};
}

SamplingPolicy SamplingPolicy::for_backend(const BackendCapability& capability) {
  if (capability.mode == BackendMode::cpu_class) return fixed_stride(kCpuDefaultStride);
  return every_frame();
}

int adaptive_stride(std::span<const LatencyRecord> window, double frame_interval_ms,
                    double budget_ms) {
  if (window.empty() || !(frame_interval_ms > 0.0)) return 1;
  double sum = 0.0;
  for (const auto& r : window) sum += r.total_ms;
  const double mean = sum / static_cast<double>(window.size());
  if (mean <= budget_ms) return 1;
  const double k = std::ceil(mean / frame_interval_ms);
  return static_cast<int>(std::clamp(k, 1.0, static_cast<double>(kMaxAdaptiveStride)));
}

std::string_view to_string(SkipReason reason) {
  return reason == SkipReason::stride ? "STRIDE" : "BACKPRESSURE";
}

TraceFrameSource::TraceFrameSource(std::shared_ptr<const MissionTrace> trace, ReplaySpeed speed)
    : trace_(std::move(trace)), clock_(speed), unpaced_(speed.unpaced()),
      multiplier_(speed.multiplier()) {
  if (!trace_) throw std::invalid_argument("frame source needs a trace");
}

double TraceFrameSource::frame_interval_ms() const {
  const double interval = trace_->metadata.frame_interval_ms();
  return unpaced_ ? interval : interval / multiplier_;
}

void TraceFrameSource::set_speed(ReplaySpeed speed) {
  if (speed.unpaced() != unpaced_) {
    throw std::invalid_argument("cannot switch a replay between paced and unpaced");
  }
  multiplier_ = speed.multiplier();
  speed_changed_ = true;
}

std::optional<FrameTick> TraceFrameSource::next() {
  if (cancelled_ || position_ >= trace_->frames.size()) return std::nullopt;
  const auto& frame = trace_->frames[position_];
  if (!started_) {
    clock_.start(frame.timestamp_ms);
    started_ = true;
  } else if (!unpaced_) {
    if (speed_changed_.exchange(false)) {
      clock_.set_speed(ReplaySpeed::realtime(multiplier_), trace_->frames[position_ - 1].timestamp_ms);
    }
    if (!sleep_until_due(clock_.due(frame.timestamp_ms), cancelled_)) return std::nullopt;
  }
  ++position_;
  return FrameTick{frame.frame_index, frame.timestamp_ms, Clock::now()};
}

CameraFrameSource::CameraFrameSource(double fps, std::optional<FrameIndex> frame_count)
    : fps_(fps), count_(frame_count) {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw std::invalid_argument("fps must be positive");
}

std::optional<FrameTick> CameraFrameSource::next() {
  if (cancelled_ || (count_ && next_ >= *count_)) return std::nullopt;
  if (next_ == 0) {
    start_ = Clock::now();
  } else {
    const auto due = start_ + std::chrono::duration_cast<Clock::duration>(
                                  std::chrono::duration<double, std::milli>(
                                      static_cast<double>(next_) * 1000.0 / fps_));
    if (!sleep_until_due(due, cancelled_)) return std::nullopt;
  }
  const auto index = next_++;
  const auto ts = static_cast<TimestampMs>(std::llround(static_cast<double>(index) * 1000.0 / fps_));
  return FrameTick{index, ts, Clock::now()};
}

PipelineStats run_pipeline(FrameSource& source, InferenceBackend& backend,
                           const PipelineOptions& options, std::span<PipelineSink* const> sinks) {
  validate(options.config);
  if (options.buffer < 1) throw std::invalid_argument("buffer must hold at least one frame");
  if (options.policy.stride < 1) throw std::invalid_argument("stride must be at least 1");
  if (!(options.budget_ms > 0.0)) throw std::invalid_argument("budget must be positive");

  Shared shared;
  PipelineStats stats;
  VigilanceConfig config = options.config;
  AlertMachine alerts;
  std::deque<LatencyRecord> window;
  std::vector<LatencyRecord> window_copy;
  double overhead_sum = 0.0;
  const double interval = source.frame_interval_ms();
  const auto wall_start = Clock::now();

  std::thread producer([&] { produce(source, options, shared); });

  auto stop_producer = [&] {
    {
      std::lock_guard lock(shared.mutex);
      shared.stopping = true;
      shared.changed.notify_all();
    }
    source.cancel();
    if (producer.joinable()) producer.join();
  };

  try {
    for (;;) {
      Entry entry;
      {
        std::unique_lock lock(shared.mutex);
        shared.changed.wait(lock, [&] { return !shared.queue.empty() || shared.source_done; });
        if (shared.queue.empty()) break;
        entry = shared.queue.front();
        shared.queue.pop_front();
        if (entry.is_frame) {
          --shared.queued_frames;
          shared.busy = true;
        }
        shared.changed.notify_all();
      }
      if (!entry.is_frame) {
        for (auto* sink : sinks) sink->on_skip(entry.skip);
        continue;
      }

      const auto t0 = Clock::now();
      PipelineOutput out;
      out.latency.frame_index = entry.tick.frame_index;
      out.latency.queue_ms = ms_between(entry.tick.arrival, t0);
      out.latency.budget_ms = options.budget_ms;
      if (options.between_frames) {
        options.between_frames(config);
        validate(config);
      }

      const auto deadline = t0 + options.inference_timeout;
      bool failed = false;
      auto t1 = t0;
      auto t2 = t0;
      try {
        out.frame = backend.detect(entry.tick.frame_index, deadline);
        t1 = Clock::now();
        backend.classify(out.frame, deadline);
        t2 = Clock::now();
      } catch (const BackendError& e) {
        failed = true;
        out.backend_error = e.what();
        t1 = t2 = Clock::now();
      }
      out.frame.frame_index = entry.tick.frame_index;
      out.frame.timestamp_ms = entry.tick.timestamp_ms;
      if (failed) {
        out.frame.individuals.clear();
        out.sample.frame_index = entry.tick.frame_index;
        out.sample.timestamp_ms = entry.tick.timestamp_ms;
        out.sample.degrade = DegradeReason::backend_failure;
        ++stats.backend_failures;
      } else {
        out.sample = compute_vigilance(out.frame, config);
      }
      const auto t3 = Clock::now();
      out.event = alerts.step(out.sample, config);
      out.level = alerts.state().level;
      const auto t4 = Clock::now();

      auto& rec = out.latency;
      rec.detect_ms = ms_between(t0, t1);
      rec.behave_ms = ms_between(t1, t2);
      rec.score_ms = ms_between(t2, t3);
      rec.alert_ms = ms_between(t3, t4);
      rec.total_ms = ms_between(t0, t4);
      rec.met_slo = rec.total_ms <= options.budget_ms;
      if (!rec.met_slo) ++stats.slo_misses;

      window.push_back(rec);
      while (window.size() > options.adaptive_window) window.pop_front();
      int stride = options.policy.stride;
      if (options.policy.mode == SamplingMode::adaptive) {
        window_copy.assign(window.begin(), window.end());
        stride = adaptive_stride(window_copy, interval, options.budget_ms);
      }
      stats.stride_history.push_back(stride);
      ++stats.processed;

      for (auto* sink : sinks) sink->on_frame(out);

      {
        std::lock_guard lock(shared.mutex);
        shared.busy = false;
        shared.stride = stride;
        shared.changed.notify_all();
      }
      const double overhead = ms_between(t0, Clock::now()) - rec.detect_ms - rec.behave_ms;
      overhead_sum += overhead;
      stats.max_overhead_ms = std::max(stats.max_overhead_ms, overhead);
    }
  } catch (...) {
    stop_producer();
    throw;
  }
  stop_producer();

  {
    std::lock_guard lock(shared.mutex);
    stats.frames_seen = shared.frames_seen;
    stats.skipped_stride = shared.skipped_stride;
    stats.dropped_backpressure = shared.dropped;
    stats.max_in_flight = shared.max_in_flight;
    stats.max_queue_entries = shared.max_entries;
  }
  stats.mean_overhead_ms =
      stats.processed == 0 ? 0.0 : overhead_sum / static_cast<double>(stats.processed);
  stats.wall_seconds = ms_between(wall_start, Clock::now()) / 1000.0;
  for (auto* sink : sinks) sink->on_finish(stats);
  return stats;
}

}  // namespace vigil

#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vigil/backend.hpp"
#include "vigil/json_codec.hpp"
#include "vigil/report.hpp"
#include "vigil/synthetic.hpp"
#include "vigil/trace_io.hpp"
#ifdef VIGIL_HAVE_SERVICE
#include "vigil/gcs/server.hpp"
#endif

namespace vigil::cli {
namespace {

using nlohmann::json;

/// Raised for bad option values that CLI11 cannot check on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

json parse_json_arg(const std::string& what, const std::string& text) {
  try {
    if (!text.empty() && text.front() != '{' && text.front() != '[') {
      std::ifstream in(text);
      if (!in) throw UsageError(what + ": cannot open " + text);
      return json::parse(in);
    }
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(what + ": " + e.what());
  }
}

InterventionModel parse_intervention(const std::string& text) {
  if (text == "operator") return InterventionModel::operator_profile();
  if (text == "immediate") return InterventionModel{};
  if (text == "never") return InterventionModel::never();
  try {
    auto m = intervention_from_json(parse_json_arg("--intervention", text));
    validate(m);
    return m;
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("--intervention: ") + e.what());
  }
}

std::string describe(const InterventionModel& m) {
  std::ostringstream s;
  s << to_string(m.action) << " tau_h=";
  if (std::isinf(m.response_latency_ms)) {
    s << "never";
  } else {
    s << m.response_latency_ms / 1000.0 << "s";
  }
  s << " d=" << m.deescalation_delay_ms / 1000.0 << "s";
  return s.str();
}

SimulatedDelays parse_delays(const std::string& text) {
  if (text == "none") return {};
  if (text == "gpu") return SimulatedDelays::gpu();
  if (text == "cpu") return SimulatedDelays::cpu();
  throw UsageError("--delays: expected none, gpu or cpu");
}

ReplaySpeed parse_speed(const std::string& text) {
  if (text == "afap") return ReplaySpeed::afap();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return ReplaySpeed::realtime(v);
  } catch (const std::invalid_argument&) {
  } catch (const std::out_of_range&) {
  }
  throw UsageError("--speed: expected a multiplier or afap");
}

VigilanceConfig make_config(std::optional<double> theta) {
  VigilanceConfig c;
  if (theta) c.theta_s = *theta;
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--theta: ") + e.what());
  }
  return c;
}

MissionTrace load(const std::string& path) { return parse_trace(std::filesystem::path(path)); }

std::string fmt(std::optional<double> v, int precision = 1) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << *v;
  return s.str();
}

void write_text(Io io, const std::string& path, const std::string& text) {
  if (path == "-") {
    io.out << text;
    return;
  }
  std::ofstream f(path);
  if (!f || !(f << text)) throw std::runtime_error("cannot write " + path);
}

std::string label_for(const std::string& path, const MissionTrace& t) {
  return t.metadata.mission_id.empty() ? std::filesystem::path(path).stem().string() : t.metadata.mission_id;
}

/// Blocks SIGINT and SIGTERM in this thread and every thread started later.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

/// True when a stop signal arrived within `timeout_ms`.
bool stop_signal(const sigset_t& set, long timeout_ms) {
  timespec ts{timeout_ms / 1000, (timeout_ms % 1000) * 1000000};
  return sigtimedwait(&set, nullptr, &ts) > 0;
}

struct AnalyzeArgs {
  std::vector<std::string> traces;
  std::optional<double> theta;
  std::string intervention;
  std::string csv, md, json_out;
  std::optional<double> min_mean_warning_s;
  std::optional<double> max_adverse_s;
  std::optional<double> min_usable_pct;
};

int analyze(Io io, const AnalyzeArgs& a) {
  const auto config = make_config(a.theta);
  std::optional<InterventionModel> model;
  if (!a.intervention.empty()) model = parse_intervention(a.intervention);

  std::vector<std::pair<std::string, ReplayResult>> results;
  for (const auto& path : a.traces) {
    const auto trace = load(path);
    results.emplace_back(label_for(path, trace), replay_mission(trace, config, model));
  }
  const auto report = comparison_report(results);
  if (!a.csv.empty()) write_text(io, a.csv, report.to_csv());
  if (!a.md.empty()) write_text(io, a.md, report.to_markdown());
  if (!a.json_out.empty()) write_text(io, a.json_out, report.to_json().dump(2) + "\n");
  if (a.csv != "-" && a.md != "-" && a.json_out != "-") io.out << report.to_markdown();

  for (const auto& row : report.rows) {
    for (const auto& d : row.report.diagnostics) io.err << row.label << ": " << d << "\n";
  }

  int status = kExitOk;
  auto regression = [&](const std::string& msg) {
    io.err << "regression: " << msg << "\n";
    status = kExitFailure;
  };
  if (a.min_mean_warning_s) {
    const auto mean = report.mean_warning_window_s;
    if (!mean || *mean < *a.min_mean_warning_s) {
      regression("mean warning window " + fmt(mean) + " s below " + fmt(a.min_mean_warning_s) + " s");
    }
  }
  for (const auto& row : report.rows) {
    const auto& r = row.report;
    if (a.max_adverse_s && r.adverse_behavior_ms / 1000.0 > *a.max_adverse_s) {
      regression(row.label + " adverse behavior " + fmt(r.adverse_behavior_ms / 1000.0) + " s above " +
                 fmt(a.max_adverse_s) + " s");
    }
    if (a.min_usable_pct && r.usable_total_pct < *a.min_usable_pct) {
      regression(row.label + " usable frames " + fmt(r.usable_total_pct) + "% below " + fmt(a.min_usable_pct) +
                 "%");
    }
  }
  return status;
}

struct SimulateArgs {
  std::string trace;
  std::optional<double> theta;
  std::vector<std::string> interventions;
  bool csv = false;
};

int simulate(Io io, const SimulateArgs& a) {
  const auto config = make_config(a.theta);
  const auto trace = load(a.trace);
  std::vector<std::pair<std::string, std::optional<InterventionModel>>> cases{{"none", std::nullopt}};
  for (const auto& text : a.interventions) {
    const auto m = parse_intervention(text);
    cases.emplace_back(describe(m), m);
  }

  struct Row {
    std::string label;
    MetricsReport report;
  };
  std::vector<Row> rows;
  for (const auto& [label, model] : cases) {
    rows.push_back({label, compute_metrics(replay_mission(trace, config, model))});
  }
  const double raw = rows.front().report.raw_adverse_ms;
  auto reduction = [&](const MetricsReport& r) -> std::optional<double> {
    if (raw <= 0.0) return std::nullopt;
    return 100.0 * (raw - r.adverse_behavior_ms) / raw;
  };

  if (a.csv) {
    io.out << "intervention,adverse_s,adverse_reduction_pct,usable_total_pct,interventions\n";
    for (const auto& row : rows) {
      io.out << '"' << row.label << "\"," << fmt(row.report.adverse_behavior_ms / 1000.0, 3) << ','
             << (reduction(row.report) ? fmt(reduction(row.report)) : "") << ','
             << fmt(row.report.usable_total_pct) << ',' << row.report.intervention_count << "\n";
    }
    return kExitOk;
  }
  io.out << "Mission " << trace.metadata.mission_id << ", theta_S " << config.theta_s << "\n\n";
  io.out << "| Intervention | Adverse | Reduction (%) | Usable (%) | Interventions |\n";
  io.out << "|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    io.out << "| " << row.label << " | " << format_mmss(row.report.adverse_behavior_ms) << " | "
           << fmt(reduction(row.report)) << " | " << fmt(row.report.usable_total_pct) << " | "
           << row.report.intervention_count << " |\n";
  }
  return kExitOk;
}

struct GenArgs {
  std::string params_file;
  std::vector<std::string> phases;
  std::optional<int> herd;
  std::optional<double> fps;
  std::optional<std::uint64_t> seed;
  std::string mission_id;
  std::string out = "-";
};

int gen(Io io, const GenArgs& a) {
  SyntheticParams p;
  if (!a.params_file.empty()) {
    try {
      p = synthetic_params_from_json(parse_json_arg("--params", a.params_file));
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError(std::string("--params: ") + e.what());
    }
  }
  try {
    for (const auto& spec : a.phases) p.phases.push_back(parse_phase_spec(spec));
  } catch (const std::exception& e) {
    throw UsageError(std::string("--phase: ") + e.what());
  }
  if (p.phases.empty()) throw UsageError("gen: give --params or at least one --phase");
  if (a.herd) p.herd_size = *a.herd;
  if (a.fps) p.fps = *a.fps;
  if (a.seed) p.seed = *a.seed;
  if (!a.mission_id.empty()) p.mission_id = a.mission_id;

  MissionTrace trace;
  try {
    trace = generate_synthetic_trace(p);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.out == "-") {
    write_trace(trace, io.out);
  } else {
    write_trace(trace, std::filesystem::path(a.out));
    io.err << "wrote " << trace.frames.size() << " frames to " << a.out << "\n";
  }
  return kExitOk;
}

int validate_cmd(Io io, const std::vector<std::string>& paths) {
  int status = kExitOk;
  for (const auto& path : paths) {
    try {
      const auto trace = load(path);
      std::size_t warnings = 0;
      for (const auto& d : validate_trace(trace)) {
        io.err << path << ": " << d.describe() << "\n";
        if (d.severity == Severity::warning) ++warnings;
      }
      io.out << path << ": ok, " << trace.frames.size() << " frames";
      if (warnings) io.out << ", " << warnings << " warnings";
      io.out << "\n";
    } catch (const TraceError& e) {
      io.err << path << ": " << e.what() << "\n";
      status = kExitFailure;
    }
  }
  return status;
}

struct ReplayArgs {
  std::string trace;
  std::string speed = "afap";
  std::optional<double> theta;
  std::string intervention;
  std::string out;
  bool serve = false;
  std::string bind;
  std::string delays = "none";
};

#ifdef VIGIL_HAVE_SERVICE
int serve_until_signal(Io io, const std::string& bind, const std::function<void(gcs::Server&)>& setup,
                       const std::function<bool(gcs::Server&)>& done = {}) {
  const auto signals = block_stop_signals();
  gcs::Server server({gcs::resolve_bind(bind.empty() ? gcs::kDefaultBind : bind), 1});
  server.start();
  io.err << "listening on port " << server.port() << "\n";
  setup(server);
  while (!stop_signal(signals, 200)) {
    if (done && done(server)) break;
  }
  server.stop();
  server.wait();
  return kExitOk;
}
#endif

int replay(Io io, const ReplayArgs& a) {
  const auto config = make_config(a.theta);
  const auto speed = parse_speed(a.speed);
  const auto delays = parse_delays(a.delays);
  std::optional<InterventionModel> model;
  if (!a.intervention.empty()) model = parse_intervention(a.intervention);
  auto trace = std::make_shared<const MissionTrace>(load(a.trace));

  if (a.serve) {
#ifdef VIGIL_HAVE_SERVICE
    std::shared_ptr<gcs::Session> session;
    return serve_until_signal(
        io, a.bind,
        [&](gcs::Server& server) {
          gcs::SessionOptions o;
          o.source = gcs::ReplaySourceSpec{trace, speed, delays};
          o.config = config;
          o.autostart = false;
          session = server.sessions().create(std::move(o));
          io.out << "session " << session->id() << " ready: ws://127.0.0.1:" << server.port() << "/session/"
                 << session->id() << "/telemetry (send START_REPLAY on /command)" << std::endl;
        },
        [&](gcs::Server&) {
          const auto s = session->snapshot().status;
          return s != gcs::SessionStatus::idle && s != gcs::SessionStatus::running;
        });
#else
    throw UsageError("--serve: built without the ground-control service");
#endif
  }

  ReplayEngine engine(trace, config);
  ReplayClock clock(speed);
  if (auto t0 = engine.next_timestamp()) clock.start(*t0);
  while (!engine.finished()) {
    clock.wait_until(*engine.next_timestamp());
    const auto step = engine.step();
    if (step.event) {
      io.out << format_mmss(static_cast<double>(step.frame->timestamp_ms)) << " frame " << step.frame->frame_index
             << " " << to_string(step.event->kind) << " S=" << fmt(step.sample.score, 3) << "\n";
    }
  }
  const auto result = replay_mission(*trace, config, model);
  const auto report = compute_metrics(result);
  io.out << "frames " << result.samples.size() << ", alerts " << report.alert_count << ", warning window "
         << fmt(report.warning_window_s) << " s, adverse " << format_mmss(report.adverse_behavior_ms)
         << ", usable " << fmt(report.usable_total_pct) << "%\n";
  if (!a.out.empty()) write_text(io, a.out, to_json(result).dump() + "\n");
  return kExitOk;
}

void add_theta(CLI::App* app, std::optional<double>& theta) {
  app->add_option("--theta", theta, "Alert threshold theta_S")->check(CLI::Range(kMinThetaS, kMaxThetaS));
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Io io{out, err};
  CLI::App app{"Herd vigilance monitoring and mission replay", "vigil"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "vigil 0.1.0");

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Metrics report over one or more traces");
  analyze_cmd->add_option("traces", an.traces, "Trace files")->required()->check(CLI::ExistingFile);
  add_theta(analyze_cmd, an.theta);
  analyze_cmd->add_option("--intervention", an.intervention, "operator, immediate, never, JSON or JSON file");
  analyze_cmd->add_option("--csv", an.csv, "Write CSV (- for stdout)");
  analyze_cmd->add_option("--md", an.md, "Write Markdown (- for stdout)");
  analyze_cmd->add_option("--json", an.json_out, "Write JSON (- for stdout)");
  analyze_cmd->add_option("--min-mean-warning", an.min_mean_warning_s, "Fail if the mean warning window (s) is lower");
  analyze_cmd->add_option("--max-adverse", an.max_adverse_s, "Fail if any mission's adverse time (s) is higher");
  analyze_cmd->add_option("--min-usable", an.min_usable_pct, "Fail if any mission's usable frames (%) is lower");

  ReplayArgs rp;
  auto* replay_cmd = app.add_subcommand("replay", "Replay a trace, printing alerts as they fire");
  replay_cmd->add_option("trace", rp.trace)->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--speed", rp.speed, "Real-time multiplier or afap")->capture_default_str();
  add_theta(replay_cmd, rp.theta);
  replay_cmd->add_option("--intervention", rp.intervention, "Intervention model for the summary");
  replay_cmd->add_option("--out", rp.out, "Write the replay result JSON (- for stdout)");
  replay_cmd->add_flag("--serve", rp.serve, "Host the replay as a session for dashboards");
  replay_cmd->add_option("--bind", rp.bind, "host:port for --serve (VIGIL_BIND overrides)");
  replay_cmd->add_option("--delays", rp.delays, "Simulated inference delays: none, gpu or cpu")
      ->capture_default_str();

  SimulateArgs sm;
  auto* simulate_cmd = app.add_subcommand("simulate", "What-if table over intervention models");
  simulate_cmd->add_option("trace", sm.trace)->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("--intervention", sm.interventions, "operator, immediate, never, JSON or JSON file")
      ->required();
  add_theta(simulate_cmd, sm.theta);
  simulate_cmd->add_flag("--csv", sm.csv, "CSV instead of Markdown");

  GenArgs gn;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic trace");
  gen_cmd->add_option("--params", gn.params_file, "Phase list JSON (file or inline)");
  gen_cmd->add_option("--phase", gn.phases, "DURATION_MS:FRACTION[:FLAG...], flags: behavior, flight, alert, nosample, absent, occluded, noise=P, bg=BEHAVIOR");
  gen_cmd->add_option("--herd", gn.herd)->check(CLI::Range(0, 1000));
  gen_cmd->add_option("--fps", gn.fps)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gn.seed);
  gen_cmd->add_option("--mission-id", gn.mission_id);
  gen_cmd->add_option("--out,-o", gn.out, "Output file (- for stdout)")->capture_default_str();

  std::vector<std::string> to_validate;
  auto* validate_sub = app.add_subcommand("validate", "Check traces against the schema and invariants");
  validate_sub->add_option("traces", to_validate)->required();

  std::string serve_bind;
  auto* serve_cmd = app.add_subcommand("serve", "Run the ground-control service");
  serve_cmd->add_option("--bind", serve_bind, "host:port (VIGIL_BIND overrides)");

  std::string stub_trace, stub_socket, stub_delays = "none";
  auto* stub_cmd = app.add_subcommand("stub-backend", "Serve a trace as a live inference backend");
  stub_cmd->add_option("trace", stub_trace)->required()->check(CLI::ExistingFile);
  stub_cmd->add_option("--socket", stub_socket, "Unix socket path")->required();
  stub_cmd->add_option("--delays", stub_delays)->capture_default_str();

  std::vector<std::string> argv_store{"vigil"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*analyze_cmd) return analyze(io, an);
    if (*replay_cmd) return replay(io, rp);
    if (*simulate_cmd) return simulate(io, sm);
    if (*gen_cmd) return gen(io, gn);
    if (*validate_sub) return validate_cmd(io, to_validate);
    if (*serve_cmd) {
#ifdef VIGIL_HAVE_SERVICE
      return serve_until_signal(io, serve_bind, [](gcs::Server&) {});
#else
      throw UsageError("serve: built without the ground-control service");
#endif
    }
    if (*stub_cmd) {
      const auto delays = parse_delays(stub_delays);
      const auto signals = block_stop_signals();
      TraceBackendServer server(std::make_shared<const MissionTrace>(load(stub_trace)), stub_socket, delays);
      out << server.address() << std::endl;
      while (!stop_signal(signals, 1000)) {
      }
      server.stop();
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "vigil: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TraceError& e) {
    err << "vigil: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "vigil: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace vigil::cli

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <mutex>
#include <unistd.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "doctest.h"
#include "vigil/gcs/server.hpp"
#include "vigil/synthetic.hpp"
#include "vigil/trace_io.hpp"
#include "vigil/vigilance.hpp"

using namespace vigil;
using namespace vigil::gcs;
using namespace std::chrono_literals;

namespace {

std::shared_ptr<const MissionTrace> mission(const std::vector<std::string>& phases, int herd = 4) {
  SyntheticParams p;
  p.mission_id = "gcs-test";
  p.herd_size = herd;
  p.seed = 12;
  for (const auto& s : phases) p.phases.push_back(parse_phase_spec(s));
  return std::make_shared<const MissionTrace>(generate_synthetic_trace(p));
}

SessionOptions replay_options(std::shared_ptr<const MissionTrace> t, ReplaySpeed speed = ReplaySpeed::afap()) {
  SessionOptions o;
  o.source = ReplaySourceSpec{std::move(t), speed, {}};
  o.autostart = false;
  return o;
}

/// Subscriber that blocks on new messages instead of polling.
class Listener {
 public:
  explicit Listener(Session& s) {
    sub_ = s.subscribe([this] {
      std::lock_guard lock(m_);
      cv_.notify_all();
    });
  }

  std::optional<json> next(std::chrono::milliseconds timeout = 5000ms) {
    std::unique_lock lock(m_);
    std::optional<std::string> msg;
    cv_.wait_for(lock, timeout, [&] {
      msg = sub_->pop();
      return msg.has_value() || sub_->finished();
    });
    if (!msg) return std::nullopt;
    return json::parse(*msg);
  }

  std::vector<json> drain(std::chrono::milliseconds timeout = 20000ms) {
    std::vector<json> out;
    while (auto m = next(timeout)) out.push_back(*m);
    return out;
  }

  Subscription& sub() { return *sub_; }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::shared_ptr<Subscription> sub_;
};

json submit(Session& s, const json& cmd) {
  std::promise<json> p;
  auto f = p.get_future();
  s.submit(cmd.dump(), [&p](const json& reply) { p.set_value(reply); });
  REQUIRE(f.wait_for(10s) == std::future_status::ready);
  return f.get();
}

json command(std::string_view kind, json args = json::object(), std::string id = "c") {
  return {{"v", 1}, {"id", id}, {"kind", kind}, {"args", args}};
}

void check_gapless(const std::vector<json>& log) {
  REQUIRE_FALSE(log.empty());
  REQUIRE(log.front()["snapshot"] == true);
  std::uint64_t expected = log.front()["seq"].get<std::uint64_t>() + 1;
  for (std::size_t i = 1; i < log.size(); ++i) {
    REQUIRE(log[i]["v"] == 1);
    CHECK(log[i]["seq"].get<std::uint64_t>() == expected);
    ++expected;
  }
}

std::vector<json> of_kind(const std::vector<json>& log, const std::string& kind) {
  std::vector<json> out;
  for (const auto& m : log) {
    if (m["kind"] == kind) out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_CASE("command parsing and typed rejections") {
  const auto ok = parse_command(command("SET_THRESHOLD", {{"theta_S", 0.5}}, "x1"));
  CHECK(ok.kind == CommandKind::set_threshold);
  CHECK(*ok.theta_s == 0.5);
  CHECK(ok.id == "x1");
  CHECK(parse_command(to_json(ok)) == ok);
  CHECK_NOTHROW(parse_command(command("SET_THRESHOLD", {{"theta_S", 0.1}})));
  CHECK_NOTHROW(parse_command(command("SET_THRESHOLD", {{"theta_S", 0.9}})));

  auto code_of = [](const json& j) {
    try {
      parse_command(j);
    } catch (const CommandRejected& e) {
      return std::string(to_string(e.code()));
    }
    return std::string("accepted");
  };
  CHECK(code_of(command("SET_THRESHOLD", {{"theta_S", 0.05}})) == "OUT_OF_RANGE");
  CHECK(code_of(command("SET_THRESHOLD", {{"theta_S", 0.95}})) == "OUT_OF_RANGE");
  CHECK(code_of(command("SET_THRESHOLD", {{"theta_S", "high"}})) == "MALFORMED");
  CHECK(code_of(command("SET_THRESHOLD")) == "MALFORMED");
  CHECK(code_of(command("SET_SPEED", {{"speed", 0.0}})) == "OUT_OF_RANGE");
  CHECK(code_of(command("LAND")) == "UNKNOWN_COMMAND");
  CHECK(code_of({{"kind", "PAUSE"}}) == "MALFORMED");
  CHECK(code_of({{"v", 2}, {"kind", "PAUSE"}}) == "UNSUPPORTED_VERSION");
  CHECK(code_of(json::array()) == "MALFORMED");
  CHECK(code_of(command("PAUSE")) == "accepted");
  CHECK_THROWS_AS(parse_command(std::string_view("{not json")), CommandRejected);
}

TEST_CASE("telemetry envelope round-trips") {
  TelemetryMessage m{"s1", 42, TelemetryKind::alert, {{"kind", "ENTER_RED"}}, false};
  CHECK(telemetry_from_json(to_json(m)) == m);
  m.snapshot = true;
  m.kind = TelemetryKind::state;
  CHECK(telemetry_from_json(to_json(m)) == m);
  auto bad = to_json(m);
  bad["v"] = 3;
  CHECK_THROWS(telemetry_from_json(bad));
  bad = to_json(m);
  bad["kind"] = "VIDEO";
  CHECK_THROWS(telemetry_from_json(bad));
  const auto gap = gap_notice("s1", 5, 9);
  CHECK(gap["kind"] == "GAP");
  CHECK(gap["from_seq"] == 5);
  CHECK(gap["to_seq"] == 9);
}

TEST_CASE("replay session streams a gapless log with SAMPLE before ALERT") {
  const auto t = mission({"1000:0", "1000:0.5", "500:0"});
  Session s("s1", replay_options(t));
  Listener l(s);
  s.start();
  const auto log = l.drain();
  check_gapless(log);
  CHECK(log.front()["kind"] == "STATE");
  CHECK(log.front()["payload"]["status"] == "IDLE");
  CHECK(log.back()["kind"] == "MISSION_END");
  CHECK(log.back()["payload"]["reason"] == "COMPLETED");

  const auto samples = of_kind(log, "SAMPLE");
  REQUIRE(samples.size() == t->frames.size());
  const auto batch = score_frames(t->frames, {});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& p = samples[i]["payload"];
    CHECK(p["frame_index"] == t->frames[i].frame_index);
    CHECK(p["score"] == *batch[i].score);
    CHECK(p["n_included"] == batch[i].n_included);
    CHECK(p["degraded"] == false);
    CHECK(p["centroid"].is_array());
    CHECK(p["individuals"].size() == t->frames[i].individuals.size());
  }
  CHECK(samples[0]["payload"]["band"] == "GREEN");
  CHECK(samples[40]["payload"]["band"] == "RED");

  const auto alerts = of_kind(log, "ALERT");
  REQUIRE_FALSE(alerts.empty());
  for (const auto& a : alerts) {
    const auto frame = a["payload"]["frame_index"];
    bool sample_first = false;
    for (const auto& m : log) {
      if (m["seq"] >= a["seq"]) break;
      if (m["kind"] == "SAMPLE" && m["payload"]["frame_index"] == frame) sample_first = true;
    }
    CHECK(sample_first);
  }
  CHECK(alerts[0]["payload"]["kind"] == "ENTER_YELLOW");
  bool chimed = false;
  for (const auto& a : alerts) chimed |= a["payload"]["kind"] == "ENTER_RED" && a["payload"]["audio"] == true;
  CHECK(chimed);
  CHECK(of_kind(log, "LATENCY").size() == t->frames.size());
  CHECK(s.snapshot().status == SessionStatus::finished);
}

TEST_CASE("late joiner gets a snapshot then the following messages") {
  const auto t = mission({"3000:0"});
  Session s("s2", replay_options(t, ReplaySpeed::realtime(1.0)));
  s.start();
  std::this_thread::sleep_for(500ms);
  Listener l(s);
  const auto first = l.next();
  REQUIRE(first);
  CHECK((*first)["snapshot"] == true);
  CHECK((*first)["payload"]["status"] == "RUNNING");
  CHECK((*first)["payload"]["frames_processed"].get<int>() > 0);
  const auto second = l.next();
  REQUIRE(second);
  CHECK((*second)["seq"] == (*first)["seq"].get<std::uint64_t>() + 1);
  s.stop();
}

TEST_CASE("threshold change is acknowledged with the seq of the first sample under it") {
  const auto t = mission({"3000:0.25"});
  Session s("s3", replay_options(t, ReplaySpeed::realtime(1.0)));
  Listener l(s);
  s.start();
  std::this_thread::sleep_for(400ms);
  const auto reply = submit(s, command("SET_THRESHOLD", {{"theta_S", 0.2}}, "t1"));
  CHECK(reply["kind"] == "ACK");
  CHECK(reply["id"] == "t1");
  CHECK(reply["command"] == "SET_THRESHOLD");
  const auto from = reply["applies_from_seq"].get<std::uint64_t>();
  s.stop();
  const auto log = l.drain();
  check_gapless(log);
  bool found = false;
  for (const auto& m : log) {
    if (m["kind"] != "SAMPLE") continue;
    const auto seq = m["seq"].get<std::uint64_t>();
    if (seq < from) CHECK(m["payload"]["theta_S"] == 0.3);
    if (seq >= from) CHECK(m["payload"]["theta_S"] == 0.2);
    if (seq == from) {
      found = true;
      CHECK(m["payload"]["band"] == "RED");
    }
  }
  CHECK(found);
}

TEST_CASE("out-of-range and malformed commands are rejected and leave the session alone") {
  const auto t = mission({"500:0"});
  Session s("s4", replay_options(t));
  auto r = submit(s, command("SET_THRESHOLD", {{"theta_S", 0.05}}, "low"));
  CHECK(r["kind"] == "REJECT");
  CHECK(r["id"] == "low");
  CHECK(r["command"] == "SET_THRESHOLD");
  CHECK(r["error"]["code"] == "OUT_OF_RANGE");
  r = json::object();
  std::promise<json> p;
  s.submit(std::string_view("garbage"), [&](const json& j) { p.set_value(j); });
  r = p.get_future().get();
  CHECK(r["error"]["code"] == "MALFORMED");
  CHECK(s.snapshot().theta_s == 0.3);
  CHECK(s.snapshot().status == SessionStatus::idle);
  CHECK(submit(s, command("SET_SPEED", {{"speed", 2.0}}))["error"]["code"] == "INVALID_STATE");
}

TEST_CASE("pause during red changes drone state while scoring continues") {
  const auto t = mission({"500:0", "3000:0.5"});
  Session s("s5", replay_options(t, ReplaySpeed::realtime(1.0)));
  Listener l(s);
  s.start();
  while (s.snapshot().alert_level != AlertLevel::red) std::this_thread::sleep_for(10ms);
  const auto reply = submit(s, command("PAUSE", json::object(), "p1"));
  CHECK(reply["kind"] == "ACK");
  CHECK_FALSE(reply.contains("applies_from_seq"));
  s.wait();
  const auto log = l.drain();
  check_gapless(log);
  // Session-log oracle: find the STATE announcing PAUSE and check what follows.
  std::optional<std::size_t> paused_at;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i]["kind"] == "STATE" && log[i]["payload"]["drone_state"] == "PAUSE") {
      paused_at = i;
      break;
    }
  }
  REQUIRE(paused_at);
  std::size_t samples_after = 0;
  for (std::size_t i = *paused_at + 1; i < log.size(); ++i) {
    if (log[i]["kind"] == "SAMPLE") {
      ++samples_after;
      CHECK(log[i]["payload"]["alert_level"] != "GREEN");
    }
  }
  CHECK(samples_after > 10);
  CHECK(s.snapshot().drone_state == DroneState::pause);
  CHECK(of_kind(log, "SAMPLE").size() == t->frames.size());
}

TEST_CASE("a client that never reads gets a gap notice and does not stall the session") {
  const auto t = mission({"1500:0.5"});
  auto opts = replay_options(t, ReplaySpeed::realtime(1.0));
  opts.client_buffer = 16;
  Session s("s6", opts);
  auto slow = s.subscribe();
  Listener fast(s);
  auto reader = std::async(std::launch::async, [&] { return fast.drain(); });
  const auto start = std::chrono::steady_clock::now();
  s.start();
  s.wait();
  CHECK(std::chrono::steady_clock::now() - start < 10s);
  CHECK(slow->dropped() > 0);
  std::vector<json> log;
  while (auto m = slow->pop()) log.push_back(json::parse(*m));
  REQUIRE(log.size() >= 3);
  CHECK(log[0]["snapshot"] == true);
  const auto gaps = of_kind(log, "GAP");
  REQUIRE(gaps.size() == 1);
  CHECK(log.back()["kind"] == "MISSION_END");
  // Messages either side of the gap notice bracket exactly the dropped range.
  for (std::size_t i = 1; i + 1 < log.size(); ++i) {
    if (log[i]["kind"] != "GAP") continue;
    CHECK(log[i]["from_seq"] == log[i - 1]["seq"].get<std::uint64_t>() + 1);
    CHECK(log[i + 1]["seq"] == log[i]["to_seq"].get<std::uint64_t>() + 1);
  }
  const auto full = reader.get();
  check_gapless(full);
  CHECK(of_kind(full, "SAMPLE").size() == t->frames.size());
}

TEST_CASE("stop ends the mission and later commands are refused") {
  const auto t = mission({"30000:0"});
  Session s("s7", replay_options(t, ReplaySpeed::realtime(1.0)));
  Listener l(s);
  CHECK(submit(s, command("START_REPLAY", {{"speed", 2.0}}))["kind"] == "ACK");
  CHECK(s.snapshot().speed == 2.0);
  CHECK(submit(s, command("START_REPLAY"))["error"]["code"] == "INVALID_STATE");
  std::this_thread::sleep_for(200ms);
  CHECK(submit(s, command("SET_SPEED", {{"speed", 4.0}}))["kind"] == "ACK");
  CHECK(s.snapshot().speed == 4.0);
  CHECK(submit(s, command("STOP"))["kind"] == "ACK");
  s.wait();
  CHECK(s.snapshot().status == SessionStatus::stopped);
  const auto log = l.drain();
  check_gapless(log);
  CHECK(log.back()["payload"]["reason"] == "STOPPED");
  CHECK(of_kind(log, "SAMPLE").size() < t->frames.size());
  CHECK(submit(s, command("PAUSE"))["error"]["code"] == "SESSION_ENDED");

  Listener after(s);
  const auto snap = after.next();
  REQUIRE(snap);
  CHECK((*snap)["payload"]["status"] == "STOPPED");
  CHECK_FALSE(after.next(200ms).has_value());
}

TEST_CASE("stopping an idle session and commands queued before start") {
  const auto t = mission({"500:0.5"});
  Session s("s8", replay_options(t));
  std::promise<json> queued;
  s.submit(std::string_view(command("SET_THRESHOLD", {{"theta_S", 0.6}}).dump()),
           [&](const json& j) { queued.set_value(j); });
  s.stop();
  const auto r = queued.get_future().get();
  CHECK(r["error"]["code"] == "SESSION_ENDED");
  CHECK(s.snapshot().status == SessionStatus::stopped);
  CHECK_THROWS_AS(s.start(), std::logic_error);
}

TEST_CASE("session requests from JSON") {
  const auto path = std::filesystem::temp_directory_path() / ("vigil-gcs-" + std::to_string(::getpid()) + ".ndjson");
  write_trace(*mission({"500:0"}), path);
  const auto o = session_options_from_json({{"trace", path.string()}, {"speed", "afap"}, {"theta_S", 0.4},
                                            {"delays", "gpu"}, {"policy", {{"stride", 3}}}});
  const auto& spec = std::get<ReplaySourceSpec>(o.source);
  CHECK(spec.speed.unpaced());
  CHECK(spec.delays.total_ms() == doctest::Approx(23.8));
  CHECK(o.config.theta_s == 0.4);
  CHECK(o.policy->stride == 3);
  CHECK(o.autostart);
  const auto live = session_options_from_json({{"mode", "live"}, {"backend", "unix:/tmp/x.sock"}, {"fps", 10}});
  CHECK(std::get<LiveSourceSpec>(live.source).fps == 10.0);

  CHECK_THROWS_AS(session_options_from_json({{"mode", "replay"}}), std::invalid_argument);
  CHECK_THROWS_AS(session_options_from_json({{"mode", "drone"}}), std::invalid_argument);
  CHECK_THROWS_AS(session_options_from_json({{"trace", "/nonexistent/t.ndjson"}}), std::invalid_argument);
  CHECK_THROWS_AS(session_options_from_json({{"trace", path.string()}, {"speed", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(session_options_from_json({{"trace", path.string()}, {"theta_S", 1.5}}), std::invalid_argument);
  CHECK_THROWS_AS(session_options_from_json({{"trace", path.string()}, {"policy", "SOMETIMES"}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(session_options_from_json(json::array()), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST_CASE("bind addresses") {
  CHECK(parse_bind("127.0.0.1:8765") == std::pair<std::string, unsigned short>{"127.0.0.1", 8765});
  CHECK(parse_bind("[::1]:9000").first == "::1");
  CHECK_THROWS_AS(parse_bind("8765"), std::invalid_argument);
  CHECK_THROWS_AS(parse_bind("host:99999"), std::invalid_argument);
  CHECK_THROWS_AS(parse_bind("host:"), std::invalid_argument);
  ::setenv("VIGIL_BIND", "0.0.0.0:9999", 1);
  CHECK(resolve_bind() == "0.0.0.0:9999");
  ::unsetenv("VIGIL_BIND");
  CHECK(resolve_bind("127.0.0.1:1") == "127.0.0.1:1");
}

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

std::pair<int, json> http_call(unsigned short port, http::verb verb, const std::string& target,
                               const std::string& body = {}) {
  net::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.set(http::field::content_type, "application/json");
  req.body() = body;
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), json::parse(res.body())};
}

struct WsClient {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  WsClient(unsigned short port, const std::string& target) {
    ws.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws.handshake("127.0.0.1", target);
  }

  json read() {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }

  void send(const json& j) { ws.write(net::buffer(j.dump())); }
};

}  // namespace

TEST_CASE("service end to end over HTTP and WebSocket") {
  const auto path = std::filesystem::temp_directory_path() / ("vigil-e2e-" + std::to_string(::getpid()) + ".ndjson");
  const auto t = mission({"1000:0", "1000:0.5"});
  write_trace(*t, path);

  Server server({"127.0.0.1:0", 1});
  server.start();
  const auto port = server.port();
  REQUIRE(port != 0);

  auto [code, health] = http_call(port, http::verb::get, "/health");
  CHECK(code == 200);
  CHECK(health["status"] == "ok");

  auto [created, body] = http_call(port, http::verb::post, "/sessions",
                                   json{{"trace", path.string()}, {"speed", "afap"}, {"autostart", false}}.dump());
  REQUIRE(created == 201);
  const auto id = body["session"]["id"].get<std::string>();
  CHECK(body["session"]["status"] == "IDLE");
  CHECK(body["session"]["frames_total"] == t->frames.size());

  auto [listed, sessions] = http_call(port, http::verb::get, "/sessions");
  CHECK(listed == 200);
  CHECK(sessions["sessions"].size() == 1);

  WsClient a(port, "/session/" + id + "/telemetry");
  WsClient b(port, "/session/" + id + "/telemetry");
  const auto snap_a = a.read();
  CHECK(snap_a["snapshot"] == true);
  CHECK(b.read()["snapshot"] == true);

  WsClient cmd(port, "/session/" + id + "/command");
  cmd.send(command("SET_THRESHOLD", {{"theta_S", 0.05}}, "bad"));
  const auto rejected = cmd.read();
  CHECK(rejected["kind"] == "REJECT");
  CHECK(rejected["error"]["code"] == "OUT_OF_RANGE");
  cmd.send(command("START_REPLAY", json::object(), "go"));
  const auto started = cmd.read();
  CHECK(started["kind"] == "ACK");
  CHECK(started["id"] == "go");

  std::vector<json> log_a{snap_a}, log_b;
  for (;;) {
    log_a.push_back(a.read());
    if (log_a.back()["kind"] == "MISSION_END") break;
  }
  for (;;) {
    log_b.push_back(b.read());
    if (log_b.back()["kind"] == "MISSION_END") break;
  }
  check_gapless(log_a);
  CHECK(of_kind(log_a, "SAMPLE").size() == t->frames.size());
  REQUIRE(log_b.size() == log_a.size() - 1);
  for (std::size_t i = 0; i < log_b.size(); ++i) CHECK(log_b[i] == log_a[i + 1]);
  beast::flat_buffer buf;
  beast::error_code ec;
  a.ws.read(buf, ec);
  CHECK(ec == websocket::error::closed);

  CHECK(http_call(port, http::verb::get, "/sessions/" + id).second["session"]["status"] == "FINISHED");
  CHECK(http_call(port, http::verb::get, "/sessions/nope").first == 404);
  CHECK(http_call(port, http::verb::post, "/sessions", "{oops").first == 400);
  const auto bad = http_call(port, http::verb::post, "/sessions", json{{"trace", "/nonexistent"}}.dump());
  CHECK(bad.first == 400);
  CHECK(bad.second["error"]["code"] == "INVALID_REQUEST");
  CHECK(http_call(port, http::verb::delete_, "/sessions/" + id).first == 200);
  CHECK(http_call(port, http::verb::get, "/sessions/" + id).first == 404);
  CHECK(http_call(port, http::verb::get, "/elsewhere").first == 404);
  CHECK_THROWS(WsClient(port, "/session/nope/telemetry"));

  Server clash({"127.0.0.1:" + std::to_string(port), 1});
  CHECK_THROWS_AS(clash.start(), std::runtime_error);

  server.stop();
  server.wait();
  std::filesystem::remove(path);
}

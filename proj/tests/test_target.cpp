// Copyright 2026 The sirfit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <unistd.h>
#include <signal.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sirfit/errors.hpp"
#include "sirfit/logline.hpp"
#include "sirfit/model.hpp"
#include "sirfit/target.hpp"
#include "sirfit/target_msgs.hpp"

using namespace sirfit;
using namespace sirfit::target;

namespace {

namespace fs = std::filesystem;

std::string FixturesDir() {
  const char* env = std::getenv("SIRFIT_FIXTURES");
  REQUIRE(env != nullptr);
  return env;
}

StackTopology FixtureTopology() {
  return LoadTopologyFile(FixturesDir() + "/sim_stack/topology.json");
}

std::vector<model::FaultSpec> FixtureFaults() {
  model::ArchitecturalModel arch =
      model::LoadArchitectureFile(FixturesDir() + "/sim_stack/arch.json");
  return model::DeriveFaultModel(arch);
}

model::FaultSpec SpecById(const std::vector<model::FaultSpec>& all,
                          const std::string& id) {
  for (const model::FaultSpec& spec : all) {
    if (spec.id == id) return spec;
  }
  FAIL("no derived fault with id ", id);
  return {};
}

// Swaps any probability filters for a certain one, keeping the id; tests
// that need a transient entry to fire on the first invocation use this.
model::FaultSpec Certain(model::FaultSpec spec) {
  std::vector<model::Filter> kept;
  for (const model::Filter& f : spec.filters) {
    if (f.kind != model::FilterKind::kProbability) kept.push_back(f);
  }
  kept.push_back(model::Filter::Probability(1.0));
  spec.filters = std::move(kept);
  return spec;
}

struct TempDir {
  std::string path;
  TempDir() {
    char buf[] = "/tmp/sirfit-target-XXXXXX";
    REQUIRE(::mkdtemp(buf) != nullptr);
    path = buf;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<LogLine> ReadLog(const std::string& path) {
  std::vector<LogLine> lines;
  std::istringstream in(ReadFile(path));
  std::string raw;
  while (std::getline(in, raw)) {
    if (raw.empty()) continue;
    std::optional<LogLine> parsed = ParseLogLine(raw);
    REQUIRE_MESSAGE(parsed.has_value(), "unparseable log line: ", raw);
    lines.push_back(*parsed);
  }
  return lines;
}

bool LogContains(const std::vector<LogLine>& lines,
                 const std::string& needle) {
  return std::any_of(lines.begin(), lines.end(), [&](const LogLine& l) {
    return l.message.find(needle) != std::string::npos;
  });
}

size_t LogCount(const std::vector<LogLine>& lines, const std::string& needle) {
  size_t n = 0;
  for (const LogLine& l : lines) {
    if (l.message.find(needle) != std::string::npos) ++n;
  }
  return n;
}

bool WaitFor(const std::function<bool()>& pred, int64_t timeout_ms) {
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  return pred();
}

int32_t PidOf(StackHandle& stack, const std::string& process) {
  for (const ProcessHealth& h : stack.Health()) {
    if (h.name == process) return h.pid;
  }
  return 0;
}

}  // namespace

TEST_CASE("topology fixture loads with its processes and channels") {
  StackTopology topo = FixtureTopology();
  CHECK(topo.name == "sim-stack");
  CHECK(topo.processes.size() == 5);
  CHECK(topo.channels.size() == 8);
  CHECK(topo.settings.anr_threshold_ms == 2000);
  CHECK(topo.settings.rpc_timeout_ms == 1000);
  CHECK(topo.state_files.size() == 1);
  CHECK(topo.state_files[0].content.find("camera:7") != std::string::npos);

  const StackChannel* camera = nullptr;
  const StackChannel* at = nullptr;
  for (const StackChannel& ch : topo.channels) {
    if (ch.name == "camera") camera = &ch;
    if (ch.name == "at") at = &ch;
  }
  REQUIRE(camera != nullptr);
  REQUIRE(at != nullptr);
  CHECK(camera->PointFor("take_picture") ==
        "camera-service/camera-rpc.take_picture");
  CHECK(at->framing == proxy::Framing::kAtLine);
  CHECK(at->forward_op == "write");
  CHECK(at->backward_op == "read");
  CHECK(at->device_node == "at-device-node");
}

TEST_CASE("topology validation rejects structural mistakes") {
  StackTopology base = FixtureTopology();

  SUBCASE("duplicate process name") {
    StackTopology t = base;
    t.processes.push_back(t.processes[0]);
    CHECK_THROWS_AS(ValidateTopology(t), ConfigError);
  }
  SUBCASE("same action owned by two processes") {
    StackTopology t = base;
    t.processes[3].actions.push_back("dial");
    CHECK_THROWS_AS(ValidateTopology(t), ConfigError);
  }
  SUBCASE("channel server that does not exist") {
    StackTopology t = base;
    t.channels[0].server = "nobody";
    CHECK_THROWS_AS(ValidateTopology(t), ConfigError);
  }
  SUBCASE("frame channel without operations") {
    StackTopology t = base;
    t.channels[0].ops.clear();
    CHECK_THROWS_AS(ValidateTopology(t), ConfigError);
  }
  SUBCASE("duplicate operation code on one channel") {
    StackTopology t = base;
    t.channels[2].ops.push_back(ChannelOp{30, "other"});
    CHECK_THROWS_AS(ValidateTopology(t), ConfigError);
  }
  SUBCASE("line channel without a backward op") {
    StackTopology t = base;
    for (StackChannel& ch : t.channels) {
      if (ch.name == "at") ch.backward_op.clear();
    }
    CHECK_THROWS_AS(ValidateTopology(t), ConfigError);
  }
  SUBCASE("raw framing is not a stack channel") {
    StackTopology t = base;
    t.channels[0].framing = proxy::Framing::kRaw;
    CHECK_THROWS_AS(ValidateTopology(t), ConfigError);
  }
}

TEST_CASE("built-in robustness profiles cover every service and app") {
  StackTopology topo = FixtureTopology();
  for (const char* name : {"fragile", "graceful", "mixed"}) {
    RobustnessProfile p = ProfileByName(name);
    CHECK(p.name == name);
    ValidateProfile(p, topo);
  }
  CHECK(ProfileByName("fragile").handlers.at("sensors-service") ==
        Handler::kUnhandled);
  CHECK(ProfileByName("graceful").handlers.at("sensors-service") ==
        Handler::kCatchAndRecover);
  CHECK(ProfileByName("mixed").handlers.at("sensors-service") ==
        Handler::kUnhandled);
  CHECK(ProfileByName("mixed").handlers.at("phone_app") ==
        Handler::kCatchAndReport);
  CHECK_THROWS_AS(ProfileByName("bulletproof"), ConfigError);

  RobustnessProfile incomplete = ProfileByName("mixed");
  incomplete.handlers.erase("camera-service");
  CHECK_THROWS_AS(ValidateProfile(incomplete, topo), ConfigError);
}

TEST_CASE("fault routing resolves operations, device nodes, and registry points") {
  StackTopology topo = FixtureTopology();
  std::vector<model::FaultSpec> faults = FixtureFaults();

  SUBCASE("operation fault arms on its channel as-is") {
    model::FaultSpec spec = SpecById(
        faults, "camera-service/camera-rpc.take_picture/S1.return-error/permanent");
    FaultRoute route = ResolveFault(topo, spec);
    CHECK(route.via == FaultRoute::Via::kProxy);
    CHECK(route.channel == "camera");
    REQUIRE(route.armed.size() == 1);
    CHECK(route.armed[0].id == spec.id);
    CHECK(route.armed[0].target.operation == "take_picture");
  }

  SUBCASE("device-node fault becomes one entry per channel operation") {
    model::FaultSpec spec =
        SpecById(faults, "sensorhub-driver/sensorhub-node/R3.deny-resource/permanent");
    FaultRoute route = ResolveFault(topo, spec);
    CHECK(route.via == FaultRoute::Via::kProxy);
    CHECK(route.channel == "sensorhub");
    REQUIRE(route.armed.size() == 1);
    CHECK(route.armed[0].id == spec.id);
    CHECK(route.armed[0].target.kind == model::TargetKind::kOperation);
    CHECK(route.armed[0].target.interface_name == "sensorhub-channel");
    CHECK(route.armed[0].target.operation == "read");
    CHECK(route.armed[0].target.channel == model::ChannelKind::kDeviceFile);
  }

  SUBCASE("device-node fault on a line channel covers both flow directions") {
    model::FaultSpec spec =
        SpecById(faults, "baseband/at-device-node/R3.deny-resource/permanent");
    FaultRoute route = ResolveFault(topo, spec);
    CHECK(route.via == FaultRoute::Via::kProxy);
    CHECK(route.channel == "at");
    REQUIRE(route.armed.size() == 2);
    std::set<std::string> ops = {route.armed[0].target.operation,
                                 route.armed[1].target.operation};
    CHECK(ops == std::set<std::string>{"write", "read"});
  }

  SUBCASE("registry faults route to the owning process") {
    model::FaultSpec db =
        SpecById(faults, "package-manager/package-db/R2.return-error/permanent");
    FaultRoute route = ResolveFault(topo, db);
    CHECK(route.via == FaultRoute::Via::kRegistry);
    CHECK(route.process == "system_server");

    model::FaultSpec heap =
        SpecById(faults, "camera-service/frame-heap/R3.deny-resource/permanent");
    CHECK(ResolveFault(topo, heap).process == "media_server");

    model::FaultSpec lifecycle =
        SpecById(faults, "rild/rild-proc/R1.deny-resource/permanent");
    CHECK(ResolveFault(topo, lifecycle).process == "rild");
  }

  SUBCASE("every derived fault resolves somewhere") {
    for (const model::FaultSpec& spec : faults) {
      CHECK_NOTHROW(ResolveFault(topo, spec));
    }
  }

  SUBCASE("unserved points are named in the error") {
    model::FaultSpec spec = SpecById(
        faults, "camera-service/camera-rpc.take_picture/S1.return-error/permanent");
    spec.component = "nobody";
    try {
      ResolveFault(topo, spec);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("nobody/camera-rpc.take_picture") !=
            std::string::npos);
    }
  }
}

TEST_CASE("stack boots, answers health, and serves every action fault-free") {
  TempDir dir;
  StackOptions options;
  options.runtime_dir = dir.path;
  options.profile = "mixed";
  options.seed = 7;
  StackHandle stack(FixtureTopology(), options);
  stack.Start();
  CHECK(stack.IsRunning());
  CHECK(stack.boot_index() == 0);

  std::vector<ProcessHealth> health = stack.Health();
  REQUIRE(health.size() == 5);
  std::set<int32_t> pids;
  for (const ProcessHealth& h : health) {
    CAPTURE(h.name);
    CHECK(h.running);
    CHECK(h.responsive);
    CHECK(h.pid > 0);
    CHECK(h.restarts == 0);
    pids.insert(h.pid);
  }
  CHECK(pids.size() == 5);

  TriggerResult picture = stack.Trigger("take_picture");
  CHECK(picture.ok());
  CHECK(picture.detail == "captured");
  CHECK(picture.image.size() == 4096);

  TriggerResult activities = stack.Trigger("show_activities");
  CHECK(activities.ok());
  CHECK(activities.value == 4);

  TriggerResult packages = stack.Trigger("list_packages");
  CHECK(packages.ok());
  CHECK(packages.value == 5);

  TriggerResult sensor = stack.Trigger("read_sensor");
  CHECK(sensor.ok());
  REQUIRE(sensor.value.has_value());
  CHECK(*sensor.value >= 400);
  CHECK(*sensor.value < 500);

  TriggerResult dial = stack.Trigger("dial", "5550199");
  CHECK(dial.ok());

  TriggerResult state = stack.Trigger("get_state");
  CHECK(state.ok());
  CHECK(state.value == 0);

  TriggerResult stop = stack.Trigger("stop_activity", "browser");
  CHECK(stop.ok());
  CHECK(stop.detail == "stopped browser");

  CHECK_THROWS_AS(stack.Trigger("fly_to_moon"), ConfigError);

  // A short mixed burst; everything must keep answering.
  for (int i = 0; i < 12; ++i) {
    const char* actions[] = {"show_activities", "read_sensor", "get_state",
                             "list_packages"};
    TriggerResult r = stack.Trigger(actions[i % 4]);
    CAPTURE(i);
    CHECK(r.ok());
  }

  CHECK(stack.CollectInjections().empty());

  // Grammar property doubles as the fault-free soundness check: ReadLog
  // asserts every line parses.
  std::vector<LogLine> lines = ReadLog(stack.log_path());
  size_t ups = 0;
  for (const LogLine& l : lines) {
    if (l.message == "process up") ++ups;
    CHECK(l.severity != Severity::kFatal);
    CHECK(l.message.find("FATAL EXCEPTION") == std::string::npos);
    CHECK(l.message.find("ANR in") == std::string::npos);
  }
  CHECK(ups == 5);

  stack.Stop();
  CHECK_FALSE(stack.IsRunning());
  stack.Stop();  // idempotent
}

TEST_CASE("supervisor restarts a killed process and rearms its registry faults") {
  TempDir dir;
  StackOptions options;
  options.runtime_dir = dir.path;
  options.profile = "mixed";
  StackHandle stack(FixtureTopology(), options);
  stack.Start();

  std::vector<model::FaultSpec> faults = FixtureFaults();
  FaultRoute route = stack.ArmFault(
      SpecById(faults, "package-manager/package-db/R2.return-error/permanent"));
  CHECK(route.via == FaultRoute::Via::kRegistry);

  // Mixed package-manager recovers, so the denial reads as an empty list.
  TriggerResult before = stack.Trigger("list_packages");
  CHECK(before.ok());
  CHECK(before.value == 0);
  size_t injections_before = stack.CollectInjections().size();
  CHECK(injections_before > 0);

  int32_t pid = PidOf(stack, "system_server");
  REQUIRE(pid > 0);
  ::kill(pid, SIGKILL);

  REQUIRE(WaitFor(
      [&] {
        for (const ProcessHealth& h : stack.Health()) {
          if (h.name == "system_server") {
            return h.running && h.responsive && h.restarts == 1;
          }
        }
        return false;
      },
      8000));
  CHECK(PidOf(stack, "system_server") != pid);

  // The respawned process read its rewritten config, so the registry fault
  // is still armed.
  TriggerResult after = stack.Trigger("list_packages");
  CHECK(after.ok());
  CHECK(after.value == 0);
  CHECK(stack.CollectInjections().size() > injections_before);

  std::vector<LogLine> lines = ReadLog(stack.log_path());
  CHECK(LogContains(lines, "system_server exited unexpectedly (signal 9)"));
  CHECK(LogContains(lines, "restarted system_server"));
  stack.Stop();
}

TEST_CASE("lifecycle denial exhausts restarts and the supervisor gives up") {
  TempDir dir;
  StackTopology topo = FixtureTopology();
  for (SimProcess& p : topo.processes) {
    p.restart.backoff_ms = 100;
  }
  StackOptions options;
  options.runtime_dir = dir.path;
  options.profile = "mixed";
  StackHandle stack(topo, options);
  stack.Start();

  std::vector<model::FaultSpec> faults = FixtureFaults();
  stack.ArmFault(SpecById(faults, "rild/rild-proc/R1.deny-resource/permanent"));

  int32_t pid = PidOf(stack, "rild");
  REQUIRE(pid > 0);
  ::kill(pid, SIGKILL);

  REQUIRE(WaitFor(
      [&] { return LogContains(ReadLog(stack.log_path()), "giving up on rild"); },
      10000));

  std::vector<LogLine> lines = ReadLog(stack.log_path());
  CHECK(LogContains(lines, "process resources denied, cannot start"));
  CHECK(LogCount(lines, "restarted rild") == 3);
  for (const ProcessHealth& h : stack.Health()) {
    if (h.name == "rild") {
      CHECK_FALSE(h.running);
      CHECK(h.restarts == 3);
    }
  }
  stack.Stop();
}

TEST_CASE("a stalled app action trips the watchdog exactly once per episode") {
  TempDir dir;
  StackOptions options;
  options.runtime_dir = dir.path;
  options.profile = "mixed";
  StackSettings fast = FixtureTopology().settings;
  fast.anr_threshold_ms = 800;
  fast.watchdog_poll_ms = 100;
  fast.rpc_timeout_ms = 600;
  options.settings_override = fast;
  StackHandle stack(FixtureTopology(), options);
  stack.Start();

  std::vector<model::FaultSpec> faults = FixtureFaults();
  stack.ArmFault(Certain(SpecById(
      faults, "activity-manager/am-rpc.stop_activity/S2.stall/transient")));

  int64_t t0 = NowEpochMs();
  TriggerResult r = stack.Trigger("stop_activity");
  CHECK(r.status == CallStatus::kTimedOut);

  REQUIRE(WaitFor(
      [&] { return LogContains(ReadLog(stack.log_path()), "ANR in camera_app"); },
      4000));
  std::vector<LogLine> lines = ReadLog(stack.log_path());
  for (const LogLine& l : lines) {
    if (l.message == "ANR in camera_app") {
      // Fires after the threshold, not eagerly.
      CHECK(l.epoch_ms >= t0 + fast.anr_threshold_ms - 50);
      CHECK(l.epoch_ms <= t0 + 3 * fast.anr_threshold_ms);
    }
  }

  // One report per episode, and the rest of the stack keeps serving.
  std::this_thread::sleep_for(std::chrono::milliseconds(1800));
  CHECK(LogCount(ReadLog(stack.log_path()), "ANR in camera_app") == 1);
  TriggerResult sensor = stack.Trigger("read_sensor");
  CHECK(sensor.ok());
  stack.Stop();
}

TEST_CASE("an unhandled failure kills every service co-hosted in the process") {
  TempDir dir;
  StackOptions options;
  options.runtime_dir = dir.path;
  options.profile = "fragile";
  StackHandle stack(FixtureTopology(), options);
  stack.Start();

  int32_t pid = PidOf(stack, "system_server");
  REQUIRE(pid > 0);

  std::vector<model::FaultSpec> faults = FixtureFaults();
  stack.ArmFault(SpecById(
      faults, "sensorhub-driver/sensorhub-channel.read/S1.return-error/permanent"));

  stack.Trigger("read_sensor");

  REQUIRE(WaitFor(
      [&] {
        return LogContains(ReadLog(stack.log_path()), "in sensors-service");
      },
      5000));

  // Heartbeats run every 500 ms, so two more periods is enough for any
  // survivor to show itself.
  std::this_thread::sleep_for(std::chrono::milliseconds(1200));
  std::vector<LogLine> lines = ReadLog(stack.log_path());
  int64_t fatal_epoch = 0;
  for (const LogLine& l : lines) {
    if (l.pid == pid && l.message.find("FATAL EXCEPTION") != std::string::npos) {
      CHECK(l.message.find("in sensors-service") != std::string::npos);
      fatal_epoch = l.epoch_ms;
    }
  }
  REQUIRE(fatal_epoch > 0);
  // Pid-scoped silence: the dead process wrote nothing after its fatal
  // line, even though a restarted instance may log under a new pid.
  for (const LogLine& l : lines) {
    if (l.pid == pid) CHECK(l.epoch_ms <= fatal_epoch);
  }
  stack.Stop();
}

TEST_CASE("handler profile decides whether the same fault crashes or recovers") {
  std::vector<model::FaultSpec> faults = FixtureFaults();
  model::FaultSpec spec = SpecById(
      faults, "camera-service/camera-rpc.take_picture/S1.return-error/permanent");

  TempDir fragile_dir;
  {
    StackOptions options;
    options.runtime_dir = fragile_dir.path;
    options.profile = "fragile";
    StackHandle stack(FixtureTopology(), options);
    stack.Start();
    stack.ArmFault(spec);
    TriggerResult r = stack.Trigger("take_picture");
    CHECK_FALSE(r.ok());
    REQUIRE(WaitFor(
        [&] {
          return LogContains(ReadLog(stack.log_path()), "in camera_app");
        },
        5000));
    CHECK(LogContains(ReadLog(stack.log_path()), "FATAL EXCEPTION"));
    stack.Stop();
  }

  TempDir graceful_dir;
  {
    StackOptions options;
    options.runtime_dir = graceful_dir.path;
    options.profile = "graceful";
    StackHandle stack(FixtureTopology(), options);
    stack.Start();
    stack.ArmFault(spec);
    TriggerResult r = stack.Trigger("take_picture");
    CHECK(r.ok());
    CHECK(r.image.size() == 4096);
    std::vector<LogLine> lines = ReadLog(stack.log_path());
    CHECK(LogContains(lines, "restarting camera service binding"));
    CHECK_FALSE(LogContains(lines, "FATAL EXCEPTION"));
    for (const LogLine& l : lines) CHECK(l.severity != Severity::kFatal);
    stack.Stop();
  }
}

TEST_CASE("reset restores state files and starts fresh evidence") {
  TempDir dir;
  StackOptions options;
  options.runtime_dir = dir.path;
  options.profile = "mixed";
  StackHandle stack(FixtureTopology(), options);
  stack.Start();

  std::string db_path = stack.state_dir() + "/package-db";
  std::string pristine = ReadFile(stack.pristine_dir() + "/package-db");
  REQUIRE(pristine.find("browser:11") != std::string::npos);
  CHECK(ReadFile(db_path) == pristine);

  std::vector<model::FaultSpec> faults = FixtureFaults();
  stack.ArmFault(SpecById(
      faults, "package-manager/package-db/R5.corrupt-payload/permanent"));
  stack.Trigger("list_packages");
  CHECK(ReadFile(db_path) != pristine);
  CHECK(stack.CollectInjections().size() > 0);
  std::string old_log = stack.log_path();

  stack.Reset(99);
  CHECK(stack.boot_index() == 1);
  CHECK(stack.IsRunning());
  CHECK(ReadFile(db_path) == pristine);
  CHECK(stack.CollectInjections().empty());
  CHECK(stack.log_path() != old_log);
  CHECK(fs::exists(old_log));

  TriggerResult packages = stack.Trigger("list_packages");
  CHECK(packages.ok());
  CHECK(packages.value == 5);
  stack.Stop();
}

TEST_CASE("reset forces its way past a wedged process") {
  TempDir dir;
  StackOptions options;
  options.runtime_dir = dir.path;
  options.profile = "mixed";
  options.teardown_timeout_ms = 3000;
  StackHandle stack(FixtureTopology(), options);
  stack.Start();

  // Debug facility: the process acknowledges and then stops serving its
  // control socket, so only the kill escalation can clear it.
  wire::Transaction hang;
  hang.code = kCtlHang;
  CallResult r = RpcCall(stack.control_socket("phone_app"), hang, 1000);
  CHECK(r.status == CallStatus::kOk);

  std::string old_log = stack.log_path();
  auto t0 = std::chrono::steady_clock::now();
  stack.Reset();
  auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  CHECK(elapsed < 6000);
  CHECK(stack.boot_index() == 1);
  CHECK(LogContains(ReadLog(old_log), "killing unresponsive phone_app"));

  TriggerResult dial = stack.Trigger("dial");
  CHECK(dial.ok());
  stack.Stop();
}

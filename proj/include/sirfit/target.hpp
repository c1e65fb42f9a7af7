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
//
// The simulated service stack: a miniature multi-process phone OS that acts
// as the injection victim.  A topology description binds service interfaces
// to local sockets and resources to in-process call points; the harness
// spawns one operating-system process per SimProcess, fronts every channel
// with an interposition proxy, and supervises restarts, health, triggers,
// and resets.
//
// Services hosted by the same process share a crash domain: an unhandled
// failure in any of them takes the whole process down.

#ifndef SIRFIT_TARGET_HPP
#define SIRFIT_TARGET_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sirfit/inject.hpp"
#include "sirfit/logline.hpp"
#include "sirfit/model.hpp"
#include "sirfit/proxy.hpp"
#include "sirfit/target_msgs.hpp"

namespace sirfit::target {

// --- Topology ----------------------------------------------------------------

struct RestartPolicy {
  int max_restarts = 3;
  int64_t backoff_ms = 500;
};

struct SimProcess {
  std::string name;
  std::vector<std::string> services;
  // App actions this process performs on request (apps only).
  std::vector<std::string> actions;
  // Call point consulted once at process start; process-lifecycle faults
  // (start denial, start hang) are realized here.
  std::string lifecycle_point;
  // Additional in-process call points this process instruments.
  std::vector<std::string> registry_points;
  RestartPolicy restart;
};

struct ChannelOp {
  uint32_t code = 0;
  std::string name;
};

struct StackChannel {
  std::string name;            // short handle, also the connect-map key
  proxy::Framing framing = proxy::Framing::kFrame;
  std::string component;       // architecture component providing the interface
  std::string interface_name;
  std::string socket;          // client-side path, relative to the runtime dir
  std::string server;          // hosting process, or "@harness" for devices
  // Resource whose faults are realized on this channel's traffic (device
  // nodes have no separate call site; denial of the node reads as denial
  // of every operation riding it).  Empty when none.
  std::string device_node;
  std::vector<ChannelOp> ops;  // frame channels
  std::string forward_op;      // line channels: client-to-server lines
  std::string backward_op;     // line channels: server-to-client lines

  std::string PointFor(const std::string& op) const;
};

struct StateFile {
  std::string name;     // relative to the state directory
  std::string content;  // pristine content
};

struct StackSettings {
  int64_t anr_threshold_ms = 2000;
  int64_t watchdog_poll_ms = 200;
  int64_t rpc_timeout_ms = 1000;
  int64_t baseband_event_interval_ms = 700;
  int listen_backlog = 128;
};

struct StackTopology {
  int schema_version = 1;
  std::string name;
  StackSettings settings;
  std::vector<SimProcess> processes;
  std::vector<StackChannel> channels;
  std::vector<StateFile> state_files;
};

// Parses and validates a topology description.  Throws ConfigError with the
// offending element's path.
StackTopology LoadTopology(const std::string& text);
StackTopology LoadTopologyFile(const std::string& path);

// Structural checks: stack-wide unique process, service, and channel names;
// channel servers that exist; per-framing op requirements.  The loader runs
// this; call it directly for hand-built topologies.  Throws ConfigError.
void ValidateTopology(const StackTopology& topology);

// --- Robustness profiles -----------------------------------------------------

struct RobustnessProfile {
  std::string name;
  std::map<std::string, Handler> handlers;  // one entry per hosted service
};

// Built-in profiles: "fragile" (everything unhandled), "graceful"
// (everything catch-and-recover), and "mixed" (per-service blend).  Throws
// ConfigError for unknown names.
RobustnessProfile ProfileByName(const std::string& name);

// Every hosted service and app must have a handler entry.  Throws
// ConfigError naming the first service without one.
void ValidateProfile(const RobustnessProfile& profile,
                     const StackTopology& topology);

// --- Fault routing -----------------------------------------------------------

// Where a fault entry is realized at run time.
struct FaultRoute {
  enum class Via { kProxy, kRegistry };
  Via via = Via::kProxy;
  std::string channel;  // kProxy: channel name
  std::string process;  // kRegistry: owning process
  // What actually gets armed.  Operation faults arm as-is; device-node
  // resource faults arm one translated entry per channel operation, with
  // the original fault id kept so the evidence stays attributable.
  std::vector<model::FaultSpec> armed;
};

// Resolves an entry against the topology.  Throws ConfigError naming the
// injection point when nothing serves it.
FaultRoute ResolveFault(const StackTopology& topology,
                        const model::FaultSpec& spec);

// --- Stack handle ------------------------------------------------------------

struct TriggerResult {
  std::string action;
  CallStatus status = CallStatus::kConnectFailed;
  int32_t rpc_status = 0;
  int64_t latency_ms = 0;
  std::string detail;            // app-reported note
  std::vector<uint8_t> image;    // take_picture payload
  std::optional<int64_t> value;  // numeric results

  bool ok() const { return status == CallStatus::kOk; }
};

struct ProcessHealth {
  std::string name;
  bool running = false;     // supervisor sees a live pid
  bool responsive = false;  // control health round trip succeeded
  int32_t pid = 0;
  int restarts = 0;
};

struct StackOptions {
  std::string runtime_dir;  // required; sockets, logs, and state live here
  std::string profile = "mixed";
  uint64_t seed = 1;
  int64_t teardown_timeout_ms = 5000;
  // Test hook: overrides the topology's timing block.
  std::optional<StackSettings> settings_override;
};

// Owns one running stack: harness-hosted device endpoints, one proxy per
// channel, the child processes, and their supervision.  All channel proxies
// share one injection controller so arming and evidence collection have a
// single home; children keep their own controllers and append evidence to
// the boot's injection log file.
class StackHandle {
 public:
  StackHandle(StackTopology topology, StackOptions options);
  ~StackHandle();

  StackHandle(const StackHandle&) = delete;
  StackHandle& operator=(const StackHandle&) = delete;

  // Boots the stack: state sync, devices, proxies, children, health gate.
  // Throws HarnessError when a process fails to come up.
  void Start();

  // Graceful quit with forced-kill escalation after the teardown timeout.
  // Safe on wedged stacks.  Idempotent.
  void Stop();

  // Stop, restore state files from the pristine snapshot, rotate the log
  // and injection log, boot again.  The optional seed drives the new
  // boot's controllers.
  void Reset(std::optional<uint64_t> new_seed = std::nullopt);

  bool IsRunning() const;
  std::vector<ProcessHealth> Health();

  // Runs an app action end to end and reports what the app said.  The
  // calling side enforces the RPC timeout, so a wedged app reads as
  // kTimedOut while the stack stays usable.
  TriggerResult Trigger(const std::string& action,
                        const std::string& argument = "");

  // Arms one entry on top of whatever is already armed.  Returns where it
  // went.  Throws ConfigError for unresolvable points.
  FaultRoute ArmFault(const model::FaultSpec& spec);
  void DisarmAll();

  // Foreground-trigger approximation for active-trigger filters on
  // channel faults.
  void SetActiveTrigger(const std::string& tag);
  void ClearActiveTrigger();

  // Proxy-side evidence plus everything the children appended, in
  // timestamp order.
  std::vector<inject::InjectionRecord> CollectInjections();

  int boot_index() const;
  std::string log_path() const;            // current boot's log
  std::string injection_log_path() const;  // current boot's child evidence
  std::string state_dir() const;
  std::string pristine_dir() const;
  std::string control_socket(const std::string& process) const;

  const StackTopology& topology() const { return topology_; }
  const RobustnessProfile& profile() const { return profile_; }
  const StackOptions& options() const { return options_; }
  const StackSettings& settings() const { return settings_; }
  // Maps each app action to the process that performs it.
  const std::map<std::string, std::string>& action_routes() const {
    return action_routes_;
  }

 private:
  struct Child;
  struct Device;

  std::string RuntimePath(const std::string& name) const;
  std::string RealSocket(const StackChannel& channel) const;
  void SyncStateFromPristine();
  void WriteChildConfig(Child& child);
  void SpawnChild(Child& child);
  void MonitorLoop();
  void StopChildren();
  void StopProxiesAndDevices();
  void ArmChild(Child& child);

  StackTopology topology_;
  StackOptions options_;
  StackSettings settings_;
  RobustnessProfile profile_;
  std::map<std::string, std::string> action_routes_;

  mutable std::mutex mu_;
  bool running_ = false;
  bool stopping_ = false;
  int boot_index_ = -1;
  uint64_t boot_seed_ = 0;
  std::unique_ptr<inject::InjectionController> controller_;
  std::vector<std::unique_ptr<proxy::Proxy>> proxies_;
  std::vector<std::unique_ptr<Device>> devices_;
  std::vector<std::unique_ptr<Child>> children_;
  std::vector<model::FaultSpec> armed_proxy_;     // controller Arm replaces
  std::vector<model::FaultSpec> armed_registry_;  // re-armed on respawn
  std::thread monitor_;
  std::unique_ptr<LogWriter> log_;
};

// --- Child process entry -----------------------------------------------------

// Runs one stack process to completion.  Invoked by ChildEntryFromArgv in
// re-executed binaries; config_path names the JSON the harness wrote.
int RunChildProcess(const std::string& config_path);

// Returns -1 when this invocation is not a stack child; otherwise runs the
// child and returns its exit code.  Call first thing in main().
int ChildEntryFromArgv(int argc, char** argv);

}  // namespace sirfit::target

#endif  // SIRFIT_TARGET_HPP

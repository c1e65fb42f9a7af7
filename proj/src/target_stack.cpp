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
// StackHandle: boots the simulated stack and supervises it.  The harness
// owns the device endpoints and every channel proxy; the stack processes
// are real child processes of this one, re-executed from the current
// binary.  One boot equals one experiment environment: its own seed, its
// own log, its own injection evidence, state restored from the pristine
// snapshot.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>

#include <json.hpp>

#include "sirfit/errors.hpp"
#include "sirfit/net.hpp"
#include "sirfit/protocol.hpp"
#include "sirfit/rng.hpp"
#include "sirfit/target.hpp"

namespace sirfit::target {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int64_t SteadyMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void SleepMs(int64_t ms) {
  std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

wire::Transaction ControlRequest(uint32_t code) {
  wire::Transaction t;
  t.code = code;
  return t;
}

}  // namespace

// One harness-hosted device endpoint.  Serves its real socket on a
// dedicated thread, one connection at a time; connection concurrency is
// bounded by the sequential services talking to it.
struct StackHandle::Device {
  Device(std::string name_in, const std::string& path, int backlog,
         std::function<wire::Transaction(const wire::Transaction&)> handle_in)
      : name(std::move(name_in)), handle(std::move(handle_in)) {
    listener = net::Listen(path, backlog);
    thread = std::thread([this] { Serve(); });
  }

  ~Device() { StopDevice(); }

  void StopDevice() {
    if (stopped.exchange(true)) return;
    net::ShutdownBoth(listener.get());
    {
      std::lock_guard<std::mutex> lock(conn_mu);
      if (active_conn >= 0) net::ShutdownBoth(active_conn);
    }
    if (thread.joinable()) thread.join();
  }

  void Serve() {
    for (;;) {
      net::Fd conn = net::Accept(listener.get());
      if (!conn.valid()) return;
      {
        std::lock_guard<std::mutex> lock(conn_mu);
        if (stopped) return;
        active_conn = conn.get();
      }
      for (;;) {
        net::FrameRead read = net::ReadFrameBytes(conn.get());
        if (read.status != net::FrameRead::Status::kFrame) break;
        wire::DecodeResult decoded = wire::Decode(read.bytes);
        if (!std::holds_alternative<wire::Transaction>(decoded)) break;
        wire::Transaction reply = handle(std::get<wire::Transaction>(decoded));
        if (!net::WriteAll(conn.get(), wire::Encode(reply))) break;
      }
      std::lock_guard<std::mutex> lock(conn_mu);
      active_conn = -1;
    }
  }

  std::string name;
  std::function<wire::Transaction(const wire::Transaction&)> handle;
  net::Fd listener;
  std::thread thread;
  std::mutex conn_mu;
  int active_conn = -1;
  std::atomic<bool> stopped{false};
};

struct StackHandle::Child {
  SimProcess def;
  std::string config_path;
  std::string control_path;
  pid_t pid = -1;
  int restarts = 0;
  bool gave_up = false;
};

StackHandle::StackHandle(StackTopology topology, StackOptions options)
    : topology_(std::move(topology)), options_(std::move(options)) {
  if (options_.runtime_dir.empty()) {
    throw ConfigError("stack options need a runtime_dir");
  }
  ValidateTopology(topology_);
  settings_ = options_.settings_override.value_or(topology_.settings);
  profile_ = ProfileByName(options_.profile);
  ValidateProfile(profile_, topology_);
  for (const SimProcess& p : topology_.processes) {
    for (const std::string& action : p.actions) {
      action_routes_[action] = p.name;
    }
  }
  boot_seed_ = options_.seed;
}

StackHandle::~StackHandle() {
  try {
    Stop();
  } catch (...) {
    // Destruction must not throw; a stuck teardown already logged.
  }
}

std::string StackHandle::RuntimePath(const std::string& name) const {
  return options_.runtime_dir + "/" + name;
}

std::string StackHandle::RealSocket(const StackChannel& channel) const {
  return RuntimePath("sock/" + channel.socket + ".real");
}

int StackHandle::boot_index() const { return boot_index_; }

std::string StackHandle::log_path() const {
  return RuntimePath("logs/boot-" + std::to_string(boot_index_) + ".log");
}

std::string StackHandle::injection_log_path() const {
  return RuntimePath("logs/boot-" + std::to_string(boot_index_) + "-inj.jsonl");
}

std::string StackHandle::state_dir() const { return RuntimePath("state"); }
std::string StackHandle::pristine_dir() const { return RuntimePath("pristine"); }

std::string StackHandle::control_socket(const std::string& process) const {
  return RuntimePath("sock/ctl-" + process);
}

void StackHandle::SyncStateFromPristine() {
  fs::create_directories(state_dir());
  fs::create_directories(pristine_dir());
  for (const StateFile& f : topology_.state_files) {
    std::string pristine = pristine_dir() + "/" + f.name;
    if (!fs::exists(pristine)) {
      std::ofstream out(pristine, std::ios::trunc | std::ios::binary);
      out << f.content;
    }
    fs::copy_file(pristine, state_dir() + "/" + f.name,
                  fs::copy_options::overwrite_existing);
  }
}

void StackHandle::WriteChildConfig(Child& child) {
  json root;
  root["process"] = child.def.name;
  root["services"] = child.def.services;
  root["actions"] = child.def.actions;
  json handlers = json::object();
  for (const auto& [who, handler] : profile_.handlers) {
    handlers[who] = HandlerName(handler);
  }
  root["handlers"] = handlers;
  root["log_path"] = log_path();
  root["injection_log_path"] = injection_log_path();
  root["control_socket"] = child.control_path;
  root["state_dir"] = state_dir();
  root["seed"] = Rng(boot_seed_).Fork(child.def.name).Next();
  root["harness_pid"] = static_cast<int32_t>(::getpid());
  json settings;
  settings["anr_threshold_ms"] = settings_.anr_threshold_ms;
  settings["watchdog_poll_ms"] = settings_.watchdog_poll_ms;
  settings["rpc_timeout_ms"] = settings_.rpc_timeout_ms;
  settings["baseband_event_interval_ms"] = settings_.baseband_event_interval_ms;
  settings["listen_backlog"] = settings_.listen_backlog;
  root["settings"] = settings;
  root["lifecycle_point"] = child.def.lifecycle_point;
  root["registry_points"] = child.def.registry_points;

  std::vector<model::FaultSpec> registry_specs;
  for (const model::FaultSpec& spec : armed_registry_) {
    FaultRoute route = ResolveFault(topology_, spec);
    if (route.process == child.def.name) registry_specs.push_back(spec);
  }
  if (registry_specs.empty()) {
    root["armed_model"] = nullptr;
  } else {
    root["armed_model"] =
        json::parse(model::ExportFaultModel(topology_.name, registry_specs));
  }

  json channels = json::array();
  for (const StackChannel& ch : topology_.channels) {
    json c;
    c["name"] = ch.name;
    c["framing"] = proxy::FramingName(ch.framing);
    c["component"] = ch.component;
    c["interface"] = ch.interface_name;
    json ops = json::array();
    for (const ChannelOp& op : ch.ops) {
      ops.push_back(json{{"code", op.code}, {"name", op.name}});
    }
    c["ops"] = ops;
    c["forward_op"] = ch.forward_op;
    c["backward_op"] = ch.backward_op;
    c["client_socket"] = RuntimePath("sock/" + ch.socket);
    c["real_socket"] = ch.server == child.def.name ? RealSocket(ch) : "";
    channels.push_back(std::move(c));
  }
  root["channels"] = channels;

  std::ofstream out(child.config_path, std::ios::trunc | std::ios::binary);
  out << root.dump(2) << "\n";
  if (!out) throw HarnessError("cannot write " + child.config_path);
}

void StackHandle::SpawnChild(Child& child) {
  pid_t pid = ::fork();
  if (pid < 0) throw HarnessError("fork failed: " + std::string(strerror(errno)));
  if (pid == 0) {
    // Only async-signal-safe work between fork and exec.
    const char* exe = "/proc/self/exe";
    const char* argv[] = {exe, "--sirfit-child", child.config_path.c_str(),
                          nullptr};
    ::execv(exe, const_cast<char* const*>(argv));
    ::_exit(127);
  }
  child.pid = pid;
}

void StackHandle::Start() {
  std::lock_guard<std::mutex> lock(mu_);
  if (running_) throw HarnessError("stack already running");
  stopping_ = false;
  ++boot_index_;

  fs::create_directories(RuntimePath("sock"));
  fs::create_directories(RuntimePath("cfg"));
  fs::create_directories(RuntimePath("logs"));
  SyncStateFromPristine();

  log_ = std::make_unique<LogWriter>(log_path(), static_cast<int32_t>(::getpid()));
  log_->Write(Severity::kInfo, "harness",
              "boot " + std::to_string(boot_index_) + " starting, seed " +
                  std::to_string(boot_seed_) + ", profile " + profile_.name);
  {
    // Touch the evidence file so collectors can read an injection-free boot.
    std::ofstream touch(injection_log_path(), std::ios::app);
  }

  controller_ = std::make_unique<inject::InjectionController>(boot_seed_);
  armed_proxy_.clear();
  armed_registry_.clear();

  // Device endpoints first; proxies connect upstream to them.
  for (const StackChannel& ch : topology_.channels) {
    if (ch.server != "@harness") continue;
    uint32_t read_code = ch.ops.front().code;
    auto counter = std::make_shared<std::atomic<uint64_t>>(0);
    std::function<wire::Transaction(const wire::Transaction&)> handle;
    if (ch.name == "camdev") {
      handle = [counter, read_code](const wire::Transaction& request) {
        if (request.code != read_code) {
          return proto::MakeErrorReply(request.code,
                                       model::SymbolicError::kServiceError);
        }
        std::vector<uint8_t> pixels = MakeFramePixels(counter->fetch_add(1));
        wire::Transaction reply = proto::MakeReply(request.code);
        reply.fields.push_back(wire::Field{kTagImage, pixels});
        reply.fields.push_back(wire::Field{
            kTagImageDigest, static_cast<int64_t>(FrameDigest(pixels))});
        return reply;
      };
    } else if (ch.name == "sensorhub") {
      handle = [counter, read_code](const wire::Transaction& request) {
        if (request.code != read_code) {
          return proto::MakeErrorReply(request.code,
                                       model::SymbolicError::kServiceError);
        }
        int64_t value = 400 + static_cast<int64_t>(counter->fetch_add(1) % 100);
        wire::Transaction reply = proto::MakeReply(request.code);
        reply.fields.push_back(wire::Field{kTagSensorValue, value});
        return reply;
      };
    } else {
      throw ConfigError("no device implementation for channel " + ch.name);
    }
    devices_.push_back(std::make_unique<Device>(
        ch.name, RealSocket(ch), settings_.listen_backlog, std::move(handle)));
  }

  for (const StackChannel& ch : topology_.channels) {
    proxy::ChannelBinding binding;
    binding.framing = ch.framing;
    binding.component = ch.component;
    binding.interface_name = ch.interface_name;
    for (const ChannelOp& op : ch.ops) {
      binding.ops_by_code[op.code] = op.name;
    }
    binding.forward_op = ch.forward_op;
    binding.backward_op = ch.backward_op;
    if (!ch.device_node.empty()) binding.path_hint = "/dev/" + ch.name;
    auto p = std::make_unique<proxy::Proxy>(RuntimePath("sock/" + ch.socket),
                                            RealSocket(ch), binding,
                                            controller_.get());
    p->Start();
    proxies_.push_back(std::move(p));
  }

  for (const SimProcess& def : topology_.processes) {
    auto child = std::make_unique<Child>();
    child->def = def;
    child->config_path = RuntimePath("cfg/" + def.name + ".json");
    child->control_path = control_socket(def.name);
    WriteChildConfig(*child);
    SpawnChild(*child);
    children_.push_back(std::move(child));
  }

  // Health gate: every process must answer on its control socket.
  int64_t deadline = SteadyMs() + 8000;
  for (const auto& child : children_) {
    for (;;) {
      CallResult r =
          RpcCall(child->control_path, ControlRequest(kCtlHealth), 250);
      if (r.status == CallStatus::kOk) break;
      if (SteadyMs() > deadline) {
        log_->Write(Severity::kError, "harness",
                    child->def.name + " failed to come up");
        throw HarnessError("process " + child->def.name +
                           " did not answer health checks");
      }
      SleepMs(50);
    }
  }
  log_->Write(Severity::kInfo, "harness",
              "boot " + std::to_string(boot_index_) + " up, " +
                  std::to_string(children_.size()) + " processes");

  monitor_ = std::thread([this] { MonitorLoop(); });
  running_ = true;
}

void StackHandle::MonitorLoop() {
  struct Respawn {
    Child* child;
    int64_t backoff_ms;
  };
  for (;;) {
    std::vector<Respawn> respawns;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (stopping_) return;
      for (const auto& child : children_) {
        if (child->pid <= 0) continue;
        int status = 0;
        pid_t got = ::waitpid(child->pid, &status, WNOHANG);
        if (got != child->pid) continue;
        child->pid = -1;
        std::string what =
            WIFSIGNALED(status)
                ? "signal " + std::to_string(WTERMSIG(status))
                : "status " + std::to_string(WEXITSTATUS(status));
        log_->Write(Severity::kError, "supervisor",
                    child->def.name + " exited unexpectedly (" + what + ")");
        if (child->restarts < child->def.restart.max_restarts) {
          respawns.push_back(Respawn{child.get(), child->def.restart.backoff_ms});
        } else if (!child->gave_up) {
          child->gave_up = true;
          log_->Write(Severity::kError, "supervisor",
                      "giving up on " + child->def.name + " after " +
                          std::to_string(child->restarts) + " restarts");
        }
      }
    }
    for (const Respawn& r : respawns) {
      SleepMs(r.backoff_ms);
      std::lock_guard<std::mutex> lock(mu_);
      if (stopping_) return;
      ++r.child->restarts;
      // The rewritten config carries the currently armed registry faults,
      // so arming survives the respawn.
      WriteChildConfig(*r.child);
      SpawnChild(*r.child);
      log_->Write(Severity::kInfo, "supervisor",
                  "restarted " + r.child->def.name + " (attempt " +
                      std::to_string(r.child->restarts) + ")");
    }
    SleepMs(50);
  }
}

void StackHandle::StopChildren() {
  // Children first, proxies after: releasing a parked stall while handlers
  // still run would write failure noise into the log during teardown.
  for (auto& child : children_) {
    if (child->pid <= 0) continue;
    RpcCall(child->control_path, ControlRequest(kCtlQuit), 400);
    int64_t deadline = SteadyMs() + 400;
    bool reaped = false;
    while (SteadyMs() < deadline) {
      int status = 0;
      if (::waitpid(child->pid, &status, WNOHANG) == child->pid) {
        reaped = true;
        break;
      }
      SleepMs(10);
    }
    if (!reaped) {
      if (log_ != nullptr) {
        log_->Write(Severity::kWarn, "supervisor",
                    "killing unresponsive " + child->def.name);
      }
      ::kill(child->pid, SIGKILL);
      ::waitpid(child->pid, nullptr, 0);
    }
    child->pid = -1;
  }
  children_.clear();
}

void StackHandle::StopProxiesAndDevices() {
  for (auto& p : proxies_) p->Stop();
  proxies_.clear();
  for (auto& d : devices_) d->StopDevice();
  devices_.clear();
}

void StackHandle::Stop() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!running_ && monitor_.joinable() == false && children_.empty() &&
        proxies_.empty() && devices_.empty()) {
      return;
    }
    stopping_ = true;
  }
  if (monitor_.joinable()) monitor_.join();
  std::lock_guard<std::mutex> lock(mu_);
  StopChildren();
  StopProxiesAndDevices();
  if (log_ != nullptr) {
    log_->Write(Severity::kInfo, "harness",
                "boot " + std::to_string(boot_index_) + " stopped");
  }
  running_ = false;
}

void StackHandle::Reset(std::optional<uint64_t> new_seed) {
  Stop();
  if (new_seed.has_value()) boot_seed_ = *new_seed;
  Start();
}

bool StackHandle::IsRunning() const {
  std::lock_guard<std::mutex> lock(mu_);
  return running_;
}

std::vector<ProcessHealth> StackHandle::Health() {
  struct Probe {
    std::string name;
    std::string control;
    pid_t pid;
    int restarts;
  };
  std::vector<Probe> probes;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& child : children_) {
      probes.push_back(Probe{child->def.name, child->control_path, child->pid,
                             child->restarts});
    }
  }
  std::vector<ProcessHealth> out;
  for (const Probe& p : probes) {
    ProcessHealth h;
    h.name = p.name;
    h.pid = static_cast<int32_t>(p.pid);
    h.restarts = p.restarts;
    h.running = p.pid > 0 && ::kill(p.pid, 0) == 0;
    if (h.running) {
      CallResult r = RpcCall(p.control, ControlRequest(kCtlHealth), 500);
      h.responsive = r.status == CallStatus::kOk;
      if (h.responsive) {
        if (const wire::Field* f = r.reply.FindField(kCtlTagPid)) {
          if (const auto* v = std::get_if<int32_t>(&f->value)) h.pid = *v;
        }
      }
    }
    out.push_back(std::move(h));
  }
  return out;
}

TriggerResult StackHandle::Trigger(const std::string& action,
                                   const std::string& argument) {
  auto it = action_routes_.find(action);
  if (it == action_routes_.end()) {
    throw ConfigError("no app performs action " + action);
  }
  wire::Transaction request = ControlRequest(kCtlTrigger);
  request.fields.push_back(wire::Field{kCtlTagAction, action});
  request.fields.push_back(wire::Field{kCtlTagArgument, argument});
  int64_t t0 = SteadyMs();
  CallResult r = RpcCall(control_socket(it->second), request,
                         settings_.rpc_timeout_ms + 1000);
  TriggerResult out;
  out.action = action;
  out.status = r.status;
  out.rpc_status = r.rpc_status;
  out.latency_ms = SteadyMs() - t0;
  if (const wire::Field* f = r.reply.FindField(kCtlTagDetail)) {
    if (const auto* s = std::get_if<std::string>(&f->value)) out.detail = *s;
  }
  if (const wire::Field* f = r.reply.FindField(kCtlTagBlob)) {
    if (const auto* b = std::get_if<std::vector<uint8_t>>(&f->value)) {
      out.image = *b;
    }
  }
  if (const wire::Field* f = r.reply.FindField(kCtlTagValue)) {
    if (const auto* v = std::get_if<int64_t>(&f->value)) out.value = *v;
  }
  return out;
}

void StackHandle::ArmChild(Child& child) {
  std::vector<model::FaultSpec> specs;
  for (const model::FaultSpec& spec : armed_registry_) {
    FaultRoute route = ResolveFault(topology_, spec);
    if (route.process == child.def.name) specs.push_back(spec);
  }
  wire::Transaction request = ControlRequest(specs.empty() ? kCtlDisarm : kCtlArm);
  if (!specs.empty()) {
    request.fields.push_back(
        wire::Field{uint16_t{1}, model::ExportFaultModel(topology_.name, specs)});
  }
  CallResult r = RpcCall(child.control_path, request, settings_.rpc_timeout_ms);
  if (r.status != CallStatus::kOk) {
    throw HarnessError("arming " + child.def.name + " failed (" +
                       CallStatusName(r.status) + ")");
  }
}

FaultRoute StackHandle::ArmFault(const model::FaultSpec& spec) {
  FaultRoute route = ResolveFault(topology_, spec);
  std::lock_guard<std::mutex> lock(mu_);
  if (!running_) throw HarnessError("stack is not running");
  if (route.via == FaultRoute::Via::kProxy) {
    for (const model::FaultSpec& armed : route.armed) {
      armed_proxy_.push_back(armed);
    }
    controller_->Arm(armed_proxy_);
  } else {
    armed_registry_.push_back(spec);
    for (const auto& child : children_) {
      if (child->def.name == route.process) {
        ArmChild(*child);
        break;
      }
    }
  }
  if (log_ != nullptr) {
    log_->Write(Severity::kInfo, "harness",
                "armed " + spec.id + " via " +
                    (route.via == FaultRoute::Via::kProxy
                         ? "channel " + route.channel
                         : "process " + route.process));
  }
  return route;
}

void StackHandle::DisarmAll() {
  std::lock_guard<std::mutex> lock(mu_);
  if (!running_) return;
  armed_proxy_.clear();
  bool had_registry = !armed_registry_.empty();
  armed_registry_.clear();
  controller_->Disarm();
  if (had_registry) {
    for (const auto& child : children_) {
      if (child->pid <= 0) continue;
      RpcCall(child->control_path, ControlRequest(kCtlDisarm),
              settings_.rpc_timeout_ms);
    }
  }
  if (log_ != nullptr) {
    log_->Write(Severity::kInfo, "harness", "disarmed all faults");
  }
}

void StackHandle::SetActiveTrigger(const std::string& tag) {
  std::lock_guard<std::mutex> lock(mu_);
  if (controller_ != nullptr) controller_->SetActiveTrigger(tag);
}

void StackHandle::ClearActiveTrigger() {
  std::lock_guard<std::mutex> lock(mu_);
  if (controller_ != nullptr) controller_->ClearActiveTrigger();
}

std::vector<inject::InjectionRecord> StackHandle::CollectInjections() {
  std::vector<inject::InjectionRecord> records;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (controller_ != nullptr) records = controller_->Log();
  }
  std::ifstream in(injection_log_path(), std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(inject::RecordFromJsonLine(line));
    } catch (const ConfigError&) {
      // A process killed mid-append can leave one torn line; evidence
      // before it is intact.
      continue;
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const inject::InjectionRecord& a,
                      const inject::InjectionRecord& b) {
                     if (a.timestamp_ms != b.timestamp_ms) {
                       return a.timestamp_ms < b.timestamp_ms;
                     }
                     if (a.spec_id != b.spec_id) return a.spec_id < b.spec_id;
                     return a.sequence_no < b.sequence_no;
                   });
  return records;
}

}  // namespace sirfit::target

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
// Topology parsing, robustness profiles, and the mapping from fault entries
// to the place that realizes them.

#include "sirfit/target.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sirfit/errors.hpp"

namespace sirfit::target {

namespace {

using nlohmann::json;

std::string ReadFileOrThrow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

[[noreturn]] void Fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

void CheckKeys(const json& j, const std::string& path,
               std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) Fail(path, "unknown key \"" + it.key() + "\"");
  }
}

const json& Require(const json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    Fail(path, std::string("missing required key \"") + key + "\"");
  }
  return *it;
}

std::string RequireString(const json& j, const std::string& path,
                          const char* key) {
  const json& v = Require(j, path, key);
  if (!v.is_string()) Fail(path, std::string(key) + " must be a string");
  return v.get<std::string>();
}

int64_t RequireInt(const json& j, const std::string& path, const char* key) {
  const json& v = Require(j, path, key);
  if (!v.is_number_integer()) Fail(path, std::string(key) + " must be an integer");
  return v.get<int64_t>();
}

std::vector<std::string> StringList(const json& v, const std::string& path) {
  if (!v.is_array()) Fail(path, "must be an array of strings");
  std::vector<std::string> out;
  for (const json& e : v) {
    if (!e.is_string()) Fail(path, "must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

SimProcess ParseProcess(const json& j, const std::string& path) {
  if (!j.is_object()) Fail(path, "process must be an object");
  CheckKeys(j, path,
            {"name", "services", "actions", "lifecycle_point",
             "registry_points", "restart"});
  SimProcess p;
  p.name = RequireString(j, path, "name");
  p.services = StringList(Require(j, path, "services"), path + ".services");
  if (j.contains("actions")) {
    p.actions = StringList(j.at("actions"), path + ".actions");
  }
  if (j.contains("lifecycle_point")) {
    p.lifecycle_point = j.at("lifecycle_point").get<std::string>();
  }
  if (j.contains("registry_points")) {
    p.registry_points =
        StringList(j.at("registry_points"), path + ".registry_points");
  }
  if (j.contains("restart")) {
    const json& r = j.at("restart");
    CheckKeys(r, path + ".restart", {"max_restarts", "backoff_ms"});
    p.restart.max_restarts =
        static_cast<int>(RequireInt(r, path + ".restart", "max_restarts"));
    p.restart.backoff_ms = RequireInt(r, path + ".restart", "backoff_ms");
    if (p.restart.max_restarts < 0) Fail(path + ".restart", "max_restarts < 0");
    if (p.restart.backoff_ms < 0) Fail(path + ".restart", "backoff_ms < 0");
  }
  return p;
}

StackChannel ParseChannel(const json& j, const std::string& path) {
  if (!j.is_object()) Fail(path, "channel must be an object");
  CheckKeys(j, path,
            {"name", "framing", "component", "interface", "socket", "server",
             "device_node", "ops", "forward_op", "backward_op"});
  StackChannel c;
  c.name = RequireString(j, path, "name");
  c.framing = proxy::FramingFromName(RequireString(j, path, "framing"));
  c.component = RequireString(j, path, "component");
  c.interface_name = RequireString(j, path, "interface");
  c.socket = RequireString(j, path, "socket");
  c.server = RequireString(j, path, "server");
  if (j.contains("device_node")) {
    c.device_node = j.at("device_node").get<std::string>();
  }
  if (j.contains("ops")) {
    const json& ops = j.at("ops");
    if (!ops.is_array()) Fail(path + ".ops", "must be an array");
    for (size_t i = 0; i < ops.size(); ++i) {
      const std::string op_path = path + ".ops[" + std::to_string(i) + "]";
      const json& o = ops.at(i);
      CheckKeys(o, op_path, {"code", "name"});
      ChannelOp op;
      int64_t code = RequireInt(o, op_path, "code");
      if (code < 0 || code > 0xFFFFFFFFll) Fail(op_path, "code out of range");
      op.code = static_cast<uint32_t>(code);
      op.name = RequireString(o, op_path, "name");
      c.ops.push_back(std::move(op));
    }
  }
  if (j.contains("forward_op")) c.forward_op = j.at("forward_op").get<std::string>();
  if (j.contains("backward_op")) c.backward_op = j.at("backward_op").get<std::string>();
  return c;
}

}  // namespace

std::string StackChannel::PointFor(const std::string& op) const {
  return component + "/" + interface_name + "." + op;
}

StackTopology LoadTopology(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
  if (!root.is_object()) Fail("$", "topology root must be an object");
  CheckKeys(root, "$",
            {"schema_version", "name", "settings", "processes", "channels",
             "state_files"});
  StackTopology t;
  t.schema_version = static_cast<int>(RequireInt(root, "$", "schema_version"));
  if (t.schema_version != 1) Fail("$.schema_version", "unsupported version");
  t.name = RequireString(root, "$", "name");
  if (root.contains("settings")) {
    const json& s = root.at("settings");
    CheckKeys(s, "$.settings",
              {"anr_threshold_ms", "watchdog_poll_ms", "rpc_timeout_ms",
               "baseband_event_interval_ms", "listen_backlog"});
    if (s.contains("anr_threshold_ms")) {
      t.settings.anr_threshold_ms = s.at("anr_threshold_ms").get<int64_t>();
    }
    if (s.contains("watchdog_poll_ms")) {
      t.settings.watchdog_poll_ms = s.at("watchdog_poll_ms").get<int64_t>();
    }
    if (s.contains("rpc_timeout_ms")) {
      t.settings.rpc_timeout_ms = s.at("rpc_timeout_ms").get<int64_t>();
    }
    if (s.contains("baseband_event_interval_ms")) {
      t.settings.baseband_event_interval_ms =
          s.at("baseband_event_interval_ms").get<int64_t>();
    }
    if (s.contains("listen_backlog")) {
      t.settings.listen_backlog = s.at("listen_backlog").get<int>();
    }
  }
  const json& processes = Require(root, "$", "processes");
  if (!processes.is_array()) Fail("$.processes", "must be an array");
  for (size_t i = 0; i < processes.size(); ++i) {
    t.processes.push_back(ParseProcess(
        processes.at(i), "$.processes[" + std::to_string(i) + "]"));
  }
  const json& channels = Require(root, "$", "channels");
  if (!channels.is_array()) Fail("$.channels", "must be an array");
  for (size_t i = 0; i < channels.size(); ++i) {
    t.channels.push_back(
        ParseChannel(channels.at(i), "$.channels[" + std::to_string(i) + "]"));
  }
  if (root.contains("state_files")) {
    const json& files = root.at("state_files");
    if (!files.is_array()) Fail("$.state_files", "must be an array");
    for (size_t i = 0; i < files.size(); ++i) {
      const std::string path = "$.state_files[" + std::to_string(i) + "]";
      const json& f = files.at(i);
      CheckKeys(f, path, {"name", "content"});
      StateFile sf;
      sf.name = RequireString(f, path, "name");
      sf.content = RequireString(f, path, "content");
      t.state_files.push_back(std::move(sf));
    }
  }
  ValidateTopology(t);
  return t;
}

StackTopology LoadTopologyFile(const std::string& path) {
  return LoadTopology(ReadFileOrThrow(path));
}

void ValidateTopology(const StackTopology& topology) {
  std::set<std::string> process_names;
  std::set<std::string> service_names;
  for (const SimProcess& p : topology.processes) {
    if (p.name.empty()) throw ConfigError("process with empty name");
    if (!process_names.insert(p.name).second) {
      throw ConfigError("duplicate process name: " + p.name);
    }
    if (p.services.empty()) {
      throw ConfigError("process " + p.name + " hosts no services");
    }
    for (const std::string& s : p.services) {
      if (!service_names.insert(s).second) {
        throw ConfigError("duplicate service name: " + s);
      }
    }
  }
  std::set<std::string> channel_names;
  std::set<std::string> sockets;
  std::set<std::string> actions;
  for (const SimProcess& p : topology.processes) {
    for (const std::string& a : p.actions) {
      if (!actions.insert(a).second) {
        throw ConfigError("action " + a + " assigned to more than one process");
      }
    }
  }
  for (const StackChannel& c : topology.channels) {
    if (!channel_names.insert(c.name).second) {
      throw ConfigError("duplicate channel name: " + c.name);
    }
    if (!sockets.insert(c.socket).second) {
      throw ConfigError("duplicate channel socket: " + c.socket);
    }
    if (c.server != "@harness" && !process_names.count(c.server)) {
      throw ConfigError("channel " + c.name + " names unknown server " +
                        c.server);
    }
    if (c.framing == proxy::Framing::kFrame) {
      if (c.ops.empty()) {
        throw ConfigError("frame channel " + c.name + " declares no ops");
      }
      std::set<uint32_t> codes;
      std::set<std::string> names;
      for (const ChannelOp& op : c.ops) {
        if (!codes.insert(op.code).second || !names.insert(op.name).second) {
          throw ConfigError("channel " + c.name + " has duplicate ops");
        }
      }
    } else if (c.framing == proxy::Framing::kAtLine) {
      if (c.forward_op.empty() || c.backward_op.empty()) {
        throw ConfigError("line channel " + c.name +
                          " needs forward_op and backward_op");
      }
    } else {
      throw ConfigError("channel " + c.name + " uses unsupported raw framing");
    }
  }
  std::set<std::string> state_names;
  for (const StateFile& f : topology.state_files) {
    if (f.name.empty()) throw ConfigError("state file with empty name");
    if (!state_names.insert(f.name).second) {
      throw ConfigError("duplicate state file: " + f.name);
    }
  }
}

// --- Robustness profiles -----------------------------------------------------

RobustnessProfile ProfileByName(const std::string& name) {
  // Hosted service and app names the shipped topology uses; validation
  // against a custom topology happens in ValidateProfile.
  static const std::vector<std::string> kServices = {
      "activity-manager", "package-manager", "sensors-service",
      "camera-service",   "rild",            "camera_app",
      "phone_app"};
  RobustnessProfile p;
  p.name = name;
  if (name == "fragile") {
    for (const std::string& s : kServices) p.handlers[s] = Handler::kUnhandled;
    return p;
  }
  if (name == "graceful") {
    for (const std::string& s : kServices) {
      p.handlers[s] = Handler::kCatchAndRecover;
    }
    return p;
  }
  if (name == "mixed") {
    p.handlers = {
        {"activity-manager", Handler::kCatchAndRecover},
        {"package-manager", Handler::kCatchAndRecover},
        {"sensors-service", Handler::kUnhandled},
        {"camera-service", Handler::kCatchAndRecover},
        {"rild", Handler::kUnhandled},
        {"camera_app", Handler::kUnhandled},
        {"phone_app", Handler::kCatchAndReport},
    };
    return p;
  }
  throw ConfigError("unknown robustness profile: " + name);
}

void ValidateProfile(const RobustnessProfile& profile,
                     const StackTopology& topology) {
  for (const SimProcess& p : topology.processes) {
    for (const std::string& s : p.services) {
      if (!profile.handlers.count(s)) {
        throw ConfigError("profile " + profile.name + " has no handler for " +
                          s);
      }
    }
  }
}

// --- Fault routing -----------------------------------------------------------

FaultRoute ResolveFault(const StackTopology& topology,
                        const model::FaultSpec& spec) {
  const std::string point = inject::PointId(spec);
  FaultRoute route;
  if (spec.target.kind == model::TargetKind::kOperation) {
    for (const StackChannel& c : topology.channels) {
      if (c.component != spec.component ||
          c.interface_name != spec.target.interface_name) {
        continue;
      }
      bool has_op = false;
      if (c.framing == proxy::Framing::kAtLine) {
        has_op = spec.target.operation == c.forward_op ||
                 spec.target.operation == c.backward_op;
      } else {
        for (const ChannelOp& op : c.ops) {
          if (op.name == spec.target.operation) has_op = true;
        }
      }
      if (!has_op) continue;
      route.via = FaultRoute::Via::kProxy;
      route.channel = c.name;
      route.armed = {spec};
      return route;
    }
    throw ConfigError("no channel serves injection point " + point);
  }

  // Resource faults: device nodes are realized on their channel, everything
  // else on an in-process call point.
  for (const StackChannel& c : topology.channels) {
    if (c.component != spec.component ||
        c.device_node != spec.target.resource_name || c.device_node.empty()) {
      continue;
    }
    route.via = FaultRoute::Via::kProxy;
    route.channel = c.name;
    std::vector<std::string> op_names;
    if (c.framing == proxy::Framing::kAtLine) {
      op_names = {c.forward_op, c.backward_op};
    } else {
      for (const ChannelOp& op : c.ops) op_names.push_back(op.name);
    }
    for (const std::string& op : op_names) {
      model::FaultSpec translated = spec;
      translated.target = model::TargetRef::Operation(
          c.interface_name, op, model::ChannelKind::kDeviceFile);
      route.armed.push_back(std::move(translated));
    }
    return route;
  }
  for (const SimProcess& p : topology.processes) {
    if (p.lifecycle_point == point) {
      route.via = FaultRoute::Via::kRegistry;
      route.process = p.name;
      route.armed = {spec};
      return route;
    }
    for (const std::string& rp : p.registry_points) {
      if (rp == point) {
        route.via = FaultRoute::Via::kRegistry;
        route.process = p.name;
        route.armed = {spec};
        return route;
      }
    }
  }
  throw ConfigError("no process or channel serves injection point " + point);
}

}  // namespace sirfit::target

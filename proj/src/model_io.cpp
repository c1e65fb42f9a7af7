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
// JSON carriers for architecture descriptions and fault models.  Readers are
// strict: unknown keys, missing flags, and out-of-set values are errors with
// the JSON path attached, so description typos surface instead of silently
// weakening the derived model.

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sirfit/errors.hpp"
#include "sirfit/model.hpp"

namespace sirfit::model {

namespace {

using nlohmann::json;

std::string ReadFileOrThrow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json ParseText(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports line and column in what().
    throw ConfigError(std::string(what) + ": " + e.what());
  }
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
  if (!v.is_string()) Fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

bool RequireBool(const json& j, const std::string& path, const char* key) {
  const json& v = Require(j, path, key);
  if (!v.is_boolean()) Fail(path + "." + key, "expected a boolean");
  return v.get<bool>();
}

int64_t RequireInt(const json& j, const std::string& path, const char* key) {
  const json& v = Require(j, path, key);
  if (!v.is_number_integer()) Fail(path + "." + key, "expected an integer");
  return v.get<int64_t>();
}

double RequireNumber(const json& j, const std::string& path, const char* key) {
  const json& v = Require(j, path, key);
  if (!v.is_number()) Fail(path + "." + key, "expected a number");
  return v.get<double>();
}

const json& RequireArray(const json& j, const std::string& path,
                         const char* key) {
  const json& v = Require(j, path, key);
  if (!v.is_array()) Fail(path + "." + key, "expected an array");
  return v;
}

// Reattaches the JSON path to closed-set lookup failures.
template <typename F>
auto AtPath(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string HexEncode(const std::vector<uint8_t>& bytes) {
  static const char* kDigits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::vector<uint8_t> HexDecode(const std::string& text,
                               const std::string& path) {
  if (text.size() % 2 != 0) Fail(path, "hex string must have even length");
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    Fail(path, std::string("bad hex digit '") + c + "'");
  };
  std::vector<uint8_t> out;
  out.reserve(text.size() / 2);
  for (size_t i = 0; i < text.size(); i += 2) {
    out.push_back(
        static_cast<uint8_t>(nibble(text[i]) << 4 | nibble(text[i + 1])));
  }
  return out;
}

}  // namespace

// --- Architecture -----------------------------------------------------------

ArchitecturalModel LoadArchitecture(const std::string& text) {
  json root = ParseText(text, "architecture");
  if (!root.is_object()) {
    throw ConfigError("architecture: root must be an object");
  }
  CheckKeys(root, "architecture", {"schema_version", "name", "components"});

  ArchitecturalModel m;
  m.schema_version =
      static_cast<int>(RequireInt(root, "architecture", "schema_version"));
  if (root.contains("name")) {
    if (!root["name"].is_string()) Fail("architecture.name", "expected a string");
    m.name = root["name"].get<std::string>();
  }

  const json& comps = RequireArray(root, "architecture", "components");
  for (size_t i = 0; i < comps.size(); ++i) {
    const json& cj = comps[i];
    std::string cpath = "components[" + std::to_string(i) + "]";
    if (!cj.is_object()) Fail(cpath, "expected an object");
    CheckKeys(cj, cpath,
              {"name", "kind", "size_scale", "has_native_code",
               "is_multithreaded", "is_event_driven", "processes_bulk_data",
               "implements_complex_algorithms", "interfaces", "resources"});
    Component c;
    c.name = RequireString(cj, cpath, "name");
    c.kind = AtPath(cpath + ".kind", [&] {
      return ComponentKindFromName(RequireString(cj, cpath, "kind"));
    });
    c.size_scale = AtPath(cpath + ".size_scale", [&] {
      return SizeScaleFromName(RequireString(cj, cpath, "size_scale"));
    });
    c.has_native_code = RequireBool(cj, cpath, "has_native_code");
    c.is_multithreaded = RequireBool(cj, cpath, "is_multithreaded");
    c.is_event_driven = RequireBool(cj, cpath, "is_event_driven");
    c.processes_bulk_data = RequireBool(cj, cpath, "processes_bulk_data");
    c.implements_complex_algorithms =
        RequireBool(cj, cpath, "implements_complex_algorithms");

    if (cj.contains("interfaces")) {
      const json& ifaces = RequireArray(cj, cpath, "interfaces");
      for (size_t k = 0; k < ifaces.size(); ++k) {
        const json& ij = ifaces[k];
        std::string ipath = cpath + ".interfaces[" + std::to_string(k) + "]";
        if (!ij.is_object()) Fail(ipath, "expected an object");
        CheckKeys(ij, ipath, {"name", "channel", "operations"});
        ServiceInterface iface;
        iface.name = RequireString(ij, ipath, "name");
        iface.channel = AtPath(ipath + ".channel", [&] {
          return ChannelKindFromName(RequireString(ij, ipath, "channel"));
        });
        const json& ops = RequireArray(ij, ipath, "operations");
        for (size_t n = 0; n < ops.size(); ++n) {
          const json& oj = ops[n];
          std::string opath = ipath + ".operations[" + std::to_string(n) + "]";
          if (!oj.is_object()) Fail(opath, "expected an object");
          CheckKeys(oj, opath,
                    {"name", "declares_errors", "is_async", "high_volume_io",
                     "returns_complex_output"});
          InterfaceOperation op;
          op.name = RequireString(oj, opath, "name");
          op.declares_errors = RequireBool(oj, opath, "declares_errors");
          op.is_async = RequireBool(oj, opath, "is_async");
          op.high_volume_io = RequireBool(oj, opath, "high_volume_io");
          op.returns_complex_output =
              RequireBool(oj, opath, "returns_complex_output");
          iface.operations.push_back(std::move(op));
        }
        c.interfaces.push_back(std::move(iface));
      }
    }

    if (cj.contains("resources")) {
      const json& resources = RequireArray(cj, cpath, "resources");
      for (size_t k = 0; k < resources.size(); ++k) {
        const json& rj = resources[k];
        std::string rpath = cpath + ".resources[" + std::to_string(k) + "]";
        if (!rj.is_object()) Fail(rpath, "expected an object");
        CheckKeys(rj, rpath,
                  {"name", "kind", "permission_protected",
                   "dynamically_allocated", "persistent_file",
                   "spawns_children"});
        Resource r;
        r.name = RequireString(rj, rpath, "name");
        r.kind = AtPath(rpath + ".kind", [&] {
          return ResourceKindFromName(RequireString(rj, rpath, "kind"));
        });
        r.permission_protected = RequireBool(rj, rpath, "permission_protected");
        r.dynamically_allocated =
            RequireBool(rj, rpath, "dynamically_allocated");
        r.persistent_file = RequireBool(rj, rpath, "persistent_file");
        r.spawns_children = RequireBool(rj, rpath, "spawns_children");
        c.resources.push_back(std::move(r));
      }
    }

    m.components.push_back(std::move(c));
  }

  ValidateArchitecture(m);
  return m;
}

ArchitecturalModel LoadArchitectureFile(const std::string& path) {
  return LoadArchitecture(ReadFileOrThrow(path));
}

std::string SaveArchitecture(const ArchitecturalModel& arch) {
  json root;
  root["schema_version"] = arch.schema_version;
  if (!arch.name.empty()) root["name"] = arch.name;
  root["components"] = json::array();
  for (const Component& c : arch.components) {
    json cj;
    cj["name"] = c.name;
    cj["kind"] = ComponentKindName(c.kind);
    cj["size_scale"] = SizeScaleName(c.size_scale);
    cj["has_native_code"] = c.has_native_code;
    cj["is_multithreaded"] = c.is_multithreaded;
    cj["is_event_driven"] = c.is_event_driven;
    cj["processes_bulk_data"] = c.processes_bulk_data;
    cj["implements_complex_algorithms"] = c.implements_complex_algorithms;
    cj["interfaces"] = json::array();
    for (const ServiceInterface& iface : c.interfaces) {
      json ij;
      ij["name"] = iface.name;
      ij["channel"] = ChannelKindName(iface.channel);
      ij["operations"] = json::array();
      for (const InterfaceOperation& op : iface.operations) {
        json oj;
        oj["name"] = op.name;
        oj["declares_errors"] = op.declares_errors;
        oj["is_async"] = op.is_async;
        oj["high_volume_io"] = op.high_volume_io;
        oj["returns_complex_output"] = op.returns_complex_output;
        ij["operations"].push_back(std::move(oj));
      }
      cj["interfaces"].push_back(std::move(ij));
    }
    cj["resources"] = json::array();
    for (const Resource& r : c.resources) {
      json rj;
      rj["name"] = r.name;
      rj["kind"] = ResourceKindName(r.kind);
      rj["permission_protected"] = r.permission_protected;
      rj["dynamically_allocated"] = r.dynamically_allocated;
      rj["persistent_file"] = r.persistent_file;
      rj["spawns_children"] = r.spawns_children;
      cj["resources"].push_back(std::move(rj));
    }
    root["components"].push_back(std::move(cj));
  }
  return root.dump(2) + "\n";
}

// --- Fault model ------------------------------------------------------------

namespace {

json PatternToJson(const corrupt::Pattern& p) {
  json j;
  j["kind"] = corrupt::PatternKindName(p.kind);
  switch (p.kind) {
    case corrupt::PatternKind::kCategoricalReplace:
      j["domain"] = p.domain;
      break;
    case corrupt::PatternKind::kOffByOffset:
      j["offset"] = p.offset;
      break;
    case corrupt::PatternKind::kStructField:
      j["selector"] = FormatFrameSelector(*p.struct_selector);
      j["inner"] = PatternToJson(*p.inner);
      break;
    default:
      break;
  }
  return j;
}

corrupt::Pattern PatternFromJson(const json& j, const std::string& path) {
  if (!j.is_object()) Fail(path, "expected a pattern object");
  corrupt::Pattern p = corrupt::Pattern::Of(AtPath(path + ".kind", [&] {
    return corrupt::PatternKindFromName(RequireString(j, path, "kind"));
  }));
  switch (p.kind) {
    case corrupt::PatternKind::kCategoricalReplace: {
      CheckKeys(j, path, {"kind", "domain"});
      const json& domain = RequireArray(j, path, "domain");
      for (const json& d : domain) {
        if (!d.is_string()) Fail(path + ".domain", "expected strings");
        p.domain.push_back(d.get<std::string>());
      }
      if (p.domain.empty()) Fail(path + ".domain", "must be nonempty");
      break;
    }
    case corrupt::PatternKind::kOffByOffset:
      CheckKeys(j, path, {"kind", "offset"});
      p.offset = RequireInt(j, path, "offset");
      break;
    case corrupt::PatternKind::kStructField: {
      CheckKeys(j, path, {"kind", "selector", "inner"});
      p.struct_selector =
          std::make_shared<corrupt::Selector>(AtPath(path + ".selector", [&] {
            return ParseFrameSelector(RequireString(j, path, "selector"));
          }));
      p.inner = std::make_shared<corrupt::Pattern>(
          PatternFromJson(Require(j, path, "inner"), path + ".inner"));
      break;
    }
    default:
      CheckKeys(j, path, {"kind"});
      break;
  }
  return p;
}

json ActionToJson(const InjectionAction& a) {
  json j;
  j["kind"] = ActionKindName(a.kind);
  switch (a.kind) {
    case ActionKind::kReturnError:
      j["error"] = SymbolicErrorName(a.error);
      break;
    case ActionKind::kDelay:
      j["duration_ms"] = a.duration_ms;
      break;
    case ActionKind::kCorruptPayload:
      j["selector"] = a.selector;
      j["pattern"] = a.pattern ? PatternToJson(*a.pattern) : json("auto");
      break;
    case ActionKind::kDenyResource:
      j["deny_kind"] = ResourceKindName(a.deny_kind);
      break;
    default:
      break;
  }
  return j;
}

InjectionAction ActionFromJson(const json& j, const std::string& path) {
  if (!j.is_object()) Fail(path, "expected an action object");
  ActionKind kind = AtPath(path + ".kind", [&] {
    return ActionKindFromName(RequireString(j, path, "kind"));
  });
  switch (kind) {
    case ActionKind::kReturnError:
      CheckKeys(j, path, {"kind", "error"});
      return InjectionAction::ReturnError(AtPath(path + ".error", [&] {
        return SymbolicErrorFromName(RequireString(j, path, "error"));
      }));
    case ActionKind::kDelay: {
      CheckKeys(j, path, {"kind", "duration_ms"});
      int64_t ms = RequireInt(j, path, "duration_ms");
      if (ms <= 0) Fail(path + ".duration_ms", "must be positive");
      return InjectionAction::Delay(ms);
    }
    case ActionKind::kStall:
      CheckKeys(j, path, {"kind"});
      return InjectionAction::Stall();
    case ActionKind::kDropMessage:
      CheckKeys(j, path, {"kind"});
      return InjectionAction::DropMessage();
    case ActionKind::kCorruptPayload: {
      CheckKeys(j, path, {"kind", "selector", "pattern"});
      std::string selector = RequireString(j, path, "selector");
      // The selector must parse under at least one channel grammar; which
      // one applies is known only at the injection point.
      AtPath(path + ".selector", [&] {
        try {
          ParseFrameSelector(selector);
        } catch (const ConfigError&) {
          ParseAtSelector(selector);
        }
        return 0;
      });
      const json& pj = Require(j, path, "pattern");
      if (pj.is_string() && pj.get<std::string>() == "auto") {
        return InjectionAction::CorruptPayload(selector);
      }
      return InjectionAction::CorruptPayload(
          selector, PatternFromJson(pj, path + ".pattern"));
    }
    case ActionKind::kDenyResource:
      CheckKeys(j, path, {"kind", "deny_kind"});
      return InjectionAction::DenyResource(AtPath(path + ".deny_kind", [&] {
        return ResourceKindFromName(RequireString(j, path, "deny_kind"));
      }));
  }
  Fail(path, "unhandled action kind");
}

json FilterToJson(const Filter& f) {
  json j;
  switch (f.kind) {
    case FilterKind::kProbability:
      j["kind"] = "probability";
      j["p"] = f.probability;
      break;
    case FilterKind::kPathContains:
      j["kind"] = "path-contains";
      j["text"] = f.text;
      break;
    case FilterKind::kMessagePattern:
      j["kind"] = "message-pattern";
      j["bytes_hex"] = HexEncode(f.bytes);
      break;
    case FilterKind::kActiveTrigger:
      j["kind"] = "active-trigger";
      j["tag"] = f.text;
      break;
  }
  return j;
}

Filter FilterFromJson(const json& j, const std::string& path) {
  if (!j.is_object()) Fail(path, "expected a filter object");
  std::string kind = RequireString(j, path, "kind");
  return AtPath(path, [&]() -> Filter {
    if (kind == "probability") {
      CheckKeys(j, path, {"kind", "p"});
      return Filter::Probability(RequireNumber(j, path, "p"));
    }
    if (kind == "path-contains") {
      CheckKeys(j, path, {"kind", "text"});
      return Filter::PathContains(RequireString(j, path, "text"));
    }
    if (kind == "message-pattern") {
      CheckKeys(j, path, {"kind", "bytes_hex"});
      return Filter::MessagePattern(
          HexDecode(RequireString(j, path, "bytes_hex"), path + ".bytes_hex"));
    }
    if (kind == "active-trigger") {
      CheckKeys(j, path, {"kind", "tag"});
      return Filter::ActiveTrigger(RequireString(j, path, "tag"));
    }
    Fail(path + ".kind", "unknown filter kind \"" + kind + "\"");
  });
}

json TargetToJson(const TargetRef& t) {
  json j;
  if (t.kind == TargetKind::kOperation) {
    j["kind"] = "operation";
    j["interface"] = t.interface_name;
    j["operation"] = t.operation;
    j["channel"] = ChannelKindName(t.channel);
  } else {
    j["kind"] = "resource";
    j["resource"] = t.resource_name;
    j["resource_kind"] = ResourceKindName(t.resource_kind);
  }
  return j;
}

TargetRef TargetFromJson(const json& j, const std::string& path) {
  if (!j.is_object()) Fail(path, "expected a target object");
  std::string kind = RequireString(j, path, "kind");
  if (kind == "operation") {
    CheckKeys(j, path, {"kind", "interface", "operation", "channel"});
    return TargetRef::Operation(
        RequireString(j, path, "interface"),
        RequireString(j, path, "operation"), AtPath(path + ".channel", [&] {
          return ChannelKindFromName(RequireString(j, path, "channel"));
        }));
  }
  if (kind == "resource") {
    CheckKeys(j, path, {"kind", "resource", "resource_kind"});
    return TargetRef::OfResource(
        RequireString(j, path, "resource"), AtPath(path + ".resource_kind", [&] {
          return ResourceKindFromName(RequireString(j, path, "resource_kind"));
        }));
  }
  Fail(path + ".kind", "unknown target kind \"" + kind + "\"");
}

json SpecToJson(const FaultSpec& spec) {
  if (!spec.persistence.has_value()) {
    throw InvalidArgumentError("draft spec for " + spec.component + "/" +
                               spec.target.PointName() +
                               " cannot be serialized");
  }
  json j;
  j["id"] = spec.id;
  j["component"] = spec.component;
  j["target"] = TargetToJson(spec.target);
  j["mode"] = FailureModeName(spec.mode);
  j["persistence"] = PersistenceName(*spec.persistence);
  j["question"] = spec.question;
  j["action"] = ActionToJson(spec.action);
  j["filters"] = json::array();
  for (const Filter& f : spec.filters) j["filters"].push_back(FilterToJson(f));
  return j;
}

FaultSpec SpecFromJson(const json& j, const std::string& path) {
  if (!j.is_object()) Fail(path, "expected a fault object");
  CheckKeys(j, path,
            {"id", "component", "target", "mode", "persistence", "question",
             "action", "filters"});
  FaultSpec spec;
  spec.id = RequireString(j, path, "id");
  if (spec.id.empty()) Fail(path + ".id", "must be nonempty");
  spec.component = RequireString(j, path, "component");
  if (spec.component.empty()) Fail(path + ".component", "must be nonempty");
  spec.target = TargetFromJson(Require(j, path, "target"), path + ".target");
  spec.mode = AtPath(path + ".mode", [&] {
    return FailureModeFromName(RequireString(j, path, "mode"));
  });
  spec.persistence = AtPath(path + ".persistence", [&] {
    return PersistenceFromName(RequireString(j, path, "persistence"));
  });
  spec.question = RequireString(j, path, "question");
  static const std::set<std::string> kQuestions = {
      "S1", "S2", "S3", "S4", "R1", "R2", "R3", "R4", "R5"};
  if (kQuestions.find(spec.question) == kQuestions.end()) {
    Fail(path + ".question", "unknown checklist question \"" + spec.question +
                                 "\"");
  }
  spec.action = ActionFromJson(Require(j, path, "action"), path + ".action");
  const json& filters = RequireArray(j, path, "filters");
  for (size_t i = 0; i < filters.size(); ++i) {
    spec.filters.push_back(FilterFromJson(
        filters[i], path + ".filters[" + std::to_string(i) + "]"));
  }

  if (!ActionCompatibleWithMode(spec.mode, spec.action.kind)) {
    Fail(path, std::string("action \"") + ActionKindName(spec.action.kind) +
                   "\" is not compatible with mode \"" +
                   FailureModeName(spec.mode) + "\"");
  }
  if (*spec.persistence == Persistence::kTransient) {
    bool has_probability =
        std::any_of(spec.filters.begin(), spec.filters.end(), [](const Filter& f) {
          return f.kind == FilterKind::kProbability;
        });
    if (!has_probability) {
      Fail(path, "transient fault must carry a probability filter");
    }
  } else if (spec.ProbabilityValue() != 1.0) {
    Fail(path, "permanent fault must have probability 1.0");
  }
  return spec;
}

}  // namespace

std::string ExportFaultModel(const std::string& architecture,
                             const std::vector<FaultSpec>& faults) {
  json root;
  root["schema_version"] = 1;
  root["architecture"] = architecture;
  root["faults"] = json::array();
  for (const FaultSpec& spec : faults) root["faults"].push_back(SpecToJson(spec));
  return root.dump(2) + "\n";
}

FaultModel ImportFaultModel(const std::string& text) {
  json root = ParseText(text, "fault_model");
  if (!root.is_object()) throw ConfigError("fault_model: root must be an object");
  CheckKeys(root, "fault_model", {"schema_version", "architecture", "faults"});
  FaultModel model;
  model.schema_version =
      static_cast<int>(RequireInt(root, "fault_model", "schema_version"));
  if (model.schema_version != 1) {
    throw ConfigError("fault_model: unsupported schema_version " +
                      std::to_string(model.schema_version) + " (supported: 1)");
  }
  model.architecture = RequireString(root, "fault_model", "architecture");
  const json& faults = RequireArray(root, "fault_model", "faults");
  std::set<std::string> ids;
  for (size_t i = 0; i < faults.size(); ++i) {
    std::string path = "faults[" + std::to_string(i) + "]";
    FaultSpec spec = SpecFromJson(faults[i], path);
    if (!ids.insert(spec.id).second) {
      Fail(path + ".id", "duplicate id \"" + spec.id + "\"");
    }
    model.faults.push_back(std::move(spec));
  }
  return model;
}

FaultModel ImportFaultModelFile(const std::string& path) {
  return ImportFaultModel(ReadFileOrThrow(path));
}

}  // namespace sirfit::model

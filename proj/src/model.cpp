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

#include "sirfit/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "sirfit/errors.hpp"

namespace sirfit::model {

namespace {

constexpr double kTransientProbability = 0.10;
constexpr int64_t kDefaultDelayMs = 5000;

[[noreturn]] void ThrowUnknownName(const char* what, const std::string& name,
                                   std::initializer_list<const char*> allowed) {
  std::ostringstream os;
  os << "unknown " << what << " \"" << name << "\" (expected one of:";
  for (const char* a : allowed) os << ' ' << a;
  os << ')';
  throw ConfigError(os.str());
}

}  // namespace

// --- Enum names -------------------------------------------------------------

const char* ComponentKindName(ComponentKind v) {
  switch (v) {
    case ComponentKind::kServiceProcess:
      return "service-process";
    case ComponentKind::kLibrary:
      return "library";
    case ComponentKind::kDriver:
      return "driver";
  }
  return "?";
}

ComponentKind ComponentKindFromName(const std::string& name) {
  if (name == "service-process") return ComponentKind::kServiceProcess;
  if (name == "library") return ComponentKind::kLibrary;
  if (name == "driver") return ComponentKind::kDriver;
  ThrowUnknownName("component kind", name, {"service-process", "library", "driver"});
}

const char* SizeScaleName(SizeScale v) {
  switch (v) {
    case SizeScale::kSmall:
      return "small";
    case SizeScale::kMedium:
      return "medium";
    case SizeScale::kLarge:
      return "large";
  }
  return "?";
}

SizeScale SizeScaleFromName(const std::string& name) {
  if (name == "small") return SizeScale::kSmall;
  if (name == "medium") return SizeScale::kMedium;
  if (name == "large") return SizeScale::kLarge;
  ThrowUnknownName("size scale", name, {"small", "medium", "large"});
}

const char* ChannelKindName(ChannelKind v) {
  switch (v) {
    case ChannelKind::kRpc:
      return "rpc";
    case ChannelKind::kLocalSocket:
      return "local-socket";
    case ChannelKind::kLibraryCall:
      return "library-call";
    case ChannelKind::kDeviceFile:
      return "device-file";
  }
  return "?";
}

ChannelKind ChannelKindFromName(const std::string& name) {
  if (name == "rpc") return ChannelKind::kRpc;
  if (name == "local-socket") return ChannelKind::kLocalSocket;
  if (name == "library-call") return ChannelKind::kLibraryCall;
  if (name == "device-file") return ChannelKind::kDeviceFile;
  ThrowUnknownName("channel kind", name,
                   {"rpc", "local-socket", "library-call", "device-file"});
}

const char* ResourceKindName(ResourceKind v) {
  switch (v) {
    case ResourceKind::kProcess:
      return "process";
    case ResourceKind::kThread:
      return "thread";
    case ResourceKind::kMemory:
      return "memory";
    case ResourceKind::kFile:
      return "file";
    case ResourceKind::kDeviceFile:
      return "device-file";
    case ResourceKind::kSocket:
      return "socket";
    case ResourceKind::kPipe:
      return "pipe";
    case ResourceKind::kRpcObject:
      return "rpc-object";
  }
  return "?";
}

ResourceKind ResourceKindFromName(const std::string& name) {
  if (name == "process") return ResourceKind::kProcess;
  if (name == "thread") return ResourceKind::kThread;
  if (name == "memory") return ResourceKind::kMemory;
  if (name == "file") return ResourceKind::kFile;
  if (name == "device-file") return ResourceKind::kDeviceFile;
  if (name == "socket") return ResourceKind::kSocket;
  if (name == "pipe") return ResourceKind::kPipe;
  if (name == "rpc-object") return ResourceKind::kRpcObject;
  ThrowUnknownName("resource kind", name,
                   {"process", "thread", "memory", "file", "device-file",
                    "socket", "pipe", "rpc-object"});
}

const char* FailureModeName(FailureMode v) {
  switch (v) {
    case FailureMode::kAvailability:
      return "availability";
    case FailureMode::kTimeliness:
      return "timeliness";
    case FailureMode::kOutputValue:
      return "output-value";
    case FailureMode::kResourceManagement:
      return "resource-management";
  }
  return "?";
}

FailureMode FailureModeFromName(const std::string& name) {
  if (name == "availability") return FailureMode::kAvailability;
  if (name == "timeliness") return FailureMode::kTimeliness;
  if (name == "output-value") return FailureMode::kOutputValue;
  if (name == "resource-management") return FailureMode::kResourceManagement;
  ThrowUnknownName(
      "failure mode", name,
      {"availability", "timeliness", "output-value", "resource-management"});
}

const char* PersistenceName(Persistence v) {
  switch (v) {
    case Persistence::kPermanent:
      return "permanent";
    case Persistence::kTransient:
      return "transient";
  }
  return "?";
}

Persistence PersistenceFromName(const std::string& name) {
  if (name == "permanent") return Persistence::kPermanent;
  if (name == "transient") return Persistence::kTransient;
  ThrowUnknownName("persistence", name, {"permanent", "transient"});
}

const char* ActionKindName(ActionKind v) {
  switch (v) {
    case ActionKind::kReturnError:
      return "return-error";
    case ActionKind::kDelay:
      return "delay";
    case ActionKind::kStall:
      return "stall";
    case ActionKind::kDropMessage:
      return "drop-message";
    case ActionKind::kCorruptPayload:
      return "corrupt-payload";
    case ActionKind::kDenyResource:
      return "deny-resource";
  }
  return "?";
}

ActionKind ActionKindFromName(const std::string& name) {
  if (name == "return-error") return ActionKind::kReturnError;
  if (name == "delay") return ActionKind::kDelay;
  if (name == "stall") return ActionKind::kStall;
  if (name == "drop-message") return ActionKind::kDropMessage;
  if (name == "corrupt-payload") return ActionKind::kCorruptPayload;
  if (name == "deny-resource") return ActionKind::kDenyResource;
  ThrowUnknownName("action kind", name,
                   {"return-error", "delay", "stall", "drop-message",
                    "corrupt-payload", "deny-resource"});
}

const char* SymbolicErrorName(SymbolicError v) {
  switch (v) {
    case SymbolicError::kEnomem:
      return "ENOMEM";
    case SymbolicError::kEnodev:
      return "ENODEV";
    case SymbolicError::kEio:
      return "EIO";
    case SymbolicError::kEacces:
      return "EACCES";
    case SymbolicError::kServiceError:
      return "SERVICE_ERROR";
  }
  return "?";
}

SymbolicError SymbolicErrorFromName(const std::string& name) {
  if (name == "ENOMEM") return SymbolicError::kEnomem;
  if (name == "ENODEV") return SymbolicError::kEnodev;
  if (name == "EIO") return SymbolicError::kEio;
  if (name == "EACCES") return SymbolicError::kEacces;
  if (name == "SERVICE_ERROR") return SymbolicError::kServiceError;
  ThrowUnknownName("error code", name,
                   {"ENOMEM", "ENODEV", "EIO", "EACCES", "SERVICE_ERROR"});
}

int32_t SymbolicErrorCode(SymbolicError v) {
  switch (v) {
    case SymbolicError::kEnomem:
      return 12;
    case SymbolicError::kEnodev:
      return 19;
    case SymbolicError::kEio:
      return 5;
    case SymbolicError::kEacces:
      return 13;
    case SymbolicError::kServiceError:
      return 1000;
  }
  return -1;
}

std::optional<SymbolicError> SymbolicErrorFromCode(int32_t code) {
  switch (code) {
    case 12:
      return SymbolicError::kEnomem;
    case 19:
      return SymbolicError::kEnodev;
    case 5:
      return SymbolicError::kEio;
    case 13:
      return SymbolicError::kEacces;
    case 1000:
      return SymbolicError::kServiceError;
    default:
      return std::nullopt;
  }
}

// --- Actions, filters, targets ---------------------------------------------

InjectionAction InjectionAction::ReturnError(SymbolicError error) {
  InjectionAction a;
  a.kind = ActionKind::kReturnError;
  a.error = error;
  return a;
}

InjectionAction InjectionAction::Delay(int64_t duration_ms) {
  if (duration_ms <= 0) {
    throw InvalidArgumentError("delay duration must be positive");
  }
  InjectionAction a;
  a.kind = ActionKind::kDelay;
  a.duration_ms = duration_ms;
  return a;
}

InjectionAction InjectionAction::Stall() {
  InjectionAction a;
  a.kind = ActionKind::kStall;
  return a;
}

InjectionAction InjectionAction::DropMessage() {
  InjectionAction a;
  a.kind = ActionKind::kDropMessage;
  return a;
}

InjectionAction InjectionAction::CorruptPayload(
    std::string selector, std::optional<corrupt::Pattern> pattern) {
  InjectionAction a;
  a.kind = ActionKind::kCorruptPayload;
  a.selector = std::move(selector);
  a.pattern = std::move(pattern);
  return a;
}

InjectionAction InjectionAction::DenyResource(ResourceKind deny_kind) {
  InjectionAction a;
  a.kind = ActionKind::kDenyResource;
  a.deny_kind = deny_kind;
  return a;
}

Filter Filter::Probability(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidArgumentError("probability must be in [0, 1]");
  }
  Filter f;
  f.kind = FilterKind::kProbability;
  f.probability = p;
  return f;
}

Filter Filter::PathContains(std::string substring) {
  if (substring.empty()) {
    throw InvalidArgumentError("path filter substring must be nonempty");
  }
  Filter f;
  f.kind = FilterKind::kPathContains;
  f.text = std::move(substring);
  return f;
}

Filter Filter::MessagePattern(std::vector<uint8_t> bytes) {
  if (bytes.empty()) {
    throw InvalidArgumentError("message pattern must be nonempty");
  }
  Filter f;
  f.kind = FilterKind::kMessagePattern;
  f.bytes = std::move(bytes);
  return f;
}

Filter Filter::ActiveTrigger(std::string tag) {
  if (tag.empty()) {
    throw InvalidArgumentError("trigger tag must be nonempty");
  }
  Filter f;
  f.kind = FilterKind::kActiveTrigger;
  f.text = std::move(tag);
  return f;
}

std::string TargetRef::PointName() const {
  if (kind == TargetKind::kOperation) return interface_name + "." + operation;
  return resource_name;
}

TargetRef TargetRef::Operation(std::string interface_name,
                               std::string operation, ChannelKind channel) {
  TargetRef t;
  t.kind = TargetKind::kOperation;
  t.interface_name = std::move(interface_name);
  t.operation = std::move(operation);
  t.channel = channel;
  return t;
}

TargetRef TargetRef::OfResource(std::string resource_name, ResourceKind kind) {
  TargetRef t;
  t.kind = TargetKind::kResource;
  t.resource_name = std::move(resource_name);
  t.resource_kind = kind;
  return t;
}

double FaultSpec::ProbabilityValue() const {
  double p = 1.0;
  for (const Filter& f : filters) {
    if (f.kind == FilterKind::kProbability) p *= f.probability;
  }
  return p;
}

bool ActionCompatibleWithMode(FailureMode mode, ActionKind action) {
  switch (mode) {
    case FailureMode::kAvailability:
      return action == ActionKind::kReturnError;
    case FailureMode::kTimeliness:
      return action == ActionKind::kDelay || action == ActionKind::kStall;
    case FailureMode::kOutputValue:
      return action == ActionKind::kCorruptPayload ||
             action == ActionKind::kDropMessage;
    case FailureMode::kResourceManagement:
      return action == ActionKind::kDenyResource ||
             action == ActionKind::kReturnError ||
             action == ActionKind::kCorruptPayload ||
             action == ActionKind::kStall;
  }
  return false;
}

// --- Selector grammar -------------------------------------------------------

namespace {

// Strict decimal parse for selector arguments; rejects junk and overflow.
std::optional<uint64_t> ParseDecimal(const std::string& s, uint64_t max) {
  if (s.empty() || s.size() > 10) return std::nullopt;
  uint64_t value = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + static_cast<uint64_t>(c - '0');
  }
  if (value > max) return std::nullopt;
  return value;
}

}  // namespace

corrupt::Selector ParseFrameSelector(const std::string& text) {
  if (text == "all") return corrupt::Selector::All();
  if (text == "code") return corrupt::Selector::Code();
  if (text == "flags") return corrupt::Selector::Flags();
  if (text.rfind("tag:", 0) == 0) {
    if (auto n = ParseDecimal(text.substr(4), 0xffff)) {
      return corrupt::Selector::Tag(static_cast<uint16_t>(*n));
    }
  }
  throw ConfigError("bad frame selector \"" + text +
                    "\" (expected all, tag:<n>, code, or flags)");
}

corrupt::AtSelector ParseAtSelector(const std::string& text) {
  if (text == "all") return {corrupt::AtSelector::Kind::kAll, 0};
  if (text == "code") return {corrupt::AtSelector::Kind::kCode, 0};
  if (text.rfind("param:", 0) == 0) {
    if (auto n = ParseDecimal(text.substr(6), 0xffffffff)) {
      return {corrupt::AtSelector::Kind::kParam, static_cast<size_t>(*n)};
    }
  }
  throw ConfigError("bad line selector \"" + text +
                    "\" (expected all, code, or param:<i>)");
}

std::string FormatFrameSelector(const corrupt::Selector& selector) {
  switch (selector.kind) {
    case corrupt::Selector::Kind::kAll:
      return "all";
    case corrupt::Selector::Kind::kCode:
      return "code";
    case corrupt::Selector::Kind::kFlags:
      return "flags";
    case corrupt::Selector::Kind::kTag:
      return "tag:" + std::to_string(selector.tag);
  }
  return "?";
}

// --- Validation -------------------------------------------------------------

void ValidateArchitecture(const ArchitecturalModel& arch) {
  if (arch.schema_version != 1) {
    throw ConfigError("unsupported schema_version " +
                      std::to_string(arch.schema_version) + " (supported: 1)");
  }
  std::set<std::string> component_names;
  for (const Component& c : arch.components) {
    if (c.name.empty()) throw ConfigError("component name must be nonempty");
    if (!component_names.insert(c.name).second) {
      throw ConfigError("duplicate component name \"" + c.name + "\"");
    }
    // Interfaces and resources share one namespace inside a component, so a
    // fault id's middle segment is unambiguous.
    std::set<std::string> member_names;
    for (const ServiceInterface& iface : c.interfaces) {
      if (iface.name.empty()) {
        throw ConfigError("component \"" + c.name +
                          "\": interface name must be nonempty");
      }
      if (!member_names.insert(iface.name).second) {
        throw ConfigError("component \"" + c.name +
                          "\": duplicate interface or resource name \"" +
                          iface.name + "\"");
      }
      if (iface.operations.empty()) {
        throw ConfigError("component \"" + c.name + "\": interface \"" +
                          iface.name + "\" needs at least one operation");
      }
      std::set<std::string> op_names;
      for (const InterfaceOperation& op : iface.operations) {
        if (op.name.empty()) {
          throw ConfigError("component \"" + c.name + "\": interface \"" +
                            iface.name + "\": operation name must be nonempty");
        }
        if (!op_names.insert(op.name).second) {
          throw ConfigError("component \"" + c.name + "\": interface \"" +
                            iface.name + "\": duplicate operation name \"" +
                            op.name + "\"");
        }
      }
    }
    for (const Resource& r : c.resources) {
      if (r.name.empty()) {
        throw ConfigError("component \"" + c.name +
                          "\": resource name must be nonempty");
      }
      if (!member_names.insert(r.name).second) {
        throw ConfigError("component \"" + c.name +
                          "\": duplicate interface or resource name \"" +
                          r.name + "\"");
      }
      if (r.persistent_file && r.kind != ResourceKind::kFile) {
        throw ConfigError("component \"" + c.name + "\": resource \"" + r.name +
                          "\": persistent_file requires kind \"file\", got \"" +
                          ResourceKindName(r.kind) + "\"");
      }
    }
  }
}

// --- Derivation -------------------------------------------------------------

namespace {

SymbolicError ErrorForChannel(ChannelKind channel) {
  switch (channel) {
    case ChannelKind::kLocalSocket:
    case ChannelKind::kDeviceFile:
      return SymbolicError::kEio;
    case ChannelKind::kRpc:
    case ChannelKind::kLibraryCall:
      return SymbolicError::kServiceError;
  }
  return SymbolicError::kEio;
}

FaultSpec Draft(const Component& c, TargetRef target, FailureMode mode,
                const char* question, InjectionAction action) {
  FaultSpec s;
  s.component = c.name;
  s.target = std::move(target);
  s.mode = mode;
  s.question = question;
  s.action = std::move(action);
  return s;
}

}  // namespace

std::vector<FaultSpec> DeriveServiceFaults(const Component& component,
                                           const ServiceInterface& interface) {
  bool owned = std::any_of(component.interfaces.begin(),
                           component.interfaces.end(),
                           [&](const ServiceInterface& i) { return i == interface; });
  if (!owned) {
    throw InvalidArgumentError("interface \"" + interface.name +
                               "\" is not part of component \"" +
                               component.name + "\"");
  }

  std::vector<FaultSpec> out;
  for (const InterfaceOperation& op : interface.operations) {
    TargetRef target =
        TargetRef::Operation(interface.name, op.name, interface.channel);
    if (op.declares_errors) {
      out.push_back(Draft(
          component, target, FailureMode::kAvailability, "S1",
          InjectionAction::ReturnError(ErrorForChannel(interface.channel))));
    }
    if ((component.is_multithreaded || component.is_event_driven) &&
        op.is_async) {
      out.push_back(Draft(component, target, FailureMode::kTimeliness, "S2",
                          InjectionAction::Stall()));
    }
    if (op.high_volume_io || component.processes_bulk_data) {
      out.push_back(Draft(component, target, FailureMode::kTimeliness, "S3",
                          InjectionAction::Delay(kDefaultDelayMs)));
    }
    if (op.returns_complex_output && component.implements_complex_algorithms) {
      out.push_back(Draft(component, target, FailureMode::kOutputValue, "S4",
                          InjectionAction::CorruptPayload("all")));
    }
  }
  return out;
}

std::vector<FaultSpec> DeriveResourceFaults(const Component& component,
                                            const Resource& resource) {
  bool owned =
      std::any_of(component.resources.begin(), component.resources.end(),
                  [&](const Resource& r) { return r == resource; });
  if (!owned) {
    throw InvalidArgumentError("resource \"" + resource.name +
                               "\" is not part of component \"" +
                               component.name + "\"");
  }

  std::vector<FaultSpec> out;
  TargetRef target = TargetRef::OfResource(resource.name, resource.kind);
  bool host_like = resource.kind == ResourceKind::kProcess ||
                   resource.kind == ResourceKind::kThread;
  if (host_like && component.size_scale == SizeScale::kLarge &&
      component.has_native_code) {
    // Crash and hang of the host are distinct specs under the same question.
    out.push_back(Draft(component, target, FailureMode::kResourceManagement,
                        "R1",
                        InjectionAction::DenyResource(ResourceKind::kProcess)));
    out.push_back(Draft(component, target, FailureMode::kResourceManagement,
                        "R1", InjectionAction::Stall()));
  }
  if (resource.permission_protected) {
    out.push_back(Draft(component, target, FailureMode::kResourceManagement,
                        "R2",
                        InjectionAction::ReturnError(SymbolicError::kEacces)));
  }
  if (resource.dynamically_allocated) {
    out.push_back(Draft(component, target, FailureMode::kResourceManagement,
                        "R3", InjectionAction::DenyResource(resource.kind)));
  }
  if (resource.spawns_children) {
    out.push_back(Draft(component, target, FailureMode::kResourceManagement,
                        "R4",
                        InjectionAction::DenyResource(ResourceKind::kProcess)));
  }
  if (resource.persistent_file) {
    out.push_back(Draft(
        component, target, FailureMode::kResourceManagement, "R5",
        InjectionAction::CorruptPayload(
            "all", corrupt::Pattern::Of(corrupt::PatternKind::kBitFlip))));
  }
  return out;
}

std::vector<FaultSpec> AssignPersistence(const FaultSpec& draft) {
  if (draft.persistence.has_value()) {
    throw InvalidArgumentError("spec for " + draft.component + "/" +
                               draft.target.PointName() +
                               " already has a persistence");
  }

  std::vector<Persistence> kinds;
  if (draft.question == "S1" || draft.question == "S3") {
    kinds = {Persistence::kPermanent, Persistence::kTransient};
  } else if (draft.question == "S2" || draft.question == "S4") {
    kinds = {Persistence::kTransient};
  } else if (draft.question == "R1" || draft.question == "R2" ||
             draft.question == "R3" || draft.question == "R4" ||
             draft.question == "R5") {
    kinds = {Persistence::kPermanent};
  } else {
    throw InvalidArgumentError("unknown checklist question \"" +
                               draft.question + "\"");
  }

  std::vector<FaultSpec> out;
  for (Persistence p : kinds) {
    FaultSpec spec = draft;
    spec.persistence = p;
    spec.filters.push_back(Filter::Probability(
        p == Persistence::kTransient ? kTransientProbability : 1.0));
    spec.id = spec.component + "/" + spec.target.PointName() + "/" +
              spec.question + "." + ActionKindName(spec.action.kind) + "/" +
              PersistenceName(p);
    out.push_back(std::move(spec));
  }
  return out;
}

std::vector<FaultSpec> DeriveFaultModel(const ArchitecturalModel& arch) {
  ValidateArchitecture(arch);
  std::vector<FaultSpec> out;
  for (const Component& c : arch.components) {
    for (const ServiceInterface& iface : c.interfaces) {
      for (const FaultSpec& draft : DeriveServiceFaults(c, iface)) {
        for (FaultSpec& spec : AssignPersistence(draft)) {
          out.push_back(std::move(spec));
        }
      }
    }
    for (const Resource& r : c.resources) {
      for (const FaultSpec& draft : DeriveResourceFaults(c, r)) {
        for (FaultSpec& spec : AssignPersistence(draft)) {
          out.push_back(std::move(spec));
        }
      }
    }
  }
  for (const FaultSpec& spec : out) {
    if (!ActionCompatibleWithMode(spec.mode, spec.action.kind)) {
      throw HarnessError("derived spec " + spec.id +
                         " violates mode/action compatibility");
    }
  }
  return out;
}

// --- Equality ---------------------------------------------------------------

bool operator==(const InterfaceOperation& a, const InterfaceOperation& b) {
  return a.name == b.name && a.declares_errors == b.declares_errors &&
         a.is_async == b.is_async && a.high_volume_io == b.high_volume_io &&
         a.returns_complex_output == b.returns_complex_output;
}

bool operator==(const ServiceInterface& a, const ServiceInterface& b) {
  return a.name == b.name && a.channel == b.channel &&
         a.operations == b.operations;
}

bool operator==(const Resource& a, const Resource& b) {
  return a.name == b.name && a.kind == b.kind &&
         a.permission_protected == b.permission_protected &&
         a.dynamically_allocated == b.dynamically_allocated &&
         a.persistent_file == b.persistent_file &&
         a.spawns_children == b.spawns_children;
}

bool operator==(const Component& a, const Component& b) {
  return a.name == b.name && a.kind == b.kind &&
         a.size_scale == b.size_scale &&
         a.has_native_code == b.has_native_code &&
         a.is_multithreaded == b.is_multithreaded &&
         a.is_event_driven == b.is_event_driven &&
         a.processes_bulk_data == b.processes_bulk_data &&
         a.implements_complex_algorithms == b.implements_complex_algorithms &&
         a.interfaces == b.interfaces && a.resources == b.resources;
}

bool operator==(const ArchitecturalModel& a, const ArchitecturalModel& b) {
  return a.schema_version == b.schema_version && a.name == b.name &&
         a.components == b.components;
}

}  // namespace sirfit::model

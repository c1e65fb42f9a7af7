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
// Architecture descriptions, checklist-based fault derivation, and the fault
// specs everything downstream consumes.
//
// The derivation walks each component's service interfaces and resources and
// asks a fixed set of questions.  Service questions, per operation:
//
//   S1  declares_errors                                      -> Availability
//   S2  (multithreaded or event-driven) and op is_async      -> Timeliness
//   S3  op high_volume_io or component processes_bulk_data   -> Timeliness
//   S4  op returns_complex_output and component
//       implements_complex_algorithms                        -> OutputValue
//
// Resource questions:
//
//   R1  kind in {process, thread} and component is large
//       with native code                    -> crash + hang of the host
//   R2  permission_protected                -> access denied
//   R3  dynamically_allocated               -> exhaustion
//   R4  spawns_children                     -> child-creation failure
//   R5  persistent_file                     -> content corruption
//
// Each fired question becomes one draft spec; persistence expansion then
// yields one entry per plausible persistence (S1, S3 both; S2, S4 transient
// only; R1..R5 permanent only).  Transient entries carry Probability(0.10),
// permanent entries Probability(1.0).
//
// Derivation is a pure function of the description: same input, same model,
// byte-identical export.

#ifndef SIRFIT_MODEL_HPP
#define SIRFIT_MODEL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sirfit/corrupt.hpp"

namespace sirfit::model {

// --- Architecture description ----------------------------------------------

enum class ComponentKind { kServiceProcess, kLibrary, kDriver };
enum class SizeScale { kSmall, kMedium, kLarge };
enum class ChannelKind { kRpc, kLocalSocket, kLibraryCall, kDeviceFile };
enum class ResourceKind {
  kProcess,
  kThread,
  kMemory,
  kFile,
  kDeviceFile,
  kSocket,
  kPipe,
  kRpcObject,
};

const char* ComponentKindName(ComponentKind v);
const char* SizeScaleName(SizeScale v);
const char* ChannelKindName(ChannelKind v);
const char* ResourceKindName(ResourceKind v);
ComponentKind ComponentKindFromName(const std::string& name);
SizeScale SizeScaleFromName(const std::string& name);
ChannelKind ChannelKindFromName(const std::string& name);
ResourceKind ResourceKindFromName(const std::string& name);

// All flags are explicit in the description text; the loader rejects
// omissions instead of defaulting.
struct InterfaceOperation {
  std::string name;
  bool declares_errors = false;
  bool is_async = false;
  bool high_volume_io = false;
  bool returns_complex_output = false;
};

struct ServiceInterface {
  std::string name;
  ChannelKind channel = ChannelKind::kRpc;
  std::vector<InterfaceOperation> operations;  // at least one
};

struct Resource {
  std::string name;
  ResourceKind kind = ResourceKind::kFile;
  bool permission_protected = false;
  bool dynamically_allocated = false;
  bool persistent_file = false;  // only valid on kind=file
  bool spawns_children = false;
};

struct Component {
  std::string name;
  ComponentKind kind = ComponentKind::kServiceProcess;
  SizeScale size_scale = SizeScale::kSmall;
  bool has_native_code = false;
  bool is_multithreaded = false;
  bool is_event_driven = false;
  bool processes_bulk_data = false;
  bool implements_complex_algorithms = false;
  std::vector<ServiceInterface> interfaces;
  std::vector<Resource> resources;
};

struct ArchitecturalModel {
  int schema_version = 1;
  std::string name;
  std::vector<Component> components;
};

// --- Failure modes and persistence -----------------------------------------

enum class FailureMode {
  kAvailability,
  kTimeliness,
  kOutputValue,
  kResourceManagement,
};
enum class Persistence { kPermanent, kTransient };

const char* FailureModeName(FailureMode v);
const char* PersistenceName(Persistence v);
FailureMode FailureModeFromName(const std::string& name);
Persistence PersistenceFromName(const std::string& name);

// --- Injection actions and filters -----------------------------------------

enum class ActionKind {
  kReturnError,
  kDelay,
  kStall,
  kDropMessage,
  kCorruptPayload,
  kDenyResource,
};

// Closed set of error identities an injected error reply can carry.
enum class SymbolicError { kEnomem, kEnodev, kEio, kEacces, kServiceError };

const char* ActionKindName(ActionKind v);
const char* SymbolicErrorName(SymbolicError v);
ActionKind ActionKindFromName(const std::string& name);
SymbolicError SymbolicErrorFromName(const std::string& name);
// Numeric wire value: errno numbers where one exists, 1000 for SERVICE_ERROR.
int32_t SymbolicErrorCode(SymbolicError v);
// Reverse lookup for decoding error frames; nullopt for unknown codes.
std::optional<SymbolicError> SymbolicErrorFromCode(int32_t code);

struct InjectionAction {
  ActionKind kind = ActionKind::kStall;
  SymbolicError error = SymbolicError::kEio;  // return-error
  int64_t duration_ms = 0;                    // delay, > 0
  // corrupt-payload: which part of a message, and how.  Selector grammar:
  // "all", "tag:<n>", "code", "flags", "param:<i>".  A missing pattern means
  // per-field-kind auto corruption.
  std::string selector = "all";
  std::optional<corrupt::Pattern> pattern;
  // deny-resource: what kind of resource refuses service.
  ResourceKind deny_kind = ResourceKind::kMemory;

  static InjectionAction ReturnError(SymbolicError error);
  static InjectionAction Delay(int64_t duration_ms);
  static InjectionAction Stall();
  static InjectionAction DropMessage();
  static InjectionAction CorruptPayload(
      std::string selector, std::optional<corrupt::Pattern> pattern = {});
  static InjectionAction DenyResource(ResourceKind deny_kind);
};

enum class FilterKind {
  kProbability,
  kPathContains,
  kMessagePattern,
  kActiveTrigger,
};

struct Filter {
  FilterKind kind = FilterKind::kProbability;
  double probability = 1.0;        // kProbability, in [0, 1]
  std::string text;                // kPathContains / kActiveTrigger, nonempty
  std::vector<uint8_t> bytes;      // kMessagePattern, nonempty

  static Filter Probability(double p);
  static Filter PathContains(std::string substring);
  static Filter MessagePattern(std::vector<uint8_t> bytes);
  static Filter ActiveTrigger(std::string tag);
};

// --- Fault specs ------------------------------------------------------------

enum class TargetKind { kOperation, kResource };

struct TargetRef {
  TargetKind kind = TargetKind::kOperation;
  // Operation targets.
  std::string interface_name;
  std::string operation;
  ChannelKind channel = ChannelKind::kRpc;
  // Resource targets.
  std::string resource_name;
  ResourceKind resource_kind = ResourceKind::kFile;

  // "phone-socket.receive" for operations, "heap" for resources; the middle
  // segment of the fault id and the key injection points resolve against.
  std::string PointName() const;

  static TargetRef Operation(std::string interface_name, std::string operation,
                             ChannelKind channel);
  static TargetRef OfResource(std::string resource_name, ResourceKind kind);
};

struct FaultSpec {
  // `<component>/<target>/<question>.<action-kind>/<persistence>`, assigned
  // when persistence is; stable across derivations of the same description.
  std::string id;
  std::string component;
  TargetRef target;
  FailureMode mode = FailureMode::kAvailability;
  // Unset on drafts fresh out of derive_*_faults; AssignPersistence fills it.
  std::optional<Persistence> persistence;
  std::string question;  // "S1".."S4", "R1".."R5"
  InjectionAction action;
  std::vector<Filter> filters;

  // Product of the probability filters; 1.0 when none is present.
  double ProbabilityValue() const;
};

// The serialized form: derived entries plus the architecture they came from.
struct FaultModel {
  int schema_version = 1;
  std::string architecture;
  std::vector<FaultSpec> faults;
};

// --- Operations -------------------------------------------------------------

// Parses and validates a description.  Throws ConfigError carrying the JSON
// path of the offending element (or line/column for syntax errors).
ArchitecturalModel LoadArchitecture(const std::string& text);
ArchitecturalModel LoadArchitectureFile(const std::string& path);

// Semantic checks on an already-built description (name uniqueness across a
// component's interfaces and resources, closed-set values, operation counts,
// persistent_file only on files, supported schema_version).  The loader runs
// this; call it directly for hand-built models.  Throws ConfigError.
void ValidateArchitecture(const ArchitecturalModel& arch);

// Serializes a description; LoadArchitecture(SaveArchitecture(m)) == m.
std::string SaveArchitecture(const ArchitecturalModel& arch);

// Draft specs (persistence unset, no filters, no id) for every service
// question that fires on the interface's operations.  Throws
// InvalidArgumentError when the interface is not the component's.
std::vector<FaultSpec> DeriveServiceFaults(const Component& component,
                                           const ServiceInterface& interface);

// Resource-question drafts; same ownership contract.
std::vector<FaultSpec> DeriveResourceFaults(const Component& component,
                                            const Resource& resource);

// Expands one draft into its persistence entries, attaching the default
// probability filter and the final id.  Throws InvalidArgumentError when the
// draft already has a persistence.
std::vector<FaultSpec> AssignPersistence(const FaultSpec& draft);

// Full pipeline over every component, interfaces before resources, in
// declaration order.  Pure; output order and ids are stable.
std::vector<FaultSpec> DeriveFaultModel(const ArchitecturalModel& arch);

// JSON text with sorted keys and a trailing newline; byte-identical for
// equal inputs.
std::string ExportFaultModel(const std::string& architecture,
                             const std::vector<FaultSpec>& faults);
// Validates everything ExportFaultModel guarantees (unique ids, mode/action
// compatibility, filter ranges).  Throws ConfigError.
FaultModel ImportFaultModel(const std::string& text);
FaultModel ImportFaultModelFile(const std::string& path);

// True when the action may realize the mode: Availability => ReturnError;
// Timeliness => Delay/Stall; OutputValue => CorruptPayload/DropMessage;
// ResourceManagement => DenyResource/ReturnError/CorruptPayload/Stall.
bool ActionCompatibleWithMode(FailureMode mode, ActionKind action);

// Selector grammar helpers.  Frame selectors: "all", "tag:<n>", "code",
// "flags".  Modem-line selectors: "all", "code", "param:<i>".  Throw
// ConfigError on anything else.
corrupt::Selector ParseFrameSelector(const std::string& text);
corrupt::AtSelector ParseAtSelector(const std::string& text);
std::string FormatFrameSelector(const corrupt::Selector& selector);

bool operator==(const InterfaceOperation& a, const InterfaceOperation& b);
bool operator==(const ServiceInterface& a, const ServiceInterface& b);
bool operator==(const Resource& a, const Resource& b);
bool operator==(const Component& a, const Component& b);
bool operator==(const ArchitecturalModel& a, const ArchitecturalModel& b);

}  // namespace sirfit::model

#endif  // SIRFIT_MODEL_HPP

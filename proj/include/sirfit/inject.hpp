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
// The injection controller: filter evaluation, armed-fault bookkeeping,
// injection evidence, and the in-process call registry.
//
// Decisions are counter-addressed.  Each evaluation draws from a generator
// forked per fault entry and addressed by the invocation's per-point
// sequence number, so a decision depends only on (seed, fault id, filter
// index, sequence number) and never on thread interleaving.

#ifndef SIRFIT_INJECT_HPP
#define SIRFIT_INJECT_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sirfit/model.hpp"
#include "sirfit/rng.hpp"
#include "sirfit/wire.hpp"

namespace sirfit::inject {

enum class Direction { kRequest, kReply };

const char* DirectionName(Direction d);
Direction DirectionFromName(const std::string& name);

// One observed invocation at an interposition point.
struct InvocationContext {
  std::string point;
  Direction direction = Direction::kRequest;
  std::string path_hint;                           // empty when none
  const std::vector<uint8_t>* payload = nullptr;   // may be absent
  std::string active_trigger;                      // empty when none
  uint64_t sequence_no = 0;
};

struct FilterTrace {
  model::FilterKind kind;
  bool passed = false;
  double draw = -1.0;  // probability filters only
};

struct Decision {
  bool inject = false;
  // One entry per configured filter, in order.  Evaluation never
  // short-circuits so the conjunction is fully auditable.
  std::vector<FilterTrace> trace;
};

// Pure in (spec, ctx, rng seed).  Inject iff every filter passes.
Decision Decide(const model::FaultSpec& spec, const InvocationContext& ctx,
                const Rng& rng);

// The interposition point a fault entry listens on.
std::string PointId(const model::FaultSpec& spec);

// Where on the channel the entry is evaluated.  Output corruption rides
// the reply, message drops ride whichever way the message travels, and
// everything else intercepts the request.
bool AppliesToDirection(const model::FaultSpec& spec, Direction d);

inline uint64_t DigestBytes(const uint8_t* data, size_t size) {
  return Fnv1a(std::string_view(reinterpret_cast<const char*>(data), size));
}
inline uint64_t DigestBytes(const std::vector<uint8_t>& bytes) {
  return DigestBytes(bytes.data(), bytes.size());
}

// Evidence that one injection was applied.
struct InjectionRecord {
  uint64_t timestamp_ms = 0;
  std::string spec_id;
  std::string point;
  Direction direction = Direction::kRequest;
  uint64_t sequence_no = 0;
  model::ActionKind action = model::ActionKind::kReturnError;
  uint64_t pre_digest = 0;   // payload before the action, 0 when absent
  uint64_t post_digest = 0;  // payload after, pre_digest when untouched

  bool operator==(const InjectionRecord& other) const = default;
};

std::string RecordToJsonLine(const InjectionRecord& r);
// Throws ConfigError on malformed lines.
InjectionRecord RecordFromJsonLine(const std::string& line);

// Serializes decisions, counters, and the evidence log for one experiment.
// Safe for concurrent invocations from multiple connections.
class InjectionController {
 public:
  explicit InjectionController(uint64_t seed);

  // Replaces the armed set.  Entries must be fully assigned (persistence
  // and id present); throws InvalidArgumentError otherwise.
  void Arm(std::vector<model::FaultSpec> specs);
  void Disarm();
  bool IsArmed() const;

  // Approximates a foreground-activity condition: the trigger tag is
  // visible to active-trigger filters while set.
  void SetActiveTrigger(const std::string& tag);
  void ClearActiveTrigger();
  std::string ActiveTrigger() const;

  struct Evaluation {
    uint64_t sequence_no = 0;
    std::vector<std::pair<std::string, Decision>> decisions;
    std::optional<model::FaultSpec> chosen;  // first armed entry that fired
    std::optional<size_t> record_index;      // set iff chosen
  };

  // Assigns the point's next sequence number, evaluates matching armed
  // entries, and appends the evidence record when one fires.  Atomic.
  // With direction_agnostic the AppliesToDirection check is skipped;
  // device-stream channels use this because each flow direction already
  // names a distinct operation, so the data is both the invocation and
  // its result.
  Evaluation Evaluate(const std::string& point, Direction direction,
                      const std::string& path_hint,
                      const std::vector<uint8_t>* payload,
                      bool direction_agnostic = false);

  // Corruption actions report the transformed payload afterwards.
  void SetPostDigest(size_t record_index, uint64_t digest);

  // Independent deterministic stream for a corruption application.
  Rng CorruptionRng(const std::string& spec_id, uint64_t sequence_no) const;

  std::vector<InjectionRecord> Log() const;
  std::string LogAsJsonLines() const;
  size_t InjectionCount() const;

  // Forgets counters, log, trigger, and armed entries.  New experiment.
  void Reset();

 private:
  mutable std::mutex mu_;
  Rng base_;
  std::vector<model::FaultSpec> armed_;
  std::vector<Rng> spec_rngs_;  // parallel to armed_
  std::string active_trigger_;
  std::map<std::string, uint64_t> next_sequence_;
  std::vector<InjectionRecord> log_;
};

// Cooperative interposition for library-call channels.  The target's
// instrumentation declares its points at startup and consults OnCall at
// each invocation; installing a hook routes the point through a
// controller, and dropping the handle restores pass-through.
class HookRegistry {
 public:
  // What the instrumented call site should do instead of the real work.
  struct CallResult {
    model::InjectionAction action;
    std::string spec_id;
    uint64_t sequence_no = 0;
  };

  class Hook {
   public:
    Hook() = default;
    Hook(Hook&& other) noexcept;
    Hook& operator=(Hook&& other) noexcept;
    Hook(const Hook&) = delete;
    Hook& operator=(const Hook&) = delete;
    ~Hook();

   private:
    friend class HookRegistry;
    Hook(HookRegistry* registry, std::string point);
    HookRegistry* registry_ = nullptr;
    std::string point_;
  };

  void DeclarePoint(const std::string& point);
  bool HasPoint(const std::string& point) const;
  std::vector<std::string> Points() const;

  // Throws ConfigError on unknown points and on double installation.
  [[nodiscard]] Hook Install(const std::string& point,
                             InjectionController* controller);

  // Pass-through yields nullopt.  Unknown points are an instrumentation
  // bug and throw InvalidArgumentError.
  std::optional<CallResult> OnCall(const std::string& point,
                                   const std::string& path_hint = "");

 private:
  friend class Hook;
  void Uninstall(const std::string& point);

  mutable std::mutex mu_;
  std::map<std::string, InjectionController*> points_;  // null = unhooked
};

// How a denied resource reports itself through a message channel.
// Memory denial reads as allocation failure, everything else as a lost
// device.
model::SymbolicError DenyError(model::ResourceKind kind);

// Payload transforms for corrupt-payload actions.  The generator should
// come from InjectionController::CorruptionRng so repeated runs corrupt
// identically.  Without an explicit pattern the per-kind default applies
// (single-character substitution for modem lines).
wire::Transaction ApplyCorruptFrame(const model::InjectionAction& action,
                                    const wire::Transaction& t, Rng& rng);
std::string ApplyCorruptAtLine(const model::InjectionAction& action,
                               const std::string& line, Rng& rng);

}  // namespace sirfit::inject

#endif  // SIRFIT_INJECT_HPP

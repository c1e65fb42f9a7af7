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

#include "sirfit/inject.hpp"

#include <algorithm>
#include <chrono>

#include <json.hpp>

#include "sirfit/corrupt.hpp"
#include "sirfit/errors.hpp"

namespace sirfit::inject {

using json = nlohmann::json;

const char* DirectionName(Direction d) {
  return d == Direction::kRequest ? "request" : "reply";
}

Direction DirectionFromName(const std::string& name) {
  if (name == "request") return Direction::kRequest;
  if (name == "reply") return Direction::kReply;
  throw ConfigError("unknown direction \"" + name + "\"");
}

Decision Decide(const model::FaultSpec& spec, const InvocationContext& ctx,
                const Rng& rng) {
  Decision d;
  d.inject = true;
  for (size_t i = 0; i < spec.filters.size(); ++i) {
    const model::Filter& f = spec.filters[i];
    FilterTrace t;
    t.kind = f.kind;
    switch (f.kind) {
      case model::FilterKind::kProbability:
        // Fork per filter index so stacked probability filters draw
        // independently at the same sequence number.
        t.draw = rng.Fork(i).DoubleAt(ctx.sequence_no);
        t.passed = t.draw < f.probability;
        break;
      case model::FilterKind::kPathContains:
        t.passed = ctx.path_hint.find(f.text) != std::string::npos;
        break;
      case model::FilterKind::kMessagePattern:
        t.passed = ctx.payload != nullptr &&
                   std::search(ctx.payload->begin(), ctx.payload->end(),
                               f.bytes.begin(),
                               f.bytes.end()) != ctx.payload->end();
        break;
      case model::FilterKind::kActiveTrigger:
        t.passed = !ctx.active_trigger.empty() && ctx.active_trigger == f.text;
        break;
    }
    d.trace.push_back(t);
    if (!t.passed) d.inject = false;
  }
  return d;
}

std::string PointId(const model::FaultSpec& spec) {
  return spec.component + "/" + spec.target.PointName();
}

bool AppliesToDirection(const model::FaultSpec& spec, Direction d) {
  switch (spec.action.kind) {
    case model::ActionKind::kCorruptPayload:
      return spec.mode == model::FailureMode::kOutputValue
                 ? d == Direction::kReply
                 : d == Direction::kRequest;
    case model::ActionKind::kDropMessage:
      return true;
    default:
      return d == Direction::kRequest;
  }
}

namespace {

std::string HexU64(uint64_t v) {
  static const char* kDigits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

uint64_t HexU64Parse(const std::string& s) {
  if (s.size() != 16) throw ConfigError("digest must be 16 hex digits");
  uint64_t v = 0;
  for (char c : s) {
    int nibble;
    if (c >= '0' && c <= '9') {
      nibble = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      nibble = c - 'a' + 10;
    } else {
      throw ConfigError("digest must be 16 hex digits");
    }
    v = (v << 4) | static_cast<uint64_t>(nibble);
  }
  return v;
}

uint64_t NowMs() {
  return static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
}

}  // namespace

std::string RecordToJsonLine(const InjectionRecord& r) {
  json j;
  j["action"] = model::ActionKindName(r.action);
  j["direction"] = DirectionName(r.direction);
  j["point"] = r.point;
  j["post_digest"] = HexU64(r.post_digest);
  j["pre_digest"] = HexU64(r.pre_digest);
  j["seq"] = r.sequence_no;
  j["spec"] = r.spec_id;
  j["ts_ms"] = r.timestamp_ms;
  return j.dump();
}

InjectionRecord RecordFromJsonLine(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("injection record: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("injection record must be an object");
  for (const char* key : {"action", "direction", "point", "post_digest",
                          "pre_digest", "seq", "spec", "ts_ms"}) {
    if (!j.contains(key)) {
      throw ConfigError(std::string("injection record: missing key \"") + key +
                        "\"");
    }
  }
  InjectionRecord r;
  r.action = model::ActionKindFromName(j.at("action").get<std::string>());
  r.direction = DirectionFromName(j.at("direction").get<std::string>());
  r.point = j.at("point").get<std::string>();
  r.post_digest = HexU64Parse(j.at("post_digest").get<std::string>());
  r.pre_digest = HexU64Parse(j.at("pre_digest").get<std::string>());
  r.sequence_no = j.at("seq").get<uint64_t>();
  r.spec_id = j.at("spec").get<std::string>();
  r.timestamp_ms = j.at("ts_ms").get<uint64_t>();
  return r;
}

InjectionController::InjectionController(uint64_t seed) : base_(seed) {}

void InjectionController::Arm(std::vector<model::FaultSpec> specs) {
  for (const model::FaultSpec& s : specs) {
    if (!s.persistence.has_value() || s.id.empty()) {
      throw InvalidArgumentError(
          "cannot arm a draft fault entry (persistence or id unassigned)");
    }
  }
  std::lock_guard<std::mutex> lock(mu_);
  armed_ = std::move(specs);
  spec_rngs_.clear();
  for (const model::FaultSpec& s : armed_) {
    spec_rngs_.push_back(base_.Fork(s.id));
  }
}

void InjectionController::Disarm() {
  std::lock_guard<std::mutex> lock(mu_);
  armed_.clear();
  spec_rngs_.clear();
}

bool InjectionController::IsArmed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return !armed_.empty();
}

void InjectionController::SetActiveTrigger(const std::string& tag) {
  std::lock_guard<std::mutex> lock(mu_);
  active_trigger_ = tag;
}

void InjectionController::ClearActiveTrigger() {
  std::lock_guard<std::mutex> lock(mu_);
  active_trigger_.clear();
}

std::string InjectionController::ActiveTrigger() const {
  std::lock_guard<std::mutex> lock(mu_);
  return active_trigger_;
}

InjectionController::Evaluation InjectionController::Evaluate(
    const std::string& point, Direction direction, const std::string& path_hint,
    const std::vector<uint8_t>* payload, bool direction_agnostic) {
  std::lock_guard<std::mutex> lock(mu_);
  Evaluation ev;
  ev.sequence_no = next_sequence_[point]++;

  InvocationContext ctx;
  ctx.point = point;
  ctx.direction = direction;
  ctx.path_hint = path_hint;
  ctx.payload = payload;
  ctx.active_trigger = active_trigger_;
  ctx.sequence_no = ev.sequence_no;

  for (size_t i = 0; i < armed_.size(); ++i) {
    const model::FaultSpec& spec = armed_[i];
    if (PointId(spec) != point) continue;
    if (!direction_agnostic && !AppliesToDirection(spec, direction)) {
      continue;
    }
    Decision d = Decide(spec, ctx, spec_rngs_[i]);
    bool fired = d.inject;
    ev.decisions.emplace_back(spec.id, std::move(d));
    if (fired && !ev.chosen.has_value()) {
      ev.chosen = spec;
      InjectionRecord r;
      r.timestamp_ms = NowMs();
      r.spec_id = spec.id;
      r.point = point;
      r.direction = direction;
      r.sequence_no = ev.sequence_no;
      r.action = spec.action.kind;
      r.pre_digest = payload == nullptr ? 0 : DigestBytes(*payload);
      r.post_digest = r.pre_digest;
      log_.push_back(std::move(r));
      ev.record_index = log_.size() - 1;
    }
  }
  return ev;
}

void InjectionController::SetPostDigest(size_t record_index, uint64_t digest) {
  std::lock_guard<std::mutex> lock(mu_);
  if (record_index >= log_.size()) {
    throw InvalidArgumentError("injection record index out of range");
  }
  log_[record_index].post_digest = digest;
}

Rng InjectionController::CorruptionRng(const std::string& spec_id,
                                       uint64_t sequence_no) const {
  return base_.Fork(spec_id).Fork(sequence_no);
}

std::vector<InjectionRecord> InjectionController::Log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

std::string InjectionController::LogAsJsonLines() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::string out;
  for (const InjectionRecord& r : log_) {
    out += RecordToJsonLine(r);
    out += '\n';
  }
  return out;
}

size_t InjectionController::InjectionCount() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_.size();
}

void InjectionController::Reset() {
  std::lock_guard<std::mutex> lock(mu_);
  armed_.clear();
  spec_rngs_.clear();
  active_trigger_.clear();
  next_sequence_.clear();
  log_.clear();
}

HookRegistry::Hook::Hook(HookRegistry* registry, std::string point)
    : registry_(registry), point_(std::move(point)) {}

HookRegistry::Hook::Hook(Hook&& other) noexcept
    : registry_(other.registry_), point_(std::move(other.point_)) {
  other.registry_ = nullptr;
}

HookRegistry::Hook& HookRegistry::Hook::operator=(Hook&& other) noexcept {
  if (this != &other) {
    if (registry_ != nullptr) registry_->Uninstall(point_);
    registry_ = other.registry_;
    point_ = std::move(other.point_);
    other.registry_ = nullptr;
  }
  return *this;
}

HookRegistry::Hook::~Hook() {
  if (registry_ != nullptr) registry_->Uninstall(point_);
}

void HookRegistry::DeclarePoint(const std::string& point) {
  std::lock_guard<std::mutex> lock(mu_);
  points_.emplace(point, nullptr);
}

bool HookRegistry::HasPoint(const std::string& point) const {
  std::lock_guard<std::mutex> lock(mu_);
  return points_.count(point) != 0;
}

std::vector<std::string> HookRegistry::Points() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> out;
  for (const auto& [point, controller] : points_) {
    (void)controller;
    out.push_back(point);
  }
  return out;
}

HookRegistry::Hook HookRegistry::Install(const std::string& point,
                                         InjectionController* controller) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = points_.find(point);
  if (it == points_.end()) {
    throw ConfigError("unknown hook point \"" + point + "\"");
  }
  if (it->second != nullptr) {
    throw ConfigError("hook already installed at \"" + point + "\"");
  }
  it->second = controller;
  return Hook(this, point);
}

void HookRegistry::Uninstall(const std::string& point) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = points_.find(point);
  if (it != points_.end()) it->second = nullptr;
}

std::optional<HookRegistry::CallResult> HookRegistry::OnCall(
    const std::string& point, const std::string& path_hint) {
  InjectionController* controller = nullptr;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = points_.find(point);
    if (it == points_.end()) {
      throw InvalidArgumentError("call at undeclared hook point \"" + point +
                                 "\"");
    }
    controller = it->second;
  }
  if (controller == nullptr) return std::nullopt;
  InjectionController::Evaluation ev =
      controller->Evaluate(point, Direction::kRequest, path_hint, nullptr);
  if (!ev.chosen.has_value()) return std::nullopt;
  return CallResult{ev.chosen->action, ev.chosen->id, ev.sequence_no};
}

model::SymbolicError DenyError(model::ResourceKind kind) {
  return kind == model::ResourceKind::kMemory ? model::SymbolicError::kEnomem
                                              : model::SymbolicError::kEnodev;
}

wire::Transaction ApplyCorruptFrame(const model::InjectionAction& action,
                                    const wire::Transaction& t, Rng& rng) {
  if (action.kind != model::ActionKind::kCorruptPayload) {
    throw InvalidArgumentError("action is not corrupt-payload");
  }
  corrupt::Selector selector = model::ParseFrameSelector(action.selector);
  if (action.pattern.has_value()) {
    return corrupt::CorruptTransaction(t, selector, *action.pattern, rng);
  }
  return corrupt::CorruptTransactionAuto(t, selector, rng);
}

std::string ApplyCorruptAtLine(const model::InjectionAction& action,
                               const std::string& line, Rng& rng) {
  if (action.kind != model::ActionKind::kCorruptPayload) {
    throw InvalidArgumentError("action is not corrupt-payload");
  }
  corrupt::AtSelector selector = model::ParseAtSelector(action.selector);
  corrupt::Pattern pattern =
      action.pattern.has_value()
          ? *action.pattern
          : corrupt::Pattern::Of(corrupt::PatternKind::kSubstringReplace);
  return corrupt::CorruptAtLine(line, selector, pattern, rng);
}

}  // namespace sirfit::inject

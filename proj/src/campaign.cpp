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

#include "sirfit/campaign.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sirfit/corrupt.hpp"
#include "sirfit/errors.hpp"
#include "sirfit/inject.hpp"
#include "sirfit/logline.hpp"
#include "sirfit/rng.hpp"

namespace sirfit::campaign {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int64_t SteadyMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string ReadFileOrThrow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void CheckKeys(const json& obj, const std::string& where,
               const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (allowed.count(it.key()) == 0) {
      throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
    }
  }
}

std::string ResolvePath(const std::string& base_dir, const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  return base_dir.empty() ? path : base_dir + "/" + path;
}

// Applies plan overrides onto the resolved entry.  Each override replaces
// its field, so applying the same overrides twice is a no-op; exported
// campaigns rely on that.
model::FaultSpec ApplyOverrides(model::FaultSpec spec,
                                const PlanOverrides& overrides,
                                const std::string& where) {
  if (overrides.probability.has_value()) {
    double p = *overrides.probability;
    if (p < 0.0 || p > 1.0) {
      throw ConfigError(where + ": probability override outside [0, 1]");
    }
    // Permanent means always-on; a probabilistic permanent entry would not
    // survive a model round trip.
    if (spec.persistence == model::Persistence::kPermanent) {
      throw ConfigError(where +
                        ": probability override on a permanent fault");
    }
    std::vector<model::Filter> kept;
    for (const model::Filter& f : spec.filters) {
      if (f.kind != model::FilterKind::kProbability) kept.push_back(f);
    }
    kept.push_back(model::Filter::Probability(p));
    spec.filters = std::move(kept);
  }
  if (overrides.duration_ms.has_value()) {
    if (spec.action.kind != model::ActionKind::kDelay) {
      throw ConfigError(where + ": duration override on a non-delay action");
    }
    if (*overrides.duration_ms <= 0) {
      throw ConfigError(where + ": duration override must be positive");
    }
    spec.action.duration_ms = *overrides.duration_ms;
  }
  if (overrides.selector.has_value() || overrides.pattern.has_value()) {
    if (spec.action.kind != model::ActionKind::kCorruptPayload) {
      throw ConfigError(where +
                        ": selector/pattern override on a non-corrupt action");
    }
    if (overrides.selector.has_value()) {
      spec.action.selector = *overrides.selector;
    }
    if (overrides.pattern.has_value()) {
      spec.action.pattern =
          corrupt::Pattern::Of(corrupt::PatternKindFromName(*overrides.pattern));
    }
  }
  return spec;
}

PlanOverrides ParseOverrides(const json& obj, const std::string& where) {
  CheckKeys(obj, where, {"probability", "duration_ms", "selector", "pattern"});
  PlanOverrides out;
  if (obj.contains("probability")) {
    out.probability = obj.at("probability").get<double>();
  }
  if (obj.contains("duration_ms")) {
    out.duration_ms = obj.at("duration_ms").get<int64_t>();
  }
  if (obj.contains("selector")) {
    out.selector = obj.at("selector").get<std::string>();
  }
  if (obj.contains("pattern")) {
    out.pattern = obj.at("pattern").get<std::string>();
  }
  return out;
}

// Wraps a standalone fault object into a one-entry model document so the
// model importer does all the validation.
model::FaultSpec ParseInlineFault(const json& obj, const std::string& where) {
  json doc;
  doc["schema_version"] = 1;
  doc["architecture"] = "inline";
  doc["faults"] = json::array({obj});
  try {
    model::FaultModel parsed = model::ImportFaultModel(doc.dump());
    return parsed.faults.at(0);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> WorkloadActions(uint64_t seed, size_t count) {
  // Weights sum to 100.
  static const struct {
    const char* action;
    int weight;
  } kMix[] = {
      {"show_activities", 25}, {"get_state", 20}, {"read_sensor", 20},
      {"list_packages", 15},   {"stop_activity", 10}, {"dial", 5},
      {"take_picture", 5},
  };
  std::vector<std::string> out;
  out.reserve(count);
  Rng rng = Rng(seed).Fork("workload");
  for (size_t i = 0; i < count; ++i) {
    int draw = static_cast<int>(rng.NextBelow(100));
    for (const auto& entry : kMix) {
      draw -= entry.weight;
      if (draw < 0) {
        out.push_back(entry.action);
        break;
      }
    }
  }
  return out;
}

uint64_t RepSeed(const CampaignConfig& config, const ExperimentPlan& plan,
                 int repetition) {
  if (plan.seed.has_value()) {
    if (repetition == 0) return *plan.seed;
    return Rng(*plan.seed).Fork(static_cast<uint64_t>(repetition)).Next();
  }
  return Rng(config.base_seed)
      .Fork(plan.id)
      .Fork(static_cast<uint64_t>(repetition))
      .Next();
}

CampaignConfig CampaignFromModel(const model::FaultModel& faults,
                                 const ModelCampaignOptions& options) {
  if (faults.faults.empty()) {
    throw ConfigError("campaign from model: the model has no faults");
  }
  if (options.repetitions < 1) {
    throw ConfigError("campaign from model: repetitions must be >= 1");
  }
  CampaignConfig config;
  config.name = faults.architecture + "-sweep";
  config.topology_path = options.topology_path;
  config.fault_model_path = options.fault_model_path;
  config.profile = options.profile;
  config.base_seed = options.base_seed;
  config.timing = options.timing;
  std::set<std::string> base_ids;
  for (const model::FaultSpec& spec : faults.faults) {
    std::string base_id = spec.id;
    for (char& c : base_id) {
      if (c == '/' || c == '.') c = '-';
    }
    if (!base_ids.insert(base_id).second) {
      throw ConfigError("campaign from model: plan id collision on " +
                        base_id);
    }
    // Seeds match the hand-written form of the same sweep: one plan named
    // base_id carrying options.repetitions repetitions.
    ExperimentPlan proto;
    proto.id = base_id;
    for (int rep = 0; rep < options.repetitions; ++rep) {
      ExperimentPlan plan;
      plan.id = base_id + "-r" + std::to_string(rep);
      plan.fault_id = spec.id;
      plan.fault = spec;
      plan.repetitions = 1;
      plan.labels["repetition"] = std::to_string(rep);
      plan.seed = RepSeed(config, proto, rep);
      config.plans.push_back(std::move(plan));
    }
  }
  return config;
}

CampaignConfig LoadCampaign(const std::string& text,
                            const std::string& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("campaign: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("campaign: not an object");
  CheckKeys(root, "campaign",
            {"schema_version", "name", "topology", "fault_model", "profile",
             "base_seed", "teardown_timeout_ms", "timing", "plans"});

  CampaignConfig config;
  config.schema_version = root.at("schema_version").get<int>();
  if (config.schema_version != 1) {
    throw ConfigError("campaign: unsupported schema_version " +
                      std::to_string(config.schema_version));
  }
  config.name = root.at("name").get<std::string>();
  config.topology_path =
      ResolvePath(base_dir, root.at("topology").get<std::string>());
  if (root.contains("fault_model")) {
    config.fault_model_path =
        ResolvePath(base_dir, root.at("fault_model").get<std::string>());
  }
  if (root.contains("profile")) {
    config.profile = root.at("profile").get<std::string>();
  }
  if (root.contains("base_seed")) {
    config.base_seed = root.at("base_seed").get<uint64_t>();
  }
  if (root.contains("teardown_timeout_ms")) {
    config.teardown_timeout_ms = root.at("teardown_timeout_ms").get<int64_t>();
  }
  if (root.contains("timing")) {
    const json& t = root.at("timing");
    CheckKeys(t, "campaign.timing", {"warmup_ms", "run_ms"});
    if (t.contains("warmup_ms")) {
      config.timing.warmup_ms = t.at("warmup_ms").get<int64_t>();
    }
    if (t.contains("run_ms")) {
      config.timing.run_ms = t.at("run_ms").get<int64_t>();
    }
  }
  if (config.timing.warmup_ms < 0 || config.timing.run_ms <= 0) {
    throw ConfigError("campaign.timing: warmup_ms < 0 or run_ms <= 0");
  }

  // The topology must load; plans reference its actions.
  target::StackTopology topology =
      target::LoadTopologyFile(config.topology_path);
  target::ValidateProfile(target::ProfileByName(config.profile), topology);
  std::set<std::string> known_actions;
  for (const target::SimProcess& p : topology.processes) {
    known_actions.insert(p.actions.begin(), p.actions.end());
  }

  std::optional<model::FaultModel> fault_model;
  auto lookup_fault = [&](const std::string& id,
                          const std::string& where) -> model::FaultSpec {
    if (!fault_model.has_value()) {
      if (config.fault_model_path.empty()) {
        throw ConfigError(where +
                          ": fault id reference without a campaign fault_model");
      }
      fault_model = model::ImportFaultModelFile(config.fault_model_path);
    }
    for (const model::FaultSpec& spec : fault_model->faults) {
      if (spec.id == id) return spec;
    }
    throw ConfigError(where + ": no fault \"" + id + "\" in " +
                      config.fault_model_path);
  };

  const json& plans = root.at("plans");
  if (!plans.is_array() || plans.empty()) {
    throw ConfigError("campaign.plans: need at least one plan");
  }
  std::set<std::string> plan_ids;
  for (size_t i = 0; i < plans.size(); ++i) {
    const json& p = plans[i];
    std::string where = "campaign.plans[" + std::to_string(i) + "]";
    CheckKeys(p, where,
              {"id", "fault", "repetitions", "trigger", "labels", "overrides",
               "warmup_ms", "run_ms", "seed"});
    ExperimentPlan plan;
    plan.id = p.at("id").get<std::string>();
    if (plan.id.empty() || plan.id.find('#') != std::string::npos ||
        plan.id.find('/') != std::string::npos) {
      throw ConfigError(where + ": plan id must be nonempty without '#' or '/'");
    }
    if (!plan_ids.insert(plan.id).second) {
      throw ConfigError(where + ": duplicate plan id \"" + plan.id + "\"");
    }
    where += " (" + plan.id + ")";
    if (p.contains("repetitions")) {
      plan.repetitions = p.at("repetitions").get<int>();
      if (plan.repetitions < 1) {
        throw ConfigError(where + ": repetitions must be >= 1");
      }
    }
    if (p.contains("trigger")) {
      plan.trigger = p.at("trigger").get<std::string>();
      if (!plan.trigger.empty() && known_actions.count(plan.trigger) == 0) {
        throw ConfigError(where + ": no app performs trigger \"" +
                          plan.trigger + "\"");
      }
    }
    if (p.contains("labels")) {
      for (auto it = p.at("labels").begin(); it != p.at("labels").end(); ++it) {
        plan.labels[it.key()] = it.value().get<std::string>();
      }
    }
    if (p.contains("overrides")) {
      plan.overrides = ParseOverrides(p.at("overrides"), where + ".overrides");
    }
    if (p.contains("warmup_ms")) {
      plan.warmup_ms = p.at("warmup_ms").get<int64_t>();
    }
    if (p.contains("run_ms")) plan.run_ms = p.at("run_ms").get<int64_t>();
    if (p.contains("seed")) plan.seed = p.at("seed").get<uint64_t>();

    if (p.contains("fault") && !p.at("fault").is_null()) {
      model::FaultSpec resolved;
      if (p.at("fault").is_string()) {
        plan.fault_id = p.at("fault").get<std::string>();
        resolved = lookup_fault(plan.fault_id, where);
      } else if (p.at("fault").is_object()) {
        resolved = ParseInlineFault(p.at("fault"), where + ".fault");
      } else {
        throw ConfigError(where + ".fault: must be an id string or an object");
      }
      plan.fault = ApplyOverrides(std::move(resolved), plan.overrides, where);
      // Arming must be possible; surface routing mistakes at load time.
      target::ResolveFault(topology, *plan.fault);
    } else if (p.contains("overrides")) {
      throw ConfigError(where + ": overrides without a fault");
    }
    config.plans.push_back(std::move(plan));
  }
  return config;
}

CampaignConfig LoadCampaignFile(const std::string& path) {
  std::string base_dir = fs::path(path).parent_path().string();
  return LoadCampaign(ReadFileOrThrow(path), base_dir);
}

std::string SaveCampaign(const CampaignConfig& config) {
  json root;
  root["schema_version"] = config.schema_version;
  root["name"] = config.name;
  root["topology"] = config.topology_path;
  if (!config.fault_model_path.empty()) {
    root["fault_model"] = config.fault_model_path;
  }
  root["profile"] = config.profile;
  root["base_seed"] = config.base_seed;
  root["teardown_timeout_ms"] = config.teardown_timeout_ms;
  root["timing"] =
      json{{"warmup_ms", config.timing.warmup_ms}, {"run_ms", config.timing.run_ms}};
  json plans = json::array();
  for (const ExperimentPlan& plan : config.plans) {
    json p;
    p["id"] = plan.id;
    if (!plan.fault_id.empty()) {
      p["fault"] = plan.fault_id;
    } else if (plan.fault.has_value()) {
      // Inline entries round-trip through the model document form.
      json doc = json::parse(
          model::ExportFaultModel("inline", {*plan.fault}));
      p["fault"] = doc.at("faults").at(0);
    }
    p["repetitions"] = plan.repetitions;
    if (!plan.trigger.empty()) p["trigger"] = plan.trigger;
    if (!plan.labels.empty()) p["labels"] = plan.labels;
    json overrides = json::object();
    if (plan.overrides.probability.has_value()) {
      overrides["probability"] = *plan.overrides.probability;
    }
    if (plan.overrides.duration_ms.has_value()) {
      overrides["duration_ms"] = *plan.overrides.duration_ms;
    }
    if (plan.overrides.selector.has_value()) {
      overrides["selector"] = *plan.overrides.selector;
    }
    if (plan.overrides.pattern.has_value()) {
      overrides["pattern"] = *plan.overrides.pattern;
    }
    if (!overrides.empty()) p["overrides"] = overrides;
    if (plan.warmup_ms.has_value()) p["warmup_ms"] = *plan.warmup_ms;
    if (plan.run_ms.has_value()) p["run_ms"] = *plan.run_ms;
    if (plan.seed.has_value()) p["seed"] = *plan.seed;
    plans.push_back(std::move(p));
  }
  root["plans"] = std::move(plans);
  return root.dump(2) + "\n";
}

CampaignConfig ExportCampaign(const CampaignConfig& config) {
  CampaignConfig out = config;
  out.name = config.name + "-export";
  out.plans.clear();
  for (const ExperimentPlan& plan : config.plans) {
    for (int rep = 0; rep < plan.repetitions; ++rep) {
      ExperimentPlan expanded = plan;
      expanded.id = plan.id + "-r" + std::to_string(rep);
      expanded.repetitions = 1;
      expanded.labels["repetition"] = std::to_string(rep);
      expanded.seed = RepSeed(config, plan, rep);
      out.plans.push_back(std::move(expanded));
    }
  }
  return out;
}

std::string RecordToJsonLine(const ExperimentRecord& r) {
  json j;
  j["plan"] = r.plan_id;
  j["repetition"] = r.repetition;
  j["fault"] = r.fault_id;
  j["trigger"] = r.trigger;
  j["seed"] = r.seed;
  j["profile"] = r.profile;
  j["started_epoch_ms"] = r.started_epoch_ms;
  j["duration_ms"] = r.duration_ms;
  j["outcome"] = analyze::OutcomeName(r.outcome);
  j["evidence"] = r.evidence;
  j["trigger_status"] = r.trigger_status;
  j["workload_actions"] = r.workload_actions;
  j["workload_failures"] = r.workload_failures;
  j["injections"] = r.injections;
  j["valid"] = r.valid;
  j["labels"] = r.labels;
  return j.dump();
}

ExperimentRecord RecordFromJsonLine(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("record line: ") + e.what());
  }
  try {
    ExperimentRecord r;
    r.plan_id = j.at("plan").get<std::string>();
    r.repetition = j.at("repetition").get<int>();
    r.fault_id = j.at("fault").get<std::string>();
    r.trigger = j.at("trigger").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.profile = j.at("profile").get<std::string>();
    r.started_epoch_ms = j.at("started_epoch_ms").get<int64_t>();
    r.duration_ms = j.at("duration_ms").get<int64_t>();
    r.outcome = analyze::OutcomeFromName(j.at("outcome").get<std::string>());
    r.evidence = j.at("evidence").get<std::string>();
    r.trigger_status = j.at("trigger_status").get<std::string>();
    r.workload_actions = j.at("workload_actions").get<int64_t>();
    r.workload_failures = j.at("workload_failures").get<int64_t>();
    r.injections = j.at("injections").get<int64_t>();
    r.valid = j.at("valid").get<bool>();
    for (auto it = j.at("labels").begin(); it != j.at("labels").end(); ++it) {
      r.labels[it.key()] = it.value().get<std::string>();
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("record line: ") + e.what());
  }
}

std::vector<ExperimentRecord> LoadRecords(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  // Later rows override earlier ones with the same key: an interrupted run
  // may have recorded an experiment without journaling it, and the re-run
  // row is the one that was journaled.
  std::vector<ExperimentRecord> ordered;
  std::map<std::pair<std::string, int>, size_t> index;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ExperimentRecord r = RecordFromJsonLine(line);
    auto key = std::make_pair(r.plan_id, r.repetition);
    auto it = index.find(key);
    if (it == index.end()) {
      index[key] = ordered.size();
      ordered.push_back(std::move(r));
    } else {
      ordered[it->second] = std::move(r);
    }
  }
  return ordered;
}

std::vector<analyze::RecordSummary> Summarize(
    const std::vector<ExperimentRecord>& records) {
  std::vector<analyze::RecordSummary> out;
  out.reserve(records.size());
  for (const ExperimentRecord& r : records) {
    analyze::RecordSummary s;
    s.plan_id = r.plan_id;
    s.repetition = r.repetition;
    s.outcome = r.outcome;
    s.valid = r.valid;
    s.labels = r.labels;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<WorkloadEvent> RunWorkload(
    target::StackHandle& stack, const std::vector<std::string>& actions) {
  constexpr int64_t kTickMs = 50;
  std::vector<WorkloadEvent> events(actions.size());
  std::vector<std::thread> threads;
  threads.reserve(actions.size());
  int64_t t0 = SteadyMs();
  for (size_t i = 0; i < actions.size(); ++i) {
    int64_t due = t0 + static_cast<int64_t>(i) * kTickMs;
    int64_t now = SteadyMs();
    if (due > now) {
      std::this_thread::sleep_for(std::chrono::milliseconds(due - now));
    }
    // Each thread owns its slot, so the trace needs no locking.
    threads.emplace_back([&stack, event = &events[i], action = actions[i]] {
      int64_t begin = SteadyMs();
      target::TriggerResult r = stack.Trigger(action);
      event->action = action;
      event->status = r.status;
      event->latency_ms = SteadyMs() - begin;
    });
  }
  for (std::thread& t : threads) t.join();
  return events;
}

namespace {

void AppendLine(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out << line << "\n";
  out.flush();
  if (!out) throw HarnessError("cannot append to " + path);
}

}  // namespace

CampaignRunResult RunCampaign(const CampaignConfig& config,
                              const RunOptions& options) {
  if (options.out_dir.empty()) {
    throw ConfigError("campaign run needs an output directory");
  }
  fs::create_directories(options.out_dir);
  fs::create_directories(options.out_dir + "/logs");
  fs::create_directories(options.out_dir + "/injections");
  std::string runtime_dir = options.runtime_dir.empty()
                                ? options.out_dir + "/runtime"
                                : options.runtime_dir;

  CampaignRunResult result;
  result.records_path = options.out_dir + "/records.jsonl";
  result.journal_path = options.out_dir + "/journal.txt";

  std::set<std::string> done;
  if (options.resume && fs::exists(result.journal_path)) {
    std::ifstream in(result.journal_path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) done.insert(line);
    }
  } else if (!options.resume) {
    std::error_code ec;
    fs::remove(result.journal_path, ec);
    fs::remove(result.records_path, ec);
  }

  target::StackOptions stack_options;
  stack_options.runtime_dir = runtime_dir;
  stack_options.profile = config.profile;
  stack_options.teardown_timeout_ms = config.teardown_timeout_ms;
  target::StackHandle stack(target::LoadTopologyFile(config.topology_path),
                            stack_options);

  for (const ExperimentPlan& plan : config.plans) {
    for (int rep = 0; rep < plan.repetitions; ++rep) {
      std::string key = plan.id + "#" + std::to_string(rep);
      if (done.count(key) != 0) {
        ++result.skipped;
        continue;
      }
      uint64_t seed = RepSeed(config, plan, rep);
      if (options.progress) {
        options.progress(key + " seed " + std::to_string(seed));
      }

      int64_t started_epoch = NowEpochMs();
      int64_t t0 = SteadyMs();
      stack.Reset(seed);

      ExperimentRecord record;
      record.plan_id = plan.id;
      record.repetition = rep;
      record.fault_id =
          plan.fault.has_value() ? plan.fault->id : std::string();
      record.trigger = plan.trigger;
      record.seed = seed;
      record.profile = config.profile;
      record.started_epoch_ms = started_epoch;
      record.labels = plan.labels;

      // One continuous schedule; the fault is armed and the trigger fired
      // while the workload keeps its pace across the phase boundary.
      int64_t warmup = plan.warmup_ms.value_or(config.timing.warmup_ms);
      int64_t run = plan.run_ms.value_or(config.timing.run_ms);
      constexpr int64_t kTickMs = 50;
      size_t warmup_n = static_cast<size_t>(warmup / kTickMs);
      size_t run_n = static_cast<size_t>(run / kTickMs);
      std::vector<std::string> schedule =
          WorkloadActions(seed, warmup_n + run_n);
      std::vector<WorkloadEvent> events = RunWorkload(
          stack, {schedule.begin(), schedule.begin() + warmup_n});

      if (plan.fault.has_value()) stack.ArmFault(*plan.fault);

      if (!plan.trigger.empty()) {
        stack.SetActiveTrigger(plan.trigger);
        target::TriggerResult r = stack.Trigger(plan.trigger);
        stack.ClearActiveTrigger();
        record.trigger_status = target::CallStatusName(r.status);
      }

      std::vector<WorkloadEvent> tail = RunWorkload(
          stack, {schedule.begin() + warmup_n, schedule.end()});
      events.insert(events.end(), tail.begin(), tail.end());
      record.workload_actions = static_cast<int64_t>(events.size());
      for (const WorkloadEvent& event : events) {
        if (event.status != target::CallStatus::kOk) {
          ++record.workload_failures;
        }
      }

      // Collection happens with the boot still up; teardown noise (the
      // forced kills of wedged processes) lands after this snapshot.
      std::vector<inject::InjectionRecord> injections =
          stack.CollectInjections();
      record.injections = static_cast<int64_t>(injections.size());
      {
        std::string path = options.out_dir + "/injections/" + plan.id +
                           "-r" + std::to_string(rep) + ".jsonl";
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        for (const inject::InjectionRecord& injection : injections) {
          out << inject::RecordToJsonLine(injection) << "\n";
        }
        if (!out) throw HarnessError("cannot write " + path);
      }
      analyze::ParsedLog log =
          analyze::ParseLog(ReadFileOrThrow(stack.log_path()));
      analyze::Classification classification = analyze::Classify(log.lines);
      record.outcome = classification.primary;
      if (!classification.evidence.empty()) {
        record.evidence = FormatLogLine(classification.evidence.front());
      }
      record.valid = true;
      if (plan.fault.has_value() &&
          plan.fault->persistence == model::Persistence::kPermanent &&
          injections.empty()) {
        record.valid = false;
      }
      record.duration_ms = SteadyMs() - t0;

      fs::copy_file(stack.log_path(),
                    options.out_dir + "/logs/" + plan.id + "-r" +
                        std::to_string(rep) + ".log",
                    fs::copy_options::overwrite_existing);

      AppendLine(result.records_path, RecordToJsonLine(record));
      AppendLine(result.journal_path, key);
      ++result.executed;
    }
  }
  stack.Stop();
  return result;
}

}  // namespace sirfit::campaign

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
// Campaign execution: a plan list over the simulated stack, each repetition
// an isolated experiment (own boot, own seed, own evidence), with an
// append-only journal so an interrupted campaign resumes where it stopped.

#ifndef SIRFIT_CAMPAIGN_HPP
#define SIRFIT_CAMPAIGN_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sirfit/analyze.hpp"
#include "sirfit/model.hpp"
#include "sirfit/target.hpp"

namespace sirfit::campaign {

// Knobs a plan may change on its fault entry without editing the model.
struct PlanOverrides {
  std::optional<double> probability;     // replaces probability filters
  std::optional<int64_t> duration_ms;    // delay actions
  std::optional<std::string> selector;   // corrupt-payload actions
  std::optional<std::string> pattern;    // corrupt-payload pattern name
};

struct ExperimentPlan {
  std::string id;
  // Reference into the campaign's fault model; empty for an inline or
  // fault-free plan.
  std::string fault_id;
  // The entry as it will be armed, overrides applied.  Unset = fault-free.
  std::optional<model::FaultSpec> fault;
  PlanOverrides overrides;
  int repetitions = 1;
  std::string trigger;  // app action fired once after arming; empty = none
  std::map<std::string, std::string> labels;
  std::optional<int64_t> warmup_ms;  // plan-level timing wins over campaign
  std::optional<int64_t> run_ms;
  // Boot seed of repetition 0; later repetitions fork from it.  Unset =
  // derived from the campaign seed and the plan id.  Exported plans carry
  // it explicitly so one expanded plan replays one exact experiment.
  std::optional<uint64_t> seed;
};

struct CampaignTiming {
  int64_t warmup_ms = 3000;
  int64_t run_ms = 10000;
};

struct CampaignConfig {
  int schema_version = 1;
  std::string name;
  std::string topology_path;     // resolved against the config's directory
  std::string fault_model_path;  // may be empty when no plan references it
  std::string profile = "mixed";
  uint64_t base_seed = 1;
  int64_t teardown_timeout_ms = 5000;
  CampaignTiming timing;
  std::vector<ExperimentPlan> plans;
};

// Parses and validates a campaign.  Fault references are resolved against
// the fault model document and overrides are applied here, so a bad
// reference or an override that does not fit the action fails at load
// time.  Relative paths resolve against base_dir.  Throws ConfigError.
CampaignConfig LoadCampaign(const std::string& text,
                            const std::string& base_dir);
CampaignConfig LoadCampaignFile(const std::string& path);

// Serializes a config; LoadCampaign(SaveCampaign(c)) is equivalent to c.
std::string SaveCampaign(const CampaignConfig& config);

// Expands a campaign into one single-repetition plan per (plan, repetition)
// with the repetition's seed made explicit.  Running the expansion
// reproduces the original campaign experiment by experiment, and running
// one expanded plan alone replays exactly that experiment.
CampaignConfig ExportCampaign(const CampaignConfig& config);

// The repetition's boot seed.  Pure in (config, plan, repetition).
uint64_t RepSeed(const CampaignConfig& config, const ExperimentPlan& plan,
                 int repetition);

struct ModelCampaignOptions {
  std::string topology_path;
  std::string fault_model_path;
  std::string profile = "mixed";
  uint64_t base_seed = 1;
  int repetitions = 1;
  CampaignTiming timing;
};

// A campaign over every entry of a fault model: one single-repetition plan
// per (fault, repetition), ids derived from the fault ids, seeds explicit
// and equal to what a hand-written plan with the same id and repetitions
// would get.  The result loads losslessly through LoadCampaign.
CampaignConfig CampaignFromModel(const model::FaultModel& faults,
                                 const ModelCampaignOptions& options);

// Deterministic background workload: the action mix leans on the cheap
// introspection calls with occasional heavyweight ones, the way a device
// mostly idles between interactions.
std::vector<std::string> WorkloadActions(uint64_t seed, size_t count);

// What one dispatched workload action did.
struct WorkloadEvent {
  std::string action;
  target::CallStatus status = target::CallStatus::kOk;
  int64_t latency_ms = 0;
};

// Dispatches the given actions at 20 per second, one thread per action so
// a wedged app cannot stall the pace.  Action failures are data, never
// errors; the trace has one event per action, in schedule order.
std::vector<WorkloadEvent> RunWorkload(target::StackHandle& stack,
                                       const std::vector<std::string>& actions);

// One executed experiment, as stored in records.jsonl.
struct ExperimentRecord {
  std::string plan_id;
  int repetition = 0;
  std::string fault_id;  // empty when fault-free
  std::string trigger;
  uint64_t seed = 0;
  std::string profile;
  int64_t started_epoch_ms = 0;
  int64_t duration_ms = 0;
  analyze::Outcome outcome = analyze::Outcome::kNoFailure;
  std::string evidence;  // first classified evidence line, "" when clean
  std::string trigger_status;
  int64_t workload_actions = 0;
  int64_t workload_failures = 0;
  int64_t injections = 0;
  // False when a permanent fault produced no injection: the experiment ran
  // but never exercised the fault, so its outcome must not enter
  // comparisons.
  bool valid = true;
  std::map<std::string, std::string> labels;
};

std::string RecordToJsonLine(const ExperimentRecord& r);
ExperimentRecord RecordFromJsonLine(const std::string& line);

// Loads records.jsonl.  Re-run experiments override earlier rows with the
// same (plan, repetition).  Throws ConfigError on malformed lines.
std::vector<ExperimentRecord> LoadRecords(const std::string& path);

// Projection for the distribution and significance machinery.
std::vector<analyze::RecordSummary> Summarize(
    const std::vector<ExperimentRecord>& records);

struct RunOptions {
  std::string out_dir;      // records, journal, per-experiment logs
  std::string runtime_dir;  // sockets and state; default <out_dir>/runtime
  bool resume = true;       // honor an existing journal
  // Called once per experiment with a short progress note.
  std::function<void(const std::string&)> progress;
};

struct CampaignRunResult {
  int executed = 0;
  int skipped = 0;  // journaled before this run
  std::string records_path;
  std::string journal_path;
};

// Runs every (plan, repetition) not yet journaled.  Experiment order is
// plan order, repetitions innermost.  Throws ConfigError for unresolvable
// configs and HarnessError when the stack cannot be driven.
CampaignRunResult RunCampaign(const CampaignConfig& config,
                              const RunOptions& options);

}  // namespace sirfit::campaign

#endif  // SIRFIT_CAMPAIGN_HPP

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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "sirfit/analyze.hpp"
#include "sirfit/errors.hpp"
#include "sirfit/model.hpp"

namespace fs = std::filesystem;
using namespace sirfit;

namespace {

std::string FixturesDir() {
  const char* env = std::getenv("SIRFIT_FIXTURES");
  REQUIRE(env != nullptr);
  return env;
}

std::string TopologyPath() {
  return FixturesDir() + "/sim_stack/topology.json";
}

struct TempDir {
  std::string path;
  TempDir() {
    char tmpl[] = "/tmp/sirfit-campaign-XXXXXX";
    REQUIRE(mkdtemp(tmpl) != nullptr);
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  REQUIRE(out);
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Derives the full fault model from the architecture fixture and writes it
// next to the campaign config, the way a user would wire the two files.
std::string WriteModel(const std::string& dir) {
  model::ArchitecturalModel arch =
      model::LoadArchitectureFile(FixturesDir() + "/sim_stack/arch.json");
  std::vector<model::FaultSpec> faults = model::DeriveFaultModel(arch);
  std::string path = dir + "/model.json";
  WriteFile(path, model::ExportFaultModel(arch.name, faults));
  return path;
}

// The serialized object form of one derived fault, for inline plans.
std::string InlineFaultJson(const std::string& model_path,
                            const std::string& id) {
  model::FaultModel parsed = model::ImportFaultModelFile(model_path);
  for (const model::FaultSpec& spec : parsed.faults) {
    if (spec.id != id) continue;
    nlohmann::json doc =
        nlohmann::json::parse(model::ExportFaultModel("inline", {spec}));
    return doc.at("faults").at(0).dump();
  }
  REQUIRE_MESSAGE(false, "no fault " << id << " in " << model_path);
  return "";
}

// A two-plan campaign sized for test time: one fault-free control and one
// camera crash, both short.
std::string SmallCampaignText(const std::string& model_path) {
  return std::string(R"({
  "schema_version": 1,
  "name": "small",
  "topology": ")") +
         TopologyPath() + R"(",
  "fault_model": ")" + model_path +
         R"(",
  "profile": "mixed",
  "base_seed": 42,
  "timing": {"warmup_ms": 700, "run_ms": 900},
  "plans": [
    {"id": "baseline", "repetitions": 2, "labels": {"subsystem": "none"}},
    {"id": "cam-crash",
     "fault": "camera-service/camera-rpc.take_picture/S1.return-error/permanent",
     "repetitions": 2,
     "trigger": "take_picture",
     "labels": {"subsystem": "camera"}}
  ]
})";
}

}  // namespace

TEST_CASE("campaign config parses, validates, and round-trips") {
  TempDir tmp;
  std::string model_path = WriteModel(tmp.path);

  SUBCASE("well-formed config loads with resolved faults") {
    campaign::CampaignConfig config =
        campaign::LoadCampaign(SmallCampaignText(model_path), tmp.path);
    CHECK(config.name == "small");
    CHECK(config.profile == "mixed");
    CHECK(config.base_seed == 42);
    CHECK(config.timing.warmup_ms == 700);
    CHECK(config.timing.run_ms == 900);
    REQUIRE(config.plans.size() == 2);
    CHECK_FALSE(config.plans[0].fault.has_value());
    CHECK(config.plans[0].fault_id.empty());
    REQUIRE(config.plans[1].fault.has_value());
    CHECK(config.plans[1].fault->id ==
          "camera-service/camera-rpc.take_picture/S1.return-error/permanent");
    CHECK(config.plans[1].trigger == "take_picture");
    CHECK(config.plans[1].labels.at("subsystem") == "camera");
  }

  SUBCASE("inline fault objects work without a fault model file") {
    std::string text = std::string(R"({
      "schema_version": 1,
      "name": "inline-only",
      "topology": ")") +
                       TopologyPath() + R"(",
      "plans": [
        {"id": "p", "fault": )" +
                       InlineFaultJson(
                           model_path,
                           "rild/phone-rpc.dial/S1.return-error/permanent") +
                       R"(}
      ]
    })";
    campaign::CampaignConfig config = campaign::LoadCampaign(text, tmp.path);
    REQUIRE(config.plans.size() == 1);
    REQUIRE(config.plans[0].fault.has_value());
    CHECK(config.plans[0].fault_id.empty());
    CHECK(config.plans[0].fault->id ==
          "rild/phone-rpc.dial/S1.return-error/permanent");
    CHECK(config.plans[0].fault->action.kind ==
          model::ActionKind::kReturnError);
  }

  SUBCASE("overrides are applied onto the resolved entry at load time") {
    std::string text = std::string(R"({
      "schema_version": 1,
      "name": "overridden",
      "topology": ")") +
                       TopologyPath() + R"(",
      "fault_model": ")" + model_path +
                       R"(",
      "plans": [
        {"id": "certain-stall",
         "fault": "camera-service/camera-rpc.take_picture/S2.stall/transient",
         "overrides": {"probability": 1.0}},
        {"id": "slow",
         "fault": "sensors-service/sensors-rpc.read_sensor/S3.delay/permanent",
         "overrides": {"duration_ms": 1500}},
        {"id": "big-reading",
         "fault": "sensorhub-driver/sensorhub-channel.read/S4.corrupt-payload/transient",
         "overrides": {"probability": 1.0, "selector": "tag:1",
                       "pattern": "max"}}
      ]
    })";
    campaign::CampaignConfig config = campaign::LoadCampaign(text, tmp.path);
    REQUIRE(config.plans.size() == 3);
    const model::FaultSpec& stall = *config.plans[0].fault;
    REQUIRE(stall.filters.size() == 1);
    CHECK(stall.filters[0].kind == model::FilterKind::kProbability);
    CHECK(stall.filters[0].probability == 1.0);
    CHECK(config.plans[1].fault->action.duration_ms == 1500);
    CHECK(config.plans[2].fault->action.selector == "tag:1");
  }

  SUBCASE("mistakes are rejected with the offending plan named") {
    auto broken = [&](const std::string& plan_json) {
      return std::string(R"({"schema_version": 1, "name": "x", "topology": ")") +
             TopologyPath() + R"(", "fault_model": ")" + model_path +
             R"(", "plans": [)" + plan_json + "]}";
    };
    CHECK_THROWS_AS(
        campaign::LoadCampaign(broken(R"({"id": "p", "fault": "no/such/fault"})"),
                               tmp.path),
        ConfigError);
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(R"({"id": "p", "trigger": "no_such_action"})"), tmp.path),
        ConfigError);
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(R"({"id": "p", "repetitions": 0})"), tmp.path),
        ConfigError);
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(R"({"id": "a#b"})"), tmp.path),
        ConfigError);
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(R"({"id": "p", "overrides": {"probability": 0.5}})"),
            tmp.path),
        ConfigError);
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(
                R"({"id": "p",
                    "fault": "rild/phone-rpc.dial/S1.return-error/permanent",
                    "overrides": {"duration_ms": 500}})"),
            tmp.path),
        ConfigError);
    // Permanent entries may not be made probabilistic; they would no
    // longer round-trip as a valid model document.
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(
                R"({"id": "p",
                    "fault": "rild/phone-rpc.dial/S1.return-error/permanent",
                    "overrides": {"probability": 0.5}})"),
            tmp.path),
        ConfigError);
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(R"({"id": "p"}, {"id": "p"})"), tmp.path),
        ConfigError);
    CHECK_THROWS_AS(
        campaign::LoadCampaign(
            broken(R"({"id": "p", "typo_key": 1})"), tmp.path),
        ConfigError);
  }

  SUBCASE("save then load preserves every field") {
    std::string text = std::string(R"({
      "schema_version": 1,
      "name": "round-trip",
      "topology": ")") +
                       TopologyPath() + R"(",
      "fault_model": ")" + model_path +
                       R"(",
      "base_seed": 77,
      "teardown_timeout_ms": 4000,
      "timing": {"warmup_ms": 650, "run_ms": 850},
      "plans": [
        {"id": "ref",
         "fault": "camera-service/camera-rpc.take_picture/S2.stall/transient",
         "overrides": {"probability": 1.0},
         "repetitions": 3, "trigger": "take_picture",
         "labels": {"subsystem": "camera", "mode": "timing"},
         "warmup_ms": 500, "run_ms": 700, "seed": 12345},
        {"id": "inline", "fault": )" +
                       InlineFaultJson(
                           model_path,
                           "rild/phone-rpc.dial/S1.return-error/permanent") +
                       R"(},
        {"id": "free"}
      ]
    })";
    campaign::CampaignConfig config = campaign::LoadCampaign(text, tmp.path);
    campaign::CampaignConfig reloaded =
        campaign::LoadCampaign(campaign::SaveCampaign(config), "");
    CHECK(reloaded.name == config.name);
    CHECK(reloaded.base_seed == config.base_seed);
    CHECK(reloaded.teardown_timeout_ms == config.teardown_timeout_ms);
    CHECK(reloaded.timing.warmup_ms == config.timing.warmup_ms);
    CHECK(reloaded.timing.run_ms == config.timing.run_ms);
    REQUIRE(reloaded.plans.size() == config.plans.size());
    for (size_t i = 0; i < config.plans.size(); ++i) {
      const campaign::ExperimentPlan& a = config.plans[i];
      const campaign::ExperimentPlan& b = reloaded.plans[i];
      CHECK(b.id == a.id);
      CHECK(b.fault_id == a.fault_id);
      CHECK(b.repetitions == a.repetitions);
      CHECK(b.trigger == a.trigger);
      CHECK(b.labels == a.labels);
      CHECK(b.warmup_ms == a.warmup_ms);
      CHECK(b.run_ms == a.run_ms);
      CHECK(b.seed == a.seed);
      REQUIRE(b.fault.has_value() == a.fault.has_value());
      if (a.fault.has_value()) {
        // Equality through the canonical document form.
        CHECK(model::ExportFaultModel("x", {*b.fault}) ==
              model::ExportFaultModel("x", {*a.fault}));
      }
    }
    // The override survived: the reloaded stall entry is certain.
    REQUIRE(reloaded.plans[0].fault.has_value());
    CHECK(reloaded.plans[0].fault->ProbabilityValue() == 1.0);
  }
}

TEST_CASE("repetition seeds are pure, distinct, and exact under export") {
  TempDir tmp;
  std::string model_path = WriteModel(tmp.path);
  campaign::CampaignConfig config =
      campaign::LoadCampaign(SmallCampaignText(model_path), tmp.path);

  SUBCASE("pure and distinct across plans and repetitions") {
    std::set<uint64_t> seen;
    for (const campaign::ExperimentPlan& plan : config.plans) {
      for (int rep = 0; rep < plan.repetitions; ++rep) {
        uint64_t a = campaign::RepSeed(config, plan, rep);
        uint64_t b = campaign::RepSeed(config, plan, rep);
        CHECK(a == b);
        CHECK(seen.insert(a).second);
      }
    }
    CHECK(seen.size() == 4);
  }

  SUBCASE("an explicit plan seed is the boot seed of repetition zero") {
    campaign::ExperimentPlan plan = config.plans[0];
    plan.seed = 777;
    CHECK(campaign::RepSeed(config, plan, 0) == 777);
    CHECK(campaign::RepSeed(config, plan, 1) != 777);
  }

  SUBCASE("the expansion reproduces every repetition's seed") {
    campaign::CampaignConfig exported = campaign::ExportCampaign(config);
    REQUIRE(exported.plans.size() == 4);
    size_t idx = 0;
    for (const campaign::ExperimentPlan& plan : config.plans) {
      for (int rep = 0; rep < plan.repetitions; ++rep, ++idx) {
        const campaign::ExperimentPlan& expanded = exported.plans[idx];
        CHECK(expanded.repetitions == 1);
        CHECK(expanded.id == plan.id + "-r" + std::to_string(rep));
        CHECK(campaign::RepSeed(exported, expanded, 0) ==
              campaign::RepSeed(config, plan, rep));
      }
    }
  }

  SUBCASE("the expansion survives a save and load cycle") {
    campaign::CampaignConfig exported = campaign::ExportCampaign(config);
    campaign::CampaignConfig reloaded =
        campaign::LoadCampaign(campaign::SaveCampaign(exported), "");
    REQUIRE(reloaded.plans.size() == exported.plans.size());
    for (size_t i = 0; i < exported.plans.size(); ++i) {
      CHECK(reloaded.plans[i].seed == exported.plans[i].seed);
      CHECK(campaign::RepSeed(reloaded, reloaded.plans[i], 0) ==
            campaign::RepSeed(exported, exported.plans[i], 0));
    }
  }
}

TEST_CASE("a fault model expands into a campaign that loads losslessly") {
  TempDir tmp;
  std::string model_path = WriteModel(tmp.path);
  model::FaultModel parsed = model::ImportFaultModelFile(model_path);
  campaign::ModelCampaignOptions options;
  options.topology_path = TopologyPath();
  options.fault_model_path = model_path;
  options.repetitions = 3;
  options.base_seed = 11;
  campaign::CampaignConfig config =
      campaign::CampaignFromModel(parsed, options);
  CHECK(config.plans.size() == parsed.faults.size() * 3);

  // Single-repetition entries with explicit distinct seeds, each keeping
  // its source fault and repetition index.
  std::set<uint64_t> seeds;
  for (const campaign::ExperimentPlan& plan : config.plans) {
    CHECK(plan.repetitions == 1);
    REQUIRE(plan.seed.has_value());
    seeds.insert(*plan.seed);
    REQUIRE(plan.fault.has_value());
    CHECK(plan.fault_id == plan.fault->id);
    CHECK_FALSE(plan.labels.at("repetition").empty());
  }
  CHECK(seeds.size() == config.plans.size());

  // Seeds equal the hand-written form of the sweep: one plan under the
  // base id carrying three repetitions.
  campaign::ExperimentPlan hand;
  hand.id = config.plans[0].id.substr(0, config.plans[0].id.size() - 3);
  for (int rep = 0; rep < 3; ++rep) {
    CHECK(campaign::RepSeed(config, config.plans[rep], 0) ==
          campaign::RepSeed(config, hand, rep));
  }

  std::string path = tmp.path + "/sweep.json";
  WriteFile(path, campaign::SaveCampaign(config));
  campaign::CampaignConfig reloaded = campaign::LoadCampaignFile(path);
  REQUIRE(reloaded.plans.size() == config.plans.size());
  for (size_t i = 0; i < config.plans.size(); ++i) {
    CHECK(reloaded.plans[i].id == config.plans[i].id);
    CHECK(reloaded.plans[i].seed == config.plans[i].seed);
    CHECK(reloaded.plans[i].fault_id == config.plans[i].fault_id);
    REQUIRE(reloaded.plans[i].fault.has_value());
    CHECK(model::ExportFaultModel("x", {*reloaded.plans[i].fault}) ==
          model::ExportFaultModel("x", {*config.plans[i].fault}));
  }

  CHECK_THROWS_AS(campaign::CampaignFromModel(model::FaultModel{}, options),
                  ConfigError);
  campaign::ModelCampaignOptions zero_reps = options;
  zero_reps.repetitions = 0;
  CHECK_THROWS_AS(campaign::CampaignFromModel(parsed, zero_reps),
                  ConfigError);
}

TEST_CASE("the workload trace records statuses and latencies as data") {
  TempDir tmp;
  std::string model_path = WriteModel(tmp.path);
  target::StackOptions options;
  options.runtime_dir = tmp.path + "/rt";
  options.seed = 5;
  target::StackHandle stack(target::LoadTopologyFile(TopologyPath()),
                            std::move(options));
  stack.Start();

  std::vector<campaign::WorkloadEvent> healthy = campaign::RunWorkload(
      stack, {"get_state", "read_sensor", "show_activities", "list_packages"});
  REQUIRE(healthy.size() == 4);
  CHECK(healthy[0].action == "get_state");
  CHECK(healthy[3].action == "list_packages");
  for (const campaign::WorkloadEvent& event : healthy) {
    CHECK(event.status == target::CallStatus::kOk);
    CHECK(event.latency_ms < 1500);
  }

  // A certain stall wedges the camera app; the trace reports the
  // timeouts as data and the runner keeps going.
  model::FaultModel parsed = model::ImportFaultModelFile(model_path);
  model::FaultSpec stall;
  bool found = false;
  for (const model::FaultSpec& spec : parsed.faults) {
    if (spec.id ==
        "camera-service/camera-rpc.take_picture/S2.stall/transient") {
      stall = spec;
      found = true;
    }
  }
  REQUIRE(found);
  for (model::Filter& f : stall.filters) {
    if (f.kind == model::FilterKind::kProbability) {
      f = model::Filter::Probability(1.0);
    }
  }
  stack.ArmFault(stall);
  std::vector<campaign::WorkloadEvent> wedged =
      campaign::RunWorkload(stack, {"take_picture", "show_activities"});
  REQUIRE(wedged.size() == 2);
  CHECK(wedged[0].status == target::CallStatus::kTimedOut);
  CHECK(wedged[0].latency_ms >= 1900);
  CHECK(wedged[1].status != target::CallStatus::kOk);
  stack.Stop();
}

TEST_CASE("workload schedules are deterministic with the intended mix") {
  std::vector<std::string> a = campaign::WorkloadActions(9001, 2000);
  std::vector<std::string> b = campaign::WorkloadActions(9001, 2000);
  CHECK(a == b);
  CHECK(a.size() == 2000);
  std::vector<std::string> c = campaign::WorkloadActions(9002, 2000);
  CHECK(a != c);

  std::map<std::string, int> counts;
  for (const std::string& action : a) counts[action]++;
  // Every action appears; cheap calls dominate; heavyweight ones are rare
  // but present.  Bounds are loose by design, the draw is random.
  CHECK(counts.size() == 7);
  CHECK(counts.at("show_activities") > counts.at("take_picture"));
  CHECK(counts.at("show_activities") > 300);
  CHECK(counts.at("take_picture") > 30);
  CHECK(counts.at("take_picture") < 300);
  CHECK(counts.at("dial") < 300);
}

TEST_CASE("experiment records round-trip and deduplicate by last write") {
  campaign::ExperimentRecord r;
  r.plan_id = "p1";
  r.repetition = 2;
  r.fault_id = "rild/phone-rpc.dial/S1.return-error/permanent";
  r.trigger = "dial";
  r.seed = 0xdeadbeef12345678ull;
  r.profile = "mixed";
  r.started_epoch_ms = 1700000000123;
  r.duration_ms = 4321;
  r.outcome = analyze::Outcome::kCrash;
  r.evidence = "1700000000200 17 17 E runtime: FATAL EXCEPTION: x in rild";
  r.trigger_status = "error";
  r.workload_actions = 18;
  r.workload_failures = 3;
  r.injections = 7;
  r.valid = true;
  r.labels = {{"subsystem", "phone"}, {"mode", "availability"}};

  std::string line = campaign::RecordToJsonLine(r);
  CHECK(line.find('\n') == std::string::npos);
  campaign::ExperimentRecord back = campaign::RecordFromJsonLine(line);
  CHECK(back.plan_id == r.plan_id);
  CHECK(back.repetition == r.repetition);
  CHECK(back.fault_id == r.fault_id);
  CHECK(back.seed == r.seed);
  CHECK(back.outcome == r.outcome);
  CHECK(back.evidence == r.evidence);
  CHECK(back.trigger_status == r.trigger_status);
  CHECK(back.workload_failures == r.workload_failures);
  CHECK(back.injections == r.injections);
  CHECK(back.valid == r.valid);
  CHECK(back.labels == r.labels);

  CHECK_THROWS_AS(campaign::RecordFromJsonLine("{\"plan\": 1"), ConfigError);
  CHECK_THROWS_AS(campaign::RecordFromJsonLine("{\"plan\": \"p\"}"),
                  ConfigError);

  TempDir tmp;
  campaign::ExperimentRecord rerun = r;
  rerun.outcome = analyze::Outcome::kNoFailure;
  rerun.valid = false;
  campaign::ExperimentRecord other = r;
  other.repetition = 3;
  std::ofstream out(tmp.path + "/records.jsonl");
  out << campaign::RecordToJsonLine(r) << "\n"
      << campaign::RecordToJsonLine(other) << "\n"
      << campaign::RecordToJsonLine(rerun) << "\n";
  out.close();
  std::vector<campaign::ExperimentRecord> loaded =
      campaign::LoadRecords(tmp.path + "/records.jsonl");
  REQUIRE(loaded.size() == 2);
  // The re-run row replaced the first in place, order preserved.
  CHECK(loaded[0].repetition == 2);
  CHECK(loaded[0].outcome == analyze::Outcome::kNoFailure);
  CHECK_FALSE(loaded[0].valid);
  CHECK(loaded[1].repetition == 3);

  std::vector<analyze::RecordSummary> summaries = campaign::Summarize(loaded);
  REQUIRE(summaries.size() == 2);
  CHECK(summaries[0].plan_id == "p1");
  CHECK(summaries[0].outcome == analyze::Outcome::kNoFailure);
  CHECK(summaries[0].valid == false);
  CHECK(summaries[1].labels.at("subsystem") == "phone");
}

TEST_CASE("a small campaign runs, records, resumes, and repeats exactly") {
  TempDir tmp;
  std::string model_path = WriteModel(tmp.path);
  campaign::CampaignConfig config =
      campaign::LoadCampaign(SmallCampaignText(model_path), tmp.path);

  std::string out_dir = tmp.path + "/out";
  campaign::RunOptions options;
  options.out_dir = out_dir;

  campaign::CampaignRunResult first = campaign::RunCampaign(config, options);
  CHECK(first.executed == 4);
  CHECK(first.skipped == 0);

  std::vector<campaign::ExperimentRecord> records =
      campaign::LoadRecords(first.records_path);
  REQUIRE(records.size() == 4);
  std::map<std::pair<std::string, int>, campaign::ExperimentRecord> by_key;
  for (const campaign::ExperimentRecord& r : records) {
    by_key[{r.plan_id, r.repetition}] = r;
    CHECK(r.profile == "mixed");
    // The workload spans warm-up and run at 20 actions per second.
    CHECK(r.workload_actions == (700 + 900) / 50);
    std::string stem =
        r.plan_id + "-r" + std::to_string(r.repetition);
    CHECK(fs::exists(out_dir + "/logs/" + stem + ".log"));
    CHECK(fs::exists(out_dir + "/injections/" + stem + ".jsonl"));
  }
  REQUIRE(by_key.size() == 4);

  // The control plans stay clean; the armed camera fault crashes the app
  // that triggered the call, every repetition.
  for (int rep = 0; rep < 2; ++rep) {
    const campaign::ExperimentRecord& base = by_key.at({"baseline", rep});
    CHECK(base.outcome == analyze::Outcome::kNoFailure);
    CHECK(base.fault_id.empty());
    CHECK(base.injections == 0);
    CHECK(base.valid);
    CHECK(base.workload_failures == 0);

    const campaign::ExperimentRecord& crash = by_key.at({"cam-crash", rep});
    CHECK(crash.outcome == analyze::Outcome::kCrash);
    CHECK(crash.injections > 0);
    CHECK(crash.valid);
    CHECK(crash.trigger_status != "ok");
    CHECK(crash.evidence.find("FATAL EXCEPTION") != std::string::npos);
    CHECK(crash.seed == campaign::RepSeed(config, config.plans[1], rep));

    // The evidence sidecars mirror the injection counts.
    std::string rep_name = "-r" + std::to_string(rep) + ".jsonl";
    CHECK(fs::file_size(out_dir + "/injections/baseline" + rep_name) == 0);
    CHECK(fs::file_size(out_dir + "/injections/cam-crash" + rep_name) > 0);
  }

  // Journal lines mirror execution order, one per experiment.
  std::vector<std::string> journal = Lines(ReadFile(first.journal_path));
  REQUIRE(journal.size() == 4);
  CHECK(journal[0] == "baseline#0");
  CHECK(journal[3] == "cam-crash#1");

  SUBCASE("a finished campaign resumes to a no-op") {
    campaign::CampaignRunResult again = campaign::RunCampaign(config, options);
    CHECK(again.executed == 0);
    CHECK(again.skipped == 4);
    CHECK(campaign::LoadRecords(again.records_path).size() == 4);
  }

  SUBCASE("a truncated journal resumes exactly the missing experiments") {
    WriteFile(first.journal_path, journal[0] + "\n" + journal[1] + "\n");
    campaign::CampaignRunResult resumed =
        campaign::RunCampaign(config, options);
    CHECK(resumed.executed == 2);
    CHECK(resumed.skipped == 2);
    std::vector<campaign::ExperimentRecord> merged =
        campaign::LoadRecords(resumed.records_path);
    REQUIRE(merged.size() == 4);
    for (const campaign::ExperimentRecord& r : merged) {
      if (r.plan_id == "cam-crash") {
        CHECK(r.outcome == analyze::Outcome::kCrash);
      }
    }
    CHECK(Lines(ReadFile(resumed.journal_path)).size() == 4);
  }

  SUBCASE("the same seeds give the same outcomes in a fresh directory") {
    campaign::RunOptions repeat_options;
    repeat_options.out_dir = tmp.path + "/out2";
    campaign::CampaignRunResult second =
        campaign::RunCampaign(config, repeat_options);
    CHECK(second.executed == 4);
    std::vector<campaign::ExperimentRecord> a =
        campaign::LoadRecords(first.records_path);
    std::vector<campaign::ExperimentRecord> b =
        campaign::LoadRecords(second.records_path);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].plan_id == b[i].plan_id);
      CHECK(a[i].repetition == b[i].repetition);
      CHECK(a[i].seed == b[i].seed);
      CHECK(a[i].outcome == b[i].outcome);
      CHECK(a[i].valid == b[i].valid);
      CHECK(a[i].workload_actions == b[i].workload_actions);
    }
  }
}

TEST_CASE("a permanent fault that never fires marks the experiment invalid") {
  TempDir tmp;
  std::string model_path = WriteModel(tmp.path);
  // Armed on the dial operation, but nothing dials: no trigger, and the
  // short workload happens to skip dial for this seed.  The run must come
  // back clean and flagged as not exercised.
  std::string text = std::string(R"({
    "schema_version": 1,
    "name": "silent",
    "topology": ")") +
                     TopologyPath() + R"(",
    "fault_model": ")" + model_path +
                     R"(",
    "base_seed": 7,
    "timing": {"warmup_ms": 600, "run_ms": 150},
    "plans": [
      {"id": "silent",
       "fault": "rild/phone-rpc.dial/S1.return-error/permanent"}
    ]
  })";
  campaign::CampaignConfig config = campaign::LoadCampaign(text, tmp.path);
  // The premise: the post-arm slice of the schedule (the last three of
  // fifteen draws) avoids dial.  If the mix or the seed derivation
  // changes, fail here, not in the conclusion.
  uint64_t seed = campaign::RepSeed(config, config.plans[0], 0);
  std::vector<std::string> schedule = campaign::WorkloadActions(seed, 15);
  for (size_t i = 12; i < schedule.size(); ++i) {
    REQUIRE(schedule[i] != "dial");
  }
  campaign::RunOptions options;
  options.out_dir = tmp.path + "/out";
  campaign::CampaignRunResult result = campaign::RunCampaign(config, options);
  CHECK(result.executed == 1);
  std::vector<campaign::ExperimentRecord> records =
      campaign::LoadRecords(result.records_path);
  REQUIRE(records.size() == 1);
  CHECK(records[0].outcome == analyze::Outcome::kNoFailure);
  CHECK(records[0].injections == 0);
  CHECK_FALSE(records[0].valid);
}

TEST_CASE("campaign records feed the distribution and significance analysis") {
  // Two plans of one subsystem with identical repetition outcomes: the
  // repetition-independence test must come back with p exactly 1.
  std::vector<campaign::ExperimentRecord> records;
  for (int rep = 0; rep < 3; ++rep) {
    campaign::ExperimentRecord a;
    a.plan_id = "cam-crash";
    a.repetition = rep;
    a.outcome = analyze::Outcome::kCrash;
    a.labels = {{"subsystem", "camera"}};
    records.push_back(a);
    campaign::ExperimentRecord b;
    b.plan_id = "cam-clean";
    b.repetition = rep;
    b.outcome = analyze::Outcome::kNoFailure;
    b.labels = {{"subsystem", "camera"}};
    records.push_back(b);
  }
  analyze::DistributionReport report =
      analyze::Distribution(campaign::Summarize(records), {"subsystem"});
  REQUIRE(report.rows.size() == 1);
  const analyze::DistributionRow& row = report.rows[0];
  CHECK(row.group.at("subsystem") == "camera");
  CHECK(row.total == 6);
  CHECK(row.counts.at(analyze::Outcome::kCrash) == 3);
  CHECK(row.counts.at(analyze::Outcome::kNoFailure) == 3);
  REQUIRE(row.fisher_defined);
  CHECK(row.fisher_p == doctest::Approx(1.0).epsilon(1e-12));

  analyze::DistributionReport by_plan =
      analyze::Distribution(campaign::Summarize(records), {"plan"});
  CHECK(by_plan.rows.size() == 2);
}

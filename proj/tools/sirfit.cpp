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
// The sirfit command line: fault-model derivation, campaign execution,
// result analysis, and the standalone pieces (proxy, target stack).
// Exit codes: 0 success, 1 harness error, 2 bad input.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sirfit/analyze.hpp"
#include "sirfit/campaign.hpp"
#include "sirfit/errors.hpp"
#include "sirfit/inject.hpp"
#include "sirfit/model.hpp"
#include "sirfit/proxy.hpp"
#include "sirfit/target.hpp"

namespace {

using namespace sirfit;

volatile std::sig_atomic_t g_interrupted = 0;

void OnSignal(int) { g_interrupted = 1; }

void WaitForInterrupt() {
  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  while (g_interrupted == 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
}

// Empty path means stdout.
void WriteOutput(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw HarnessError("cannot write " + path);
}

uint64_t ParseSeedEnv(const char* text) {
  errno = 0;
  char* end = nullptr;
  unsigned long long value = std::strtoull(text, &end, 10);
  if (errno != 0 || end == text || *end != '\0') {
    throw ConfigError(std::string("SIRFIT_SEED is not a number: \"") + text +
                      "\"");
  }
  return value;
}

// True when the config file pins its own campaign-level warm-up, in which
// case the pacing profile must not touch it.
bool HasExplicitWarmup(const std::string& config_path) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + config_path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(config_path + ": " + e.what());
  }
  return root.is_object() && root.contains("timing") &&
         root.at("timing").is_object() &&
         root.at("timing").contains("warmup_ms");
}

std::string DistributionText(const std::string& records_path,
                             const std::vector<std::string>& keys, bool csv) {
  std::vector<campaign::ExperimentRecord> records =
      campaign::LoadRecords(records_path);
  if (records.empty()) {
    throw ConfigError(records_path + ": no records to analyze");
  }
  analyze::DistributionReport report =
      analyze::Distribution(campaign::Summarize(records), keys);
  return csv ? report.ToCsv() : report.ToTable();
}

int RunMain(int argc, char** argv) {
  CLI::App app{"SIR-derived fault injection for a simulated service stack"};
  app.require_subcommand(1);

  // --- model ---------------------------------------------------------------
  CLI::App* model_cmd =
      app.add_subcommand("model", "Derive and transform fault models");
  model_cmd->require_subcommand(1);

  std::string arch_path;
  std::string derive_out;
  CLI::App* derive = model_cmd->add_subcommand(
      "derive", "Apply the failure-mode checklist to an architecture");
  derive->add_option("arch", arch_path, "architecture description JSON")
      ->required();
  derive->add_option("-o,--out", derive_out, "output file (default stdout)");
  derive->callback([&] {
    model::ArchitecturalModel arch = model::LoadArchitectureFile(arch_path);
    WriteOutput(derive_out, model::ExportFaultModel(
                                arch.name, model::DeriveFaultModel(arch)));
  });

  std::string sweep_model_path;
  std::string sweep_out;
  campaign::ModelCampaignOptions sweep;
  sweep.repetitions = 3;
  CLI::App* sweep_cmd = model_cmd->add_subcommand(
      "export-campaign",
      "Expand a fault model into a campaign config, one single-repetition "
      "plan per fault and repetition");
  sweep_cmd->add_option("model", sweep_model_path, "fault model JSON")
      ->required();
  sweep_cmd->add_option("--topology", sweep.topology_path,
                        "stack topology the campaign will run against")
      ->required();
  sweep_cmd->add_option("-o,--out", sweep_out, "output file (default stdout)");
  sweep_cmd->add_option("--repetitions", sweep.repetitions,
                        "repetitions per fault");
  sweep_cmd->add_option("--seed", sweep.base_seed, "campaign base seed");
  sweep_cmd->add_option("--robustness", sweep.profile,
                        "handler profile for the generated campaign");
  sweep_cmd->add_option("--warmup-ms", sweep.timing.warmup_ms,
                        "per-experiment warm-up");
  sweep_cmd->add_option("--run-ms", sweep.timing.run_ms,
                        "per-experiment post-injection run");
  sweep_cmd->callback([&] {
    sweep.fault_model_path = sweep_model_path;
    campaign::CampaignConfig config = campaign::CampaignFromModel(
        model::ImportFaultModelFile(sweep_model_path), sweep);
    WriteOutput(sweep_out, campaign::SaveCampaign(config));
  });

  // --- campaign ------------------------------------------------------------
  CLI::App* campaign_cmd =
      app.add_subcommand("campaign", "Execute experiment campaigns");
  campaign_cmd->require_subcommand(1);

  std::string run_config_path;
  std::string run_out_dir;
  std::string pacing = "desk";
  std::vector<std::string> run_keys{"plan"};
  bool run_fresh = false;
  bool run_quiet = false;
  CLI::App* run_cmd = campaign_cmd->add_subcommand(
      "run", "Run every experiment the journal does not list yet");
  run_cmd->add_option("config", run_config_path, "campaign config JSON")
      ->required();
  run_cmd->add_option("--out", run_out_dir,
                      "output directory (records, journal, logs, report)")
      ->required();
  run_cmd
      ->add_option("--profile", pacing,
                   "pacing profile; paper-faithful raises the default "
                   "warm-up to 30 s")
      ->check(CLI::IsMember({"desk", "paper-faithful"}));
  run_cmd->add_option("--by", run_keys,
                      "label keys for the closing report (default: plan)");
  run_cmd->add_flag("--fresh", run_fresh,
                    "ignore an existing journal and start over");
  run_cmd->add_flag("-q,--quiet", run_quiet, "no per-experiment progress");
  run_cmd->callback([&] {
    campaign::CampaignConfig config =
        campaign::LoadCampaignFile(run_config_path);
    if (pacing == "paper-faithful" && !HasExplicitWarmup(run_config_path)) {
      config.timing.warmup_ms = 30000;
    }
    if (const char* env = std::getenv("SIRFIT_SEED")) {
      config.base_seed = ParseSeedEnv(env);
    }
    campaign::RunOptions options;
    options.out_dir = run_out_dir;
    options.resume = !run_fresh;
    if (!run_quiet) {
      options.progress = [](const std::string& note) {
        std::cout << note << "\n" << std::flush;
      };
    }
    campaign::CampaignRunResult result =
        campaign::RunCampaign(config, options);
    std::string table = DistributionText(result.records_path, run_keys, false);
    WriteOutput(run_out_dir + "/report.txt", table);
    WriteOutput(run_out_dir + "/report.csv",
                DistributionText(result.records_path, run_keys, true));
    std::cout << table << "executed " << result.executed << ", skipped "
              << result.skipped << ", records in " << result.records_path
              << "\n";
  });

  std::string export_config_path;
  std::string export_out;
  CLI::App* export_cmd = campaign_cmd->add_subcommand(
      "export", "Expand a campaign into single-repetition plans with "
                "explicit seeds");
  export_cmd->add_option("config", export_config_path, "campaign config JSON")
      ->required();
  export_cmd->add_option("-o,--out", export_out,
                         "output file (default stdout)");
  export_cmd->callback([&] {
    WriteOutput(export_out,
                campaign::SaveCampaign(campaign::ExportCampaign(
                    campaign::LoadCampaignFile(export_config_path))));
  });

  // --- analyze -------------------------------------------------------------
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "Classify and summarize results");
  analyze_cmd->require_subcommand(1);

  std::string report_dir;
  std::vector<std::string> report_keys{"plan"};
  bool report_csv = false;
  CLI::App* report_cmd = analyze_cmd->add_subcommand(
      "report", "Outcome distribution tables for a campaign directory");
  report_cmd->add_option("dir", report_dir, "campaign output directory")
      ->required();
  report_cmd->add_option("--by", report_keys,
                         "label keys to group by (default: plan)");
  report_cmd->add_flag("--csv", report_csv, "CSV instead of a table");
  report_cmd->callback([&] {
    std::cout << DistributionText(report_dir + "/records.jsonl", report_keys,
                                  report_csv);
  });

  // --- proxy ---------------------------------------------------------------
  CLI::App* proxy_cmd =
      app.add_subcommand("proxy", "Standalone injection proxy");
  proxy_cmd->require_subcommand(1);

  std::string attach_listen;
  std::string attach_upstream;
  std::string attach_faults;
  std::string attach_topology;
  std::string attach_channel;
  std::string attach_log;
  uint64_t attach_seed = 1;
  CLI::App* attach_cmd = proxy_cmd->add_subcommand(
      "attach", "Interpose one channel socket and inject from a fault model");
  attach_cmd->add_option("--listen", attach_listen, "socket path to serve")
      ->required();
  attach_cmd
      ->add_option("--upstream", attach_upstream, "socket path to forward to")
      ->required();
  attach_cmd->add_option("--faults", attach_faults, "fault model JSON")
      ->required();
  attach_cmd
      ->add_option("--topology", attach_topology,
                   "topology defining the interposed channel")
      ->required();
  attach_cmd
      ->add_option("--channel", attach_channel,
                   "channel name within the topology")
      ->required();
  attach_cmd->add_option("--seed", attach_seed, "injection decision seed");
  attach_cmd->add_option("--injection-log", attach_log,
                         "where to write the evidence on exit "
                         "(default stdout)");
  attach_cmd->callback([&] {
    target::StackTopology topology =
        target::LoadTopologyFile(attach_topology);
    const target::StackChannel* channel = nullptr;
    std::string known;
    for (const target::StackChannel& ch : topology.channels) {
      if (ch.name == attach_channel) channel = &ch;
      known += known.empty() ? ch.name : ", " + ch.name;
    }
    if (channel == nullptr) {
      throw ConfigError("no channel \"" + attach_channel + "\" in " +
                        attach_topology + " (have: " + known + ")");
    }
    proxy::ChannelBinding binding;
    binding.framing = channel->framing;
    binding.component = channel->component;
    binding.interface_name = channel->interface_name;
    for (const target::ChannelOp& op : channel->ops) {
      binding.ops_by_code[op.code] = op.name;
    }
    binding.forward_op = channel->forward_op;
    binding.backward_op = channel->backward_op;
    if (!channel->device_node.empty()) {
      binding.path_hint = "/dev/" + channel->name;
    }

    model::FaultModel faults = model::ImportFaultModelFile(attach_faults);
    inject::InjectionController controller(attach_seed);
    controller.Arm(faults.faults);

    proxy::Proxy proxy(attach_listen, attach_upstream, binding, &controller);
    proxy.Start();
    std::cerr << "interposing " << attach_channel << ": " << attach_listen
              << " -> " << attach_upstream << ", " << faults.faults.size()
              << " entries armed; ctrl-c detaches\n";
    WaitForInterrupt();
    proxy.Stop();
    WriteOutput(attach_log, controller.LogAsJsonLines());
  });

  // --- target --------------------------------------------------------------
  CLI::App* target_cmd =
      app.add_subcommand("target", "The simulated service stack");
  target_cmd->require_subcommand(1);

  std::string target_topology;
  target::StackOptions target_options;
  target_options.runtime_dir = "target-runtime";
  CLI::App* target_run = target_cmd->add_subcommand(
      "run", "Boot the stack and keep it up until interrupted");
  target_run->add_option("topology", target_topology, "topology JSON")
      ->required();
  target_run->add_option("--robustness", target_options.profile,
                         "handler profile (mixed, fragile, graceful)");
  target_run->add_option("--seed", target_options.seed, "boot seed");
  target_run->add_option("--runtime", target_options.runtime_dir,
                         "runtime directory (sockets, logs, state)");
  target_run->callback([&] {
    target::StackHandle stack(target::LoadTopologyFile(target_topology),
                              target_options);
    stack.Start();
    for (const target::ProcessHealth& health : stack.Health()) {
      std::cout << health.name << " pid " << health.pid << " "
                << (health.responsive ? "ok" : "unresponsive") << "\n";
    }
    std::cout << "log: " << stack.log_path() << "\nctrl-c stops the stack\n"
              << std::flush;
    WaitForInterrupt();
    stack.Stop();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Stack children re-execute this binary; recognize them before anything
  // else runs.
  int child = sirfit::target::ChildEntryFromArgv(argc, argv);
  if (child >= 0) return child;
  try {
    return RunMain(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const HarnessError& e) {
    std::cerr << "harness error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

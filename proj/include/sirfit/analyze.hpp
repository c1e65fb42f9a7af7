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
// Log parsing, outcome classification, outcome distributions and the exact
// significance test used to compare them.

#ifndef SIRFIT_ANALYZE_HPP
#define SIRFIT_ANALYZE_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sirfit/logline.hpp"

namespace sirfit::analyze {

struct ParsedLog {
  std::vector<LogLine> lines;
  // (1-based line number, raw text) of lines that failed the grammar.
  std::vector<std::pair<size_t, std::string>> malformed;
};

ParsedLog ParseLog(const std::string& text);

// Ordered by severity: a later value is always a worse outcome.
enum class Outcome { kNoFailure = 0, kFatal = 1, kAnr = 2, kCrash = 3 };

const char* OutcomeName(Outcome o);
Outcome OutcomeFromName(const std::string& name);

// Matching rules, evaluated over every line:
//   crash  - message contains "FATAL EXCEPTION"
//   anr    - message matches "ANR in <name>"
//   fatal  - severity is A or F
// primary is the worst matched outcome; all_observed holds every matched
// kind.  A clean log yields kNoFailure with no evidence.
struct Classification {
  Outcome primary = Outcome::kNoFailure;
  std::set<Outcome> all_observed;
  std::vector<LogLine> evidence;
};

Classification Classify(const std::vector<LogLine>& lines);

bool MatchesAnrGrammar(const std::string& message);

// --- Outcome distributions -------------------------------------------------

struct RecordSummary {
  std::string plan_id;
  int repetition = 0;
  Outcome outcome = Outcome::kNoFailure;
  bool valid = true;
  // Free-form grouping labels attached by the campaign (for example
  // subsystem or robustness).
  std::map<std::string, std::string> labels;
};

struct DistributionRow {
  std::map<std::string, std::string> group;  // group key -> value
  std::map<Outcome, int64_t> counts;         // valid records only
  int64_t total = 0;
  int64_t invalid = 0;
  // Repetition-independence check: rows = repetitions, cols = outcomes.
  // NaN when fewer than two repetitions carry valid records.
  double fisher_p = 0.0;
  bool fisher_defined = false;
};

struct DistributionReport {
  std::vector<std::string> group_keys;
  std::vector<DistributionRow> rows;  // sorted by group values

  std::string ToCsv() const;
  std::string ToTable() const;  // aligned UTF-8 table
};

// Groups by the named label keys ("plan" resolves to the plan id).  An
// unknown key raises ConfigError naming it and listing the available keys.
DistributionReport Distribution(const std::vector<RecordSummary>& records,
                                const std::vector<std::string>& group_keys);

// --- Fisher's exact test ---------------------------------------------------

enum class FisherMethod { kExact, kMonteCarlo };

struct FisherResult {
  double p = 1.0;
  FisherMethod method = FisherMethod::kExact;
  // Monte Carlo only: standard error of the estimate.
  double standard_error = 0.0;
  // Exact only: number of margin-preserving tables enumerated.
  uint64_t tables = 0;
};

// Two-sided probability-mass criterion: sums the probabilities of all
// tables with the observed margins whose probability does not exceed the
// observed table's (with 1e-12 relative slack on the comparison).  Returns
// exactly 1.0 when every table qualifies.  Rejects negative entries and the
// all-zero table.
FisherResult FisherExact2x2(int64_t a, int64_t b, int64_t c, int64_t d);

struct FisherOptions {
  // Exact enumeration is used while the table count stays within budget.
  uint64_t enumeration_budget = 5'000'000;
  // Monte Carlo fallback: number of sampled tables and the seed.
  uint64_t mc_samples = 100'000;
  uint64_t mc_seed = 0x5f17;
};

FisherResult FisherExactRxC(const std::vector<std::vector<int64_t>>& table,
                            const FisherOptions& options = {});

}  // namespace sirfit::analyze

#endif  // SIRFIT_ANALYZE_HPP

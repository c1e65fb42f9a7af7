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

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "sirfit/analyze.hpp"
#include "sirfit/errors.hpp"

namespace sirfit::analyze {

namespace {

constexpr Outcome kAllOutcomes[] = {Outcome::kNoFailure, Outcome::kFatal,
                                    Outcome::kAnr, Outcome::kCrash};

std::string LookupKey(const RecordSummary& r, const std::string& key) {
  if (key == "plan") return r.plan_id;
  auto it = r.labels.find(key);
  if (it != r.labels.end()) return it->second;
  std::set<std::string> available{"plan"};
  for (const auto& [k, v] : r.labels) available.insert(k);
  std::string listed;
  for (const auto& k : available) {
    if (!listed.empty()) listed += ", ";
    listed += k;
  }
  throw ConfigError("unknown group key \"" + key + "\" (available: " + listed +
                    ")");
}

// Repetition-independence p-value: rows are repetitions, columns outcomes.
void FillFisher(DistributionRow& row,
                const std::vector<const RecordSummary*>& members) {
  std::map<int, std::map<Outcome, int64_t>> by_rep;
  for (const RecordSummary* r : members) {
    if (r->valid) ++by_rep[r->repetition][r->outcome];
  }
  if (by_rep.size() < 2) return;
  std::vector<std::vector<int64_t>> table;
  for (const auto& [rep, counts] : by_rep) {
    std::vector<int64_t> line;
    for (Outcome o : kAllOutcomes) {
      auto it = counts.find(o);
      line.push_back(it == counts.end() ? 0 : it->second);
    }
    table.push_back(std::move(line));
  }
  row.fisher_p = FisherExactRxC(table).p;
  row.fisher_defined = true;
}

std::string FormatP(const DistributionRow& row) {
  if (!row.fisher_defined) return "-";
  std::ostringstream os;
  os << std::setprecision(6) << row.fisher_p;
  return os.str();
}

}  // namespace

DistributionReport Distribution(const std::vector<RecordSummary>& records,
                                const std::vector<std::string>& group_keys) {
  // Keyed map keeps the rows sorted by their group values.
  std::map<std::vector<std::string>, std::vector<const RecordSummary*>> groups;
  for (const RecordSummary& r : records) {
    std::vector<std::string> key;
    key.reserve(group_keys.size());
    for (const std::string& k : group_keys) {
      key.push_back(LookupKey(r, k));
    }
    groups[std::move(key)].push_back(&r);
  }

  DistributionReport report;
  report.group_keys = group_keys;
  for (const auto& [key, members] : groups) {
    DistributionRow row;
    for (size_t i = 0; i < group_keys.size(); ++i) {
      row.group[group_keys[i]] = key[i];
    }
    for (Outcome o : kAllOutcomes) row.counts[o] = 0;
    for (const RecordSummary* r : members) {
      if (!r->valid) {
        ++row.invalid;
        continue;
      }
      ++row.counts[r->outcome];
      ++row.total;
    }
    FillFisher(row, members);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string DistributionReport::ToCsv() const {
  std::ostringstream os;
  for (const auto& k : group_keys) os << k << ',';
  os << "no_failure,fatal,anr,crash,total,invalid,fisher_p\n";
  for (const DistributionRow& row : rows) {
    for (const auto& k : group_keys) os << row.group.at(k) << ',';
    for (Outcome o : kAllOutcomes) os << row.counts.at(o) << ',';
    os << row.total << ',' << row.invalid << ',' << FormatP(row) << '\n';
  }
  return os.str();
}

std::string DistributionReport::ToTable() const {
  std::vector<std::string> headers;
  for (const auto& k : group_keys) headers.push_back(k);
  for (Outcome o : kAllOutcomes) headers.push_back(OutcomeName(o));
  headers.push_back("total");
  headers.push_back("invalid");
  headers.push_back("fisher_p");

  std::vector<std::vector<std::string>> cells;
  for (const DistributionRow& row : rows) {
    std::vector<std::string> line;
    for (const auto& k : group_keys) line.push_back(row.group.at(k));
    for (Outcome o : kAllOutcomes)
      line.push_back(std::to_string(row.counts.at(o)));
    line.push_back(std::to_string(row.total));
    line.push_back(std::to_string(row.invalid));
    line.push_back(FormatP(row));
    cells.push_back(std::move(line));
  }

  std::vector<size_t> widths(headers.size());
  for (size_t i = 0; i < headers.size(); ++i) widths[i] = headers[i].size();
  for (const auto& line : cells) {
    for (size_t i = 0; i < line.size(); ++i) {
      widths[i] = std::max(widths[i], line[i].size());
    }
  }

  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& line) {
    for (size_t i = 0; i < line.size(); ++i) {
      os << (i ? "  " : "") << std::left << std::setw(static_cast<int>(widths[i]))
         << line[i];
    }
    os << '\n';
  };
  emit(headers);
  std::vector<std::string> rule;
  for (size_t w : widths) rule.push_back(std::string(w, '-'));
  emit(rule);
  for (const auto& line : cells) emit(line);
  return os.str();
}

}  // namespace sirfit::analyze

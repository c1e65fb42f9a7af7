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

#include <sstream>

#include "sirfit/analyze.hpp"
#include "sirfit/errors.hpp"

namespace sirfit::analyze {

ParsedLog ParseLog(const std::string& text) {
  ParsedLog out;
  size_t line_no = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    size_t len = (end == std::string::npos ? text.size() : end) - start;
    std::string line = text.substr(start, len);
    bool last = end == std::string::npos;
    start = last ? text.size() + 1 : end + 1;
    if (last && line.empty()) break;  // no trailing record after final \n
    ++line_no;
    if (auto parsed = ParseLogLine(line)) {
      out.lines.push_back(std::move(*parsed));
    } else {
      out.malformed.emplace_back(line_no, std::move(line));
    }
  }
  return out;
}

const char* OutcomeName(Outcome o) {
  switch (o) {
    case Outcome::kNoFailure:
      return "no-failure";
    case Outcome::kFatal:
      return "fatal";
    case Outcome::kAnr:
      return "anr";
    case Outcome::kCrash:
      return "crash";
  }
  return "?";
}

Outcome OutcomeFromName(const std::string& name) {
  if (name == "no-failure") return Outcome::kNoFailure;
  if (name == "fatal") return Outcome::kFatal;
  if (name == "anr") return Outcome::kAnr;
  if (name == "crash") return Outcome::kCrash;
  throw ConfigError("unknown outcome \"" + name + "\"");
}

bool MatchesAnrGrammar(const std::string& message) {
  static constexpr char kPrefix[] = "ANR in ";
  static constexpr size_t kPrefixLen = sizeof(kPrefix) - 1;
  if (message.compare(0, kPrefixLen, kPrefix) != 0) return false;
  // A nonempty name token must follow the prefix.
  return message.size() > kPrefixLen && message[kPrefixLen] != ' ';
}

Classification Classify(const std::vector<LogLine>& lines) {
  Classification result;
  for (const LogLine& line : lines) {
    bool matched = false;
    if (line.message.find("FATAL EXCEPTION") != std::string::npos) {
      result.all_observed.insert(Outcome::kCrash);
      matched = true;
    }
    if (MatchesAnrGrammar(line.message)) {
      result.all_observed.insert(Outcome::kAnr);
      matched = true;
    }
    if (line.severity == Severity::kAssert || line.severity == Severity::kFatal) {
      result.all_observed.insert(Outcome::kFatal);
      matched = true;
    }
    if (matched) result.evidence.push_back(line);
  }
  if (!result.all_observed.empty()) {
    result.primary = *result.all_observed.rbegin();  // worst outcome wins
  }
  return result;
}

}  // namespace sirfit::analyze

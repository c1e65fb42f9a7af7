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
// Log stream format shared by the simulated processes and the analyzer:
//
//   <epoch-ms> <pid> <tid> <severity> <tag>: <message>
//
// severity is one of V D I W E A F; tag matches [A-Za-z0-9_.-]+; the message
// runs to the end of the line and may be empty.  One line per record; the
// message must not contain line breaks.

#ifndef SIRFIT_LOGLINE_HPP
#define SIRFIT_LOGLINE_HPP

#include <cstdint>
#include <optional>
#include <string>

namespace sirfit {

enum class Severity : char {
  kVerbose = 'V',
  kDebug = 'D',
  kInfo = 'I',
  kWarn = 'W',
  kError = 'E',
  kAssert = 'A',
  kFatal = 'F',
};

bool IsSeverityChar(char c);

struct LogLine {
  int64_t epoch_ms = 0;
  int32_t pid = 0;
  int32_t tid = 0;
  Severity severity = Severity::kInfo;
  std::string tag;
  std::string message;

  bool operator==(const LogLine& other) const = default;
};

std::string FormatLogLine(const LogLine& line);

// One line, without the trailing newline.  nullopt when the line does not
// match the grammar.
std::optional<LogLine> ParseLogLine(const std::string& line);

// Appends formatted lines to a shared file opened O_APPEND, so writers in
// separate processes interleave whole lines.  Thread-safe.
class LogWriter {
 public:
  LogWriter(std::string path, int32_t pid);
  ~LogWriter();

  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  void Write(Severity severity, const std::string& tag,
             const std::string& message);

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  int32_t pid_;
  int fd_;
};

int32_t CurrentTid();
int64_t NowEpochMs();

}  // namespace sirfit

#endif  // SIRFIT_LOGLINE_HPP

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

#include "sirfit/logline.hpp"

#include <fcntl.h>
#include <sys/syscall.h>
#include <unistd.h>

#include <cctype>
#include <chrono>
#include <cstring>
#include <sstream>

#include "sirfit/errors.hpp"

namespace sirfit {

bool IsSeverityChar(char c) {
  return std::strchr("VDIWEAF", c) != nullptr;
}

namespace {

bool IsTagChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' ||
         c == '-';
}

// Parses a nonnegative decimal span; returns false when empty or non-digit.
bool TakeNumber(const std::string& s, size_t& pos, int64_t& out) {
  size_t start = pos;
  int64_t value = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    value = value * 10 + (s[pos] - '0');
    ++pos;
  }
  if (pos == start || value < 0) return false;
  out = value;
  return true;
}

}  // namespace

std::string FormatLogLine(const LogLine& line) {
  std::ostringstream os;
  os << line.epoch_ms << ' ' << line.pid << ' ' << line.tid << ' '
     << static_cast<char>(line.severity) << ' ' << line.tag << ": "
     << line.message;
  return os.str();
}

std::optional<LogLine> ParseLogLine(const std::string& s) {
  LogLine line;
  size_t pos = 0;
  int64_t value = 0;

  if (!TakeNumber(s, pos, value)) return std::nullopt;
  line.epoch_ms = value;
  if (pos >= s.size() || s[pos++] != ' ') return std::nullopt;

  if (!TakeNumber(s, pos, value) || value > INT32_MAX) return std::nullopt;
  line.pid = static_cast<int32_t>(value);
  if (pos >= s.size() || s[pos++] != ' ') return std::nullopt;

  if (!TakeNumber(s, pos, value) || value > INT32_MAX) return std::nullopt;
  line.tid = static_cast<int32_t>(value);
  if (pos >= s.size() || s[pos++] != ' ') return std::nullopt;

  if (pos >= s.size() || !IsSeverityChar(s[pos])) return std::nullopt;
  line.severity = static_cast<Severity>(s[pos++]);
  if (pos >= s.size() || s[pos++] != ' ') return std::nullopt;

  size_t tag_start = pos;
  while (pos < s.size() && IsTagChar(s[pos])) ++pos;
  if (pos == tag_start) return std::nullopt;
  line.tag = s.substr(tag_start, pos - tag_start);

  // The separator is always ": ", even for an empty message.
  if (pos + 1 >= s.size() || s[pos] != ':' || s[pos + 1] != ' ') {
    return std::nullopt;
  }
  line.message = s.substr(pos + 2);
  return line;
}

LogWriter::LogWriter(std::string path, int32_t pid)
    : path_(std::move(path)), pid_(pid) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw HarnessError("cannot open log file " + path_ + ": " +
                       std::strerror(errno));
  }
}

LogWriter::~LogWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void LogWriter::Write(Severity severity, const std::string& tag,
                      const std::string& message) {
  LogLine line{NowEpochMs(), pid_, CurrentTid(), severity, tag, message};
  std::string text = FormatLogLine(line);
  text.push_back('\n');
  // A single write keeps the line intact across concurrent writers.
  ssize_t n = ::write(fd_, text.data(), text.size());
  (void)n;
}

int32_t CurrentTid() {
  return static_cast<int32_t>(::syscall(SYS_gettid));
}

int64_t NowEpochMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace sirfit

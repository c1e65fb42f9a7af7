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
// Stack child processes are spawned by re-executing the current binary with
// "--sirfit-child <config>".  Every executable that can host a stack calls
// ChildEntryFromArgv first thing in main().

#include <cstdio>
#include <cstring>
#include <exception>
#include <string>

namespace sirfit::target {

int RunChildProcess(const std::string& config_path);

// Returns -1 when this invocation is not a stack child; otherwise runs the
// child to completion and returns its exit code.
int ChildEntryFromArgv(int argc, char** argv) {
  if (argc < 2 || std::strcmp(argv[1], "--sirfit-child") != 0) return -1;
  if (argc < 3) {
    std::fprintf(stderr, "--sirfit-child requires a config path\n");
    return 3;
  }
  try {
    return RunChildProcess(argv[2]);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stack child failed: %s\n", e.what());
    return 3;
  }
}

}  // namespace sirfit::target

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

#ifndef SIRFIT_ERRORS_HPP
#define SIRFIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sirfit {

// Bad input the user can fix: malformed config files, schema violations,
// out-of-range options.  CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A contract violation detected while validating in-memory data that did not
// come straight from a file (bad arguments, inapplicable corruption pattern).
class InvalidArgumentError : public std::runtime_error {
 public:
  explicit InvalidArgumentError(const std::string& what)
      : std::runtime_error(what) {}
};

// The harness itself failed: socket errors, spawn failures, I/O trouble.
// Target failures are never reported this way; they are experiment data.
// CLI maps this to exit code 1.
class HarnessError : public std::runtime_error {
 public:
  explicit HarnessError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sirfit

#endif  // SIRFIT_ERRORS_HPP

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
// Deterministic value corruption.  Every pattern is a pure function of
// (input, pattern, rng state); repeated runs with the same seed produce the
// same corrupted output.
//
// Applicability (corrupt() throws InvalidArgumentError outside this table):
//
//   int32/int64/float64  zero, off-by-one, off-by-offset, negate, max, min,
//                        random-value
//   bool                 zero, negate, max, min, random-value
//   string               null-string, substring-replace, truncate,
//                        categorical-replace
//   blob                 bit-flip, truncate, struct-field (blob must decode
//                        as a transaction frame)
//
// Output differs from input except for documented degenerate coincidences:
// zero of 0, max of the maximum, min of the minimum, negate of 0 and of the
// two's-complement minimum, off-by-one/off-by-offset past float precision,
// truncate/null-string/substring-replace of an empty string, bit-flip of an
// empty blob, categorical-replace against a single-entry domain equal to the
// input.  random-value redraws until the result differs.

#ifndef SIRFIT_CORRUPT_HPP
#define SIRFIT_CORRUPT_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sirfit/rng.hpp"
#include "sirfit/wire.hpp"

namespace sirfit::corrupt {

enum class PatternKind {
  kCategoricalReplace,
  kZero,
  kOffByOne,
  kOffByOffset,
  kNegate,
  kMax,
  kMin,
  kRandomValue,
  kNullString,
  kSubstringReplace,
  kTruncate,
  kBitFlip,
  kStructField,
};

const char* PatternKindName(PatternKind kind);
// Throws ConfigError for unknown names.
PatternKind PatternKindFromName(const std::string& name);

struct Pattern {
  PatternKind kind = PatternKind::kRandomValue;
  // categorical-replace: replacement domain, at least one entry.
  std::vector<std::string> domain;
  // off-by-offset: added to the value.
  int64_t offset = 16;
  // struct-field: where and how to corrupt inside the nested frame.
  // Both set iff kind == kStructField.
  std::shared_ptr<struct Selector> struct_selector;
  std::shared_ptr<Pattern> inner;

  static Pattern Of(PatternKind kind) { return Pattern{kind, {}, 16, {}, {}}; }
};

// Names the part of a transaction a corruption applies to.  The frame code
// and flags are only touched when addressed explicitly.
struct Selector {
  enum class Kind { kAll, kTag, kCode, kFlags };
  Kind kind = Kind::kAll;
  uint16_t tag = 0;

  static Selector All() { return {}; }
  static Selector Tag(uint16_t tag) { return {Kind::kTag, tag}; }
  static Selector Code() { return {Kind::kCode, 0}; }
  static Selector Flags() { return {Kind::kFlags, 0}; }
};

// Single-value corruption.  Throws InvalidArgumentError when the pattern
// does not apply to the value's kind.
wire::FieldValue Corrupt(const wire::FieldValue& value, const Pattern& pattern,
                         Rng& rng);

// Applies `pattern` to every field selected by `selector`.  With
// Selector::All() the pattern must apply to every field.  Selecting a tag
// that is absent is an error.  The result always re-encodes.
wire::Transaction CorruptTransaction(const wire::Transaction& t,
                                     const Selector& selector,
                                     const Pattern& pattern, Rng& rng);

// Per-kind default corruption used when a fault entry names no explicit
// pattern: numeric and float fields get random-value, bool gets negate,
// strings get truncate, blobs get bit-flip.
wire::FieldValue CorruptAuto(const wire::FieldValue& value, Rng& rng);
wire::Transaction CorruptTransactionAuto(const wire::Transaction& t,
                                         const Selector& selector, Rng& rng);

// Modem-line corruption.  The selected part ("code", a parameter index, or
// everything) is corrupted with a string pattern and the line re-rendered
// without grammar validation, so the result stays deliverable even when it
// no longer parses (an emptied event code is the classic case).
// Unparseable input gets a single character substituted.
struct AtSelector {
  enum class Kind { kAll, kCode, kParam };
  Kind kind = Kind::kAll;
  size_t param_index = 0;
};

std::string CorruptAtLine(const std::string& line, const AtSelector& selector,
                          const Pattern& pattern, Rng& rng);

}  // namespace sirfit::corrupt

#endif  // SIRFIT_CORRUPT_HPP

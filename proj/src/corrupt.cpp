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

#include "sirfit/corrupt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "sirfit/errors.hpp"

namespace sirfit::corrupt {

namespace {

using wire::FieldKind;
using wire::FieldValue;

[[noreturn]] void Inapplicable(PatternKind pattern, FieldKind kind) {
  throw InvalidArgumentError(std::string(PatternKindName(pattern)) +
                             " does not apply to a " +
                             wire::FieldKindName(kind) + " value");
}

// Distinct printable replacement alphabet for substring substitution.
constexpr char kAlphabet[] =
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
constexpr size_t kAlphabetSize = sizeof(kAlphabet) - 1;

// Offsets of the code point starts in a valid UTF-8 string.
std::vector<size_t> CodePointStarts(const std::string& s) {
  std::vector<size_t> starts;
  for (size_t i = 0; i < s.size();) {
    starts.push_back(i);
    unsigned char b = s[i];
    if (b < 0x80) {
      i += 1;
    } else if ((b & 0xe0) == 0xc0) {
      i += 2;
    } else if ((b & 0xf0) == 0xe0) {
      i += 3;
    } else {
      i += 4;
    }
  }
  return starts;
}

std::string TruncateString(const std::string& s) {
  auto starts = CodePointStarts(s);
  size_t keep = starts.size() / 2;
  if (keep == 0) return "";
  return s.substr(0, keep < starts.size() ? starts[keep] : s.size());
}

std::string SubstituteChar(const std::string& s, Rng& rng) {
  if (s.empty()) return s;  // degenerate: nothing to substitute
  auto starts = CodePointStarts(s);
  size_t idx = rng.NextBelow(starts.size());
  size_t begin = starts[idx];
  size_t end = idx + 1 < starts.size() ? starts[idx + 1] : s.size();
  char replacement;
  do {
    replacement = kAlphabet[rng.NextBelow(kAlphabetSize)];
  } while (end - begin == 1 && replacement == s[begin]);
  std::string out = s.substr(0, begin);
  out.push_back(replacement);
  out += s.substr(end);
  return out;
}

std::string ReplaceFromDomain(const std::string& value,
                              const std::vector<std::string>& domain,
                              Rng& rng) {
  if (domain.empty()) {
    throw InvalidArgumentError("categorical-replace requires a domain");
  }
  std::vector<const std::string*> candidates;
  for (const std::string& d : domain) {
    if (d != value) candidates.push_back(&d);
  }
  if (candidates.empty()) return domain.front();  // degenerate single entry
  return *candidates[rng.NextBelow(candidates.size())];
}

template <typename T>
T RandomIntegerOtherThan(T value, Rng& rng) {
  for (;;) {
    T draw = static_cast<T>(rng.Next());
    if (draw != value) return draw;
  }
}

double RandomDoubleOtherThan(double value, Rng& rng) {
  for (;;) {
    // Finite, spans roughly +/-2^53 with sub-integer granularity.
    double draw = std::ldexp(static_cast<double>(
                                 static_cast<int64_t>(rng.Next())),
                             -10);
    if (draw != value) return draw;
  }
}

std::vector<uint8_t> FlipBits(std::vector<uint8_t> bytes, Rng& rng) {
  if (bytes.empty()) return bytes;  // degenerate
  size_t total_bits = bytes.size() * 8;
  size_t flips = (bytes.size() + 63) / 64;
  std::set<size_t> positions;
  while (positions.size() < flips) {
    positions.insert(rng.NextBelow(total_bits));
  }
  for (size_t bit : positions) {
    bytes[bit / 8] ^= static_cast<uint8_t>(1u << (bit % 8));
  }
  return bytes;
}

template <typename T>
FieldValue CorruptInteger(T value, const Pattern& p, Rng& rng) {
  using U = std::make_unsigned_t<T>;
  switch (p.kind) {
    case PatternKind::kZero:
      return static_cast<T>(0);
    case PatternKind::kOffByOne:
      return static_cast<T>(static_cast<U>(value) + 1u);
    case PatternKind::kOffByOffset:
      return static_cast<T>(static_cast<U>(value) + static_cast<U>(p.offset));
    case PatternKind::kNegate:
      return static_cast<T>(0u - static_cast<U>(value));
    case PatternKind::kMax:
      return std::numeric_limits<T>::max();
    case PatternKind::kMin:
      return std::numeric_limits<T>::min();
    case PatternKind::kRandomValue:
      return RandomIntegerOtherThan<T>(value, rng);
    default:
      Inapplicable(p.kind, wire::KindOf(FieldValue(value)));
  }
}

FieldValue CorruptFloat(double value, const Pattern& p, Rng& rng) {
  switch (p.kind) {
    case PatternKind::kZero:
      return 0.0;
    case PatternKind::kOffByOne:
      return value + 1.0;
    case PatternKind::kOffByOffset:
      return value + static_cast<double>(p.offset);
    case PatternKind::kNegate:
      return -value;
    case PatternKind::kMax:
      return std::numeric_limits<double>::max();
    case PatternKind::kMin:
      return std::numeric_limits<double>::lowest();
    case PatternKind::kRandomValue:
      return RandomDoubleOtherThan(value, rng);
    default:
      Inapplicable(p.kind, FieldKind::kFloat64);
  }
}

FieldValue CorruptBool(bool value, const Pattern& p, Rng& rng) {
  switch (p.kind) {
    case PatternKind::kZero:
      return false;
    case PatternKind::kNegate:
      return !value;
    case PatternKind::kMax:
      return true;
    case PatternKind::kMin:
      return false;
    case PatternKind::kRandomValue:
      (void)rng.Next();  // keep stream position uniform across kinds
      return !value;
    default:
      Inapplicable(p.kind, FieldKind::kBool);
  }
}

FieldValue CorruptString(const std::string& value, const Pattern& p,
                         Rng& rng) {
  switch (p.kind) {
    case PatternKind::kNullString:
      return std::string();
    case PatternKind::kSubstringReplace:
      return SubstituteChar(value, rng);
    case PatternKind::kTruncate:
      return TruncateString(value);
    case PatternKind::kCategoricalReplace:
      return ReplaceFromDomain(value, p.domain, rng);
    default:
      Inapplicable(p.kind, FieldKind::kUtf8String);
  }
}

FieldValue CorruptBlob(const std::vector<uint8_t>& value, const Pattern& p,
                       Rng& rng) {
  switch (p.kind) {
    case PatternKind::kBitFlip:
      return FlipBits(value, rng);
    case PatternKind::kTruncate:
      return std::vector<uint8_t>(value.begin(),
                                  value.begin() + value.size() / 2);
    case PatternKind::kStructField: {
      if (!p.struct_selector || !p.inner) {
        throw InvalidArgumentError("struct-field pattern missing selector");
      }
      auto decoded = wire::Decode(value);
      if (std::holds_alternative<wire::DecodeError>(decoded)) {
        throw InvalidArgumentError(
            "struct-field corruption needs a decodable frame: " +
            std::get<wire::DecodeError>(decoded).ToString());
      }
      wire::Transaction inner = CorruptTransaction(
          std::get<wire::Transaction>(decoded), *p.struct_selector, *p.inner,
          rng);
      return wire::Encode(inner);
    }
    default:
      Inapplicable(p.kind, FieldKind::kBlob);
  }
}

uint32_t CorruptU32(uint32_t value, const Pattern& p, Rng& rng) {
  switch (p.kind) {
    case PatternKind::kZero:
      return 0;
    case PatternKind::kOffByOne:
      return value + 1u;
    case PatternKind::kOffByOffset:
      return value + static_cast<uint32_t>(p.offset);
    case PatternKind::kNegate:
      return 0u - value;
    case PatternKind::kMax:
      return std::numeric_limits<uint32_t>::max();
    case PatternKind::kMin:
      return 0;
    case PatternKind::kRandomValue:
      return RandomIntegerOtherThan<uint32_t>(value, rng);
    default:
      throw InvalidArgumentError(
          std::string(PatternKindName(p.kind)) +
          " does not apply to the frame code or flags");
  }
}

}  // namespace

const char* PatternKindName(PatternKind kind) {
  switch (kind) {
    case PatternKind::kCategoricalReplace:
      return "categorical-replace";
    case PatternKind::kZero:
      return "zero";
    case PatternKind::kOffByOne:
      return "off-by-one";
    case PatternKind::kOffByOffset:
      return "off-by-offset";
    case PatternKind::kNegate:
      return "negate";
    case PatternKind::kMax:
      return "max";
    case PatternKind::kMin:
      return "min";
    case PatternKind::kRandomValue:
      return "random-value";
    case PatternKind::kNullString:
      return "null-string";
    case PatternKind::kSubstringReplace:
      return "substring-replace";
    case PatternKind::kTruncate:
      return "truncate";
    case PatternKind::kBitFlip:
      return "bit-flip";
    case PatternKind::kStructField:
      return "struct-field";
  }
  return "?";
}

PatternKind PatternKindFromName(const std::string& name) {
  static const std::pair<const char*, PatternKind> kNames[] = {
      {"categorical-replace", PatternKind::kCategoricalReplace},
      {"zero", PatternKind::kZero},
      {"off-by-one", PatternKind::kOffByOne},
      {"off-by-offset", PatternKind::kOffByOffset},
      {"negate", PatternKind::kNegate},
      {"max", PatternKind::kMax},
      {"min", PatternKind::kMin},
      {"random-value", PatternKind::kRandomValue},
      {"null-string", PatternKind::kNullString},
      {"substring-replace", PatternKind::kSubstringReplace},
      {"truncate", PatternKind::kTruncate},
      {"bit-flip", PatternKind::kBitFlip},
      {"struct-field", PatternKind::kStructField},
  };
  for (const auto& [n, k] : kNames) {
    if (name == n) return k;
  }
  throw ConfigError("unknown corruption pattern \"" + name + "\"");
}

wire::FieldValue Corrupt(const wire::FieldValue& value, const Pattern& pattern,
                         Rng& rng) {
  switch (wire::KindOf(value)) {
    case FieldKind::kInt32:
      return CorruptInteger<int32_t>(std::get<int32_t>(value), pattern, rng);
    case FieldKind::kInt64:
      return CorruptInteger<int64_t>(std::get<int64_t>(value), pattern, rng);
    case FieldKind::kBool:
      return CorruptBool(std::get<bool>(value), pattern, rng);
    case FieldKind::kFloat64:
      return CorruptFloat(std::get<double>(value), pattern, rng);
    case FieldKind::kUtf8String:
      return CorruptString(std::get<std::string>(value), pattern, rng);
    case FieldKind::kBlob:
      return CorruptBlob(std::get<std::vector<uint8_t>>(value), pattern, rng);
  }
  throw InvalidArgumentError("unreachable field kind");
}

wire::FieldValue CorruptAuto(const wire::FieldValue& value, Rng& rng) {
  switch (wire::KindOf(value)) {
    case FieldKind::kInt32:
    case FieldKind::kInt64:
    case FieldKind::kFloat64:
      return Corrupt(value, Pattern::Of(PatternKind::kRandomValue), rng);
    case FieldKind::kBool:
      return Corrupt(value, Pattern::Of(PatternKind::kNegate), rng);
    case FieldKind::kUtf8String:
      return Corrupt(value, Pattern::Of(PatternKind::kTruncate), rng);
    case FieldKind::kBlob:
      return Corrupt(value, Pattern::Of(PatternKind::kBitFlip), rng);
  }
  throw InvalidArgumentError("unreachable field kind");
}

namespace {

template <typename FieldFn>
wire::Transaction CorruptWith(const wire::Transaction& t,
                              const Selector& selector, FieldFn&& fn,
                              const Pattern* pattern, Rng& rng) {
  wire::Transaction out = t;
  switch (selector.kind) {
    case Selector::Kind::kAll:
      for (wire::Field& f : out.fields) {
        f.value = fn(f.value);
      }
      return out;
    case Selector::Kind::kTag: {
      wire::Field* f = out.FindField(selector.tag);
      if (!f) {
        throw InvalidArgumentError("transaction has no field with tag " +
                                   std::to_string(selector.tag));
      }
      f->value = fn(f->value);
      return out;
    }
    case Selector::Kind::kCode:
      out.code = CorruptU32(out.code,
                            pattern ? *pattern
                                    : Pattern::Of(PatternKind::kRandomValue),
                            rng);
      return out;
    case Selector::Kind::kFlags:
      out.flags = static_cast<uint8_t>(CorruptU32(
          out.flags,
          pattern ? *pattern : Pattern::Of(PatternKind::kRandomValue), rng));
      return out;
  }
  throw InvalidArgumentError("unreachable selector kind");
}

}  // namespace

wire::Transaction CorruptTransaction(const wire::Transaction& t,
                                     const Selector& selector,
                                     const Pattern& pattern, Rng& rng) {
  return CorruptWith(
      t, selector,
      [&](const FieldValue& v) { return Corrupt(v, pattern, rng); }, &pattern,
      rng);
}

wire::Transaction CorruptTransactionAuto(const wire::Transaction& t,
                                         const Selector& selector, Rng& rng) {
  return CorruptWith(
      t, selector, [&](const FieldValue& v) { return CorruptAuto(v, rng); },
      nullptr, rng);
}

std::string CorruptAtLine(const std::string& line, const AtSelector& selector,
                          const Pattern& pattern, Rng& rng) {
  auto decoded = wire::DecodeAt(line);
  if (std::holds_alternative<wire::AtError>(decoded)) {
    return SubstituteChar(line, rng);
  }
  wire::AtMessage m = std::get<wire::AtMessage>(decoded);

  auto corrupt_part = [&](std::string& part) {
    part = std::get<std::string>(Corrupt(FieldValue(part), pattern, rng));
  };

  switch (selector.kind) {
    case AtSelector::Kind::kCode:
      corrupt_part(m.code);
      break;
    case AtSelector::Kind::kParam:
      if (selector.param_index >= m.params.size()) {
        throw InvalidArgumentError("message \"" + line + "\" has no parameter " +
                                   std::to_string(selector.param_index));
      }
      corrupt_part(m.params[selector.param_index]);
      break;
    case AtSelector::Kind::kAll:
      corrupt_part(m.code);
      for (std::string& p : m.params) corrupt_part(p);
      break;
  }

  // Lenient rendering: the corrupted message must stay deliverable even if
  // it no longer satisfies the grammar.
  std::string out;
  if (m.kind == wire::AtKind::kCommand) {
    out = "AT" + m.code;
    if (!m.params.empty()) out += "=";
  } else {
    out = m.code;
    if (!m.params.empty()) out += ":";
  }
  for (size_t i = 0; i < m.params.size(); ++i) {
    if (i) out += ',';
    out += m.params[i];
  }
  return out;
}

}  // namespace sirfit::corrupt

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
// Binary transaction frames exchanged between simulated services, plus the
// text protocol spoken on the modem channel.
//
// Frame layout (docs/formats.md documents it field by field):
//
//   magic   4 bytes   0x53 0x49 0x52 0x46 ("SIRF", stored big-endian)
//   version 1 byte    0x01
//   code    4 bytes   little-endian u32
//   flags   1 byte
//   count   2 bytes   little-endian u16, number of fields
//   fields  count times:
//     tag     2 bytes   little-endian u16, unique within the frame
//     kind    1 byte
//     length  4 bytes   little-endian u32, payload byte count
//     payload length bytes
//
// There is deliberately no checksum: corrupted frames must still travel.

#ifndef SIRFIT_WIRE_HPP
#define SIRFIT_WIRE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace sirfit::wire {

inline constexpr uint8_t kMagic[4] = {0x53, 0x49, 0x52, 0x46};
inline constexpr uint8_t kVersion = 0x01;
inline constexpr size_t kHeaderSize = 12;
inline constexpr size_t kMaxFields = 1024;
inline constexpr size_t kMaxBlobBytes = 1u << 20;

enum class FieldKind : uint8_t {
  kInt32 = 1,
  kInt64 = 2,
  kBool = 3,
  kFloat64 = 4,
  kUtf8String = 5,
  kBlob = 6,
};

const char* FieldKindName(FieldKind kind);

using FieldValue = std::variant<int32_t, int64_t, bool, double, std::string,
                                std::vector<uint8_t>>;

FieldKind KindOf(const FieldValue& value);

struct Field {
  uint16_t tag = 0;
  FieldValue value;

  bool operator==(const Field& other) const = default;
};

struct Transaction {
  uint32_t code = 0;
  uint8_t flags = 0;
  std::vector<Field> fields;

  bool operator==(const Transaction& other) const = default;

  const Field* FindField(uint16_t tag) const;
  Field* FindField(uint16_t tag);
};

enum class DecodeCause {
  kTruncated,
  kBadMagic,
  kBadVersion,
  kFieldCountOverflow,
  kUnknownKind,
  kBadLength,
  kDuplicateTag,
  kInvalidBool,
  kInvalidUtf8,
  kTrailingData,
};

const char* DecodeCauseName(DecodeCause cause);

struct DecodeError {
  DecodeCause cause;
  size_t offset = 0;  // byte offset where decoding failed
  std::string detail;

  std::string ToString() const;
};

using DecodeResult = std::variant<Transaction, DecodeError>;

// Throws InvalidArgumentError when the transaction violates a frame
// invariant (too many fields, duplicate tags, oversized blob, invalid
// UTF-8 in a string field).
std::vector<uint8_t> Encode(const Transaction& t);

// Total: any byte string yields either a Transaction or a DecodeError.
// Never throws, never aborts.  The whole input must be consumed.
DecodeResult Decode(const uint8_t* data, size_t size);
DecodeResult Decode(const std::vector<uint8_t>& bytes);

bool IsValidUtf8(const uint8_t* data, size_t size);
inline bool IsValidUtf8(const std::string& s) {
  return IsValidUtf8(reinterpret_cast<const uint8_t*>(s.data()), s.size());
}

// --- Broadcast message layer -----------------------------------------------
//
// Higher-level messages (system broadcasts like battery or connectivity
// changes) ride inside ordinary transactions under a fixed field mapping,
// so the generic corruption engine can reach their named parts:
//
//   tag 1        action      Utf8String, required, nonempty
//   tag 2        category    Utf8String, omitted when empty
//   tag 3        class       Utf8String, omitted when empty
//   tag 4        data_uri    Utf8String, omitted when empty
//   tag 16+2i    extras key i    Utf8String, keys sorted, unique, nonempty
//   tag 17+2i    extras value i  Utf8String

inline constexpr uint32_t kIntentCode = 0x49;
inline constexpr uint16_t kIntentActionTag = 1;
inline constexpr uint16_t kIntentCategoryTag = 2;
inline constexpr uint16_t kIntentClassTag = 3;
inline constexpr uint16_t kIntentDataUriTag = 4;
inline constexpr uint16_t kIntentExtrasBaseTag = 16;

struct IntentMessage {
  std::string action;
  std::string category;
  std::string class_name;
  std::string data_uri;
  std::map<std::string, std::string> extras;

  bool operator==(const IntentMessage& other) const = default;
};

struct IntentError {
  std::string detail;
};

using IntentResult = std::variant<IntentMessage, IntentError>;

// Throws InvalidArgumentError when action is empty or an extras key is
// empty.  The returned transaction has code kIntentCode and flags 0.
Transaction EncodeIntent(const IntentMessage& m);

// Total over arbitrary transactions: corrupted frames come back as a
// typed error, never an exception.  The transaction code is not checked
// so that rerouted messages still decode.
IntentResult DecodeIntent(const Transaction& t);

// --- Modem text protocol ---------------------------------------------------
//
// Line grammar (one message per line, no spaces):
//   command  = "AT" code ["=" params]
//   event    = code [":" params]   ; response when code is OK or ERROR
//   code     = ("+" | ALPHA) *(ALPHA | DIGIT | "+")
//   params   = param *("," param)
//   param    = *(any char except "," CR LF)

enum class AtKind { kCommand, kResponse, kEvent };

struct AtMessage {
  AtKind kind = AtKind::kEvent;
  std::string code;
  std::vector<std::string> params;

  bool operator==(const AtMessage& other) const = default;
};

struct AtError {
  std::string detail;
};

using AtResult = std::variant<AtMessage, AtError>;

// Throws InvalidArgumentError on messages that cannot round-trip (empty
// code, params containing separators, events named like responses).
std::string EncodeAt(const AtMessage& m);

// Total over arbitrary line content (line must not contain CR or LF).
AtResult DecodeAt(const std::string& line);

}  // namespace sirfit::wire

#endif  // SIRFIT_WIRE_HPP

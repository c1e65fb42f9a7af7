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

#include "sirfit/wire.hpp"

#include <cctype>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "sirfit/errors.hpp"

namespace sirfit::wire {

namespace {

void PutU16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void PutU32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
}

void PutU64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
}

uint16_t GetU16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint32_t GetU32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint64_t GetU64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | p[i];
  }
  return v;
}

}  // namespace

const char* FieldKindName(FieldKind kind) {
  switch (kind) {
    case FieldKind::kInt32:
      return "int32";
    case FieldKind::kInt64:
      return "int64";
    case FieldKind::kBool:
      return "bool";
    case FieldKind::kFloat64:
      return "float64";
    case FieldKind::kUtf8String:
      return "string";
    case FieldKind::kBlob:
      return "blob";
  }
  return "?";
}

FieldKind KindOf(const FieldValue& value) {
  switch (value.index()) {
    case 0:
      return FieldKind::kInt32;
    case 1:
      return FieldKind::kInt64;
    case 2:
      return FieldKind::kBool;
    case 3:
      return FieldKind::kFloat64;
    case 4:
      return FieldKind::kUtf8String;
    default:
      return FieldKind::kBlob;
  }
}

const Field* Transaction::FindField(uint16_t tag) const {
  for (const Field& f : fields) {
    if (f.tag == tag) return &f;
  }
  return nullptr;
}

Field* Transaction::FindField(uint16_t tag) {
  for (Field& f : fields) {
    if (f.tag == tag) return &f;
  }
  return nullptr;
}

const char* DecodeCauseName(DecodeCause cause) {
  switch (cause) {
    case DecodeCause::kTruncated:
      return "truncated";
    case DecodeCause::kBadMagic:
      return "bad-magic";
    case DecodeCause::kBadVersion:
      return "bad-version";
    case DecodeCause::kFieldCountOverflow:
      return "field-count-overflow";
    case DecodeCause::kUnknownKind:
      return "unknown-kind";
    case DecodeCause::kBadLength:
      return "bad-length";
    case DecodeCause::kDuplicateTag:
      return "duplicate-tag";
    case DecodeCause::kInvalidBool:
      return "invalid-bool";
    case DecodeCause::kInvalidUtf8:
      return "invalid-utf8";
    case DecodeCause::kTrailingData:
      return "trailing-data";
  }
  return "?";
}

std::string DecodeError::ToString() const {
  std::ostringstream os;
  os << DecodeCauseName(cause) << " at offset " << offset;
  if (!detail.empty()) os << ": " << detail;
  return os.str();
}

bool IsValidUtf8(const uint8_t* data, size_t size) {
  size_t i = 0;
  while (i < size) {
    uint8_t b = data[i];
    size_t len;
    uint32_t cp;
    if (b < 0x80) {
      ++i;
      continue;
    } else if ((b & 0xe0) == 0xc0) {
      len = 2;
      cp = b & 0x1f;
    } else if ((b & 0xf0) == 0xe0) {
      len = 3;
      cp = b & 0x0f;
    } else if ((b & 0xf8) == 0xf0) {
      len = 4;
      cp = b & 0x07;
    } else {
      return false;
    }
    if (i + len > size) return false;
    for (size_t k = 1; k < len; ++k) {
      if ((data[i + k] & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (data[i + k] & 0x3f);
    }
    // Overlong forms, surrogates and out-of-range scalars are invalid.
    if (len == 2 && cp < 0x80) return false;
    if (len == 3 && cp < 0x800) return false;
    if (len == 4 && cp < 0x10000) return false;
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += len;
  }
  return true;
}

std::vector<uint8_t> Encode(const Transaction& t) {
  if (t.fields.size() > kMaxFields) {
    throw InvalidArgumentError("transaction has " +
                               std::to_string(t.fields.size()) +
                               " fields; limit is " + std::to_string(kMaxFields));
  }
  std::unordered_set<uint16_t> seen;
  for (const Field& f : t.fields) {
    if (!seen.insert(f.tag).second) {
      throw InvalidArgumentError("duplicate field tag " + std::to_string(f.tag));
    }
    if (const auto* s = std::get_if<std::string>(&f.value)) {
      if (!IsValidUtf8(*s)) {
        throw InvalidArgumentError("field " + std::to_string(f.tag) +
                                   " is not valid UTF-8");
      }
    }
    if (const auto* b = std::get_if<std::vector<uint8_t>>(&f.value)) {
      if (b->size() > kMaxBlobBytes) {
        throw InvalidArgumentError("field " + std::to_string(f.tag) +
                                   " blob exceeds " +
                                   std::to_string(kMaxBlobBytes) + " bytes");
      }
    }
  }

  std::vector<uint8_t> out;
  out.reserve(kHeaderSize + t.fields.size() * 16);
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  PutU32(out, t.code);
  out.push_back(t.flags);
  PutU16(out, static_cast<uint16_t>(t.fields.size()));

  for (const Field& f : t.fields) {
    PutU16(out, f.tag);
    out.push_back(static_cast<uint8_t>(KindOf(f.value)));
    switch (KindOf(f.value)) {
      case FieldKind::kInt32:
        PutU32(out, 4);
        PutU32(out, static_cast<uint32_t>(std::get<int32_t>(f.value)));
        break;
      case FieldKind::kInt64:
        PutU32(out, 8);
        PutU64(out, static_cast<uint64_t>(std::get<int64_t>(f.value)));
        break;
      case FieldKind::kBool:
        PutU32(out, 1);
        out.push_back(std::get<bool>(f.value) ? 1 : 0);
        break;
      case FieldKind::kFloat64: {
        PutU32(out, 8);
        uint64_t bits;
        double d = std::get<double>(f.value);
        std::memcpy(&bits, &d, 8);
        PutU64(out, bits);
        break;
      }
      case FieldKind::kUtf8String: {
        const auto& s = std::get<std::string>(f.value);
        PutU32(out, static_cast<uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
        break;
      }
      case FieldKind::kBlob: {
        const auto& b = std::get<std::vector<uint8_t>>(f.value);
        PutU32(out, static_cast<uint32_t>(b.size()));
        out.insert(out.end(), b.begin(), b.end());
        break;
      }
    }
  }
  return out;
}

DecodeResult Decode(const uint8_t* data, size_t size) {
  auto fail = [](DecodeCause cause, size_t offset, std::string detail = {}) {
    return DecodeResult(DecodeError{cause, offset, std::move(detail)});
  };

  if (size < kHeaderSize) {
    return fail(DecodeCause::kTruncated, size, "incomplete header");
  }
  if (std::memcmp(data, kMagic, 4) != 0) {
    return fail(DecodeCause::kBadMagic, 0);
  }
  if (data[4] != kVersion) {
    return fail(DecodeCause::kBadVersion, 4,
                "version byte " + std::to_string(data[4]));
  }

  Transaction t;
  t.code = GetU32(data + 5);
  t.flags = data[9];
  uint16_t count = GetU16(data + 10);
  if (count > kMaxFields) {
    return fail(DecodeCause::kFieldCountOverflow, 10,
                std::to_string(count) + " fields");
  }

  size_t pos = kHeaderSize;
  std::unordered_set<uint16_t> seen;
  t.fields.reserve(count);
  for (uint16_t i = 0; i < count; ++i) {
    if (size - pos < 7) {
      return fail(DecodeCause::kTruncated, pos, "incomplete field header");
    }
    Field f;
    f.tag = GetU16(data + pos);
    uint8_t kind = data[pos + 2];
    uint32_t len = GetU32(data + pos + 3);
    size_t payload = pos + 7;
    if (!seen.insert(f.tag).second) {
      return fail(DecodeCause::kDuplicateTag, pos, std::to_string(f.tag));
    }
    if (len > size - payload) {
      return fail(DecodeCause::kTruncated, payload,
                  "field payload of " + std::to_string(len) + " bytes");
    }
    const uint8_t* p = data + payload;
    switch (static_cast<FieldKind>(kind)) {
      case FieldKind::kInt32:
        if (len != 4) return fail(DecodeCause::kBadLength, pos + 3, "int32");
        f.value = static_cast<int32_t>(GetU32(p));
        break;
      case FieldKind::kInt64:
        if (len != 8) return fail(DecodeCause::kBadLength, pos + 3, "int64");
        f.value = static_cast<int64_t>(GetU64(p));
        break;
      case FieldKind::kBool:
        if (len != 1) return fail(DecodeCause::kBadLength, pos + 3, "bool");
        if (*p > 1) return fail(DecodeCause::kInvalidBool, payload);
        f.value = (*p == 1);
        break;
      case FieldKind::kFloat64: {
        if (len != 8) return fail(DecodeCause::kBadLength, pos + 3, "float64");
        uint64_t bits = GetU64(p);
        double d;
        std::memcpy(&d, &bits, 8);
        f.value = d;
        break;
      }
      case FieldKind::kUtf8String:
        if (!IsValidUtf8(p, len)) {
          return fail(DecodeCause::kInvalidUtf8, payload);
        }
        f.value = std::string(reinterpret_cast<const char*>(p), len);
        break;
      case FieldKind::kBlob:
        if (len > kMaxBlobBytes) {
          return fail(DecodeCause::kBadLength, pos + 3,
                      "blob of " + std::to_string(len) + " bytes");
        }
        f.value = std::vector<uint8_t>(p, p + len);
        break;
      default:
        return fail(DecodeCause::kUnknownKind, pos + 2, std::to_string(kind));
    }
    t.fields.push_back(std::move(f));
    pos = payload + len;
  }
  if (pos != size) {
    return fail(DecodeCause::kTrailingData, pos,
                std::to_string(size - pos) + " bytes left");
  }
  return t;
}

DecodeResult Decode(const std::vector<uint8_t>& bytes) {
  return Decode(bytes.data(), bytes.size());
}

// --- Broadcast message layer -----------------------------------------------

namespace {

// Returns the string payload or records an error.  Intent slots only
// carry Utf8String fields.
const std::string* IntentString(const Field& f, std::string* error) {
  const std::string* s = std::get_if<std::string>(&f.value);
  if (s == nullptr) {
    *error = "tag " + std::to_string(f.tag) + " is " +
             FieldKindName(KindOf(f.value)) + ", expected utf8-string";
  }
  return s;
}

}  // namespace

Transaction EncodeIntent(const IntentMessage& m) {
  if (m.action.empty()) {
    throw InvalidArgumentError("intent action must be nonempty");
  }
  Transaction t;
  t.code = kIntentCode;
  t.fields.push_back(Field{kIntentActionTag, m.action});
  if (!m.category.empty()) {
    t.fields.push_back(Field{kIntentCategoryTag, m.category});
  }
  if (!m.class_name.empty()) {
    t.fields.push_back(Field{kIntentClassTag, m.class_name});
  }
  if (!m.data_uri.empty()) {
    t.fields.push_back(Field{kIntentDataUriTag, m.data_uri});
  }
  uint16_t tag = kIntentExtrasBaseTag;
  for (const auto& [key, value] : m.extras) {
    if (key.empty()) {
      throw InvalidArgumentError("intent extras key must be nonempty");
    }
    t.fields.push_back(Field{tag++, key});
    t.fields.push_back(Field{tag++, value});
  }
  return t;
}

IntentResult DecodeIntent(const Transaction& t) {
  IntentMessage m;
  std::string error;
  std::map<uint16_t, const std::string*> extras_fields;
  bool have_action = false;
  for (const Field& f : t.fields) {
    const std::string* s = IntentString(f, &error);
    if (s == nullptr) return IntentError{error};
    switch (f.tag) {
      case kIntentActionTag:
        m.action = *s;
        have_action = true;
        break;
      case kIntentCategoryTag:
        m.category = *s;
        break;
      case kIntentClassTag:
        m.class_name = *s;
        break;
      case kIntentDataUriTag:
        m.data_uri = *s;
        break;
      default:
        if (f.tag < kIntentExtrasBaseTag) {
          return IntentError{"unexpected tag " + std::to_string(f.tag)};
        }
        extras_fields[f.tag] = s;
    }
  }
  if (!have_action || m.action.empty()) {
    return IntentError{"missing or empty action"};
  }
  // Extras tags must form a contiguous key/value run from the base tag.
  uint16_t next = kIntentExtrasBaseTag;
  for (const auto& [tag, value] : extras_fields) {
    if (tag != next) {
      return IntentError{"extras tags not contiguous at tag " +
                         std::to_string(tag)};
    }
    ++next;
    (void)value;
  }
  if (extras_fields.size() % 2 != 0) {
    return IntentError{"extras key without value"};
  }
  for (auto it = extras_fields.begin(); it != extras_fields.end();) {
    const std::string& key = *it->second;
    ++it;
    const std::string& value = *it->second;
    ++it;
    if (key.empty()) return IntentError{"empty extras key"};
    if (!m.extras.emplace(key, value).second) {
      return IntentError{"duplicate extras key \"" + key + "\""};
    }
  }
  return m;
}

// --- Modem text protocol ---------------------------------------------------

namespace {

bool IsCodeChar(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
         (c >= '0' && c <= '9') || c == '+';
}

bool IsValidCode(const std::string& code) {
  if (code.empty()) return false;
  if (!(code[0] == '+' || std::isalpha(static_cast<unsigned char>(code[0])))) {
    return false;
  }
  for (char c : code) {
    if (!IsCodeChar(c)) return false;
  }
  return true;
}

bool IsResponseCode(const std::string& code) {
  return code == "OK" || code == "ERROR";
}

std::vector<std::string> SplitParams(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t comma = s.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string JoinParams(const std::vector<std::string>& params) {
  std::string out;
  for (size_t i = 0; i < params.size(); ++i) {
    if (i) out += ',';
    out += params[i];
  }
  return out;
}

}  // namespace

std::string EncodeAt(const AtMessage& m) {
  if (!IsValidCode(m.code)) {
    throw InvalidArgumentError("invalid AT code \"" + m.code + "\"");
  }
  for (const std::string& p : m.params) {
    if (p.find_first_of(",\r\n") != std::string::npos) {
      throw InvalidArgumentError("AT parameter contains a separator: \"" + p +
                                 "\"");
    }
  }
  switch (m.kind) {
    case AtKind::kCommand: {
      std::string line = "AT" + m.code;
      if (!m.params.empty()) line += "=" + JoinParams(m.params);
      return line;
    }
    case AtKind::kResponse:
      if (!IsResponseCode(m.code)) {
        throw InvalidArgumentError("response code must be OK or ERROR, got \"" +
                                   m.code + "\"");
      }
      break;
    case AtKind::kEvent:
      if (IsResponseCode(m.code)) {
        throw InvalidArgumentError("event code \"" + m.code +
                                   "\" collides with a response code");
      }
      break;
  }
  std::string line = m.code;
  if (!m.params.empty()) line += ":" + JoinParams(m.params);
  return line;
}

AtResult DecodeAt(const std::string& line) {
  if (line.empty()) return AtError{"empty line"};
  if (line.find_first_of("\r\n") != std::string::npos) {
    return AtError{"embedded line break"};
  }

  AtMessage m;
  std::string body;
  char sep;
  if (line.size() >= 2 && line[0] == 'A' && line[1] == 'T') {
    m.kind = AtKind::kCommand;
    body = line.substr(2);
    sep = '=';
  } else {
    body = line;
    sep = ':';
  }

  size_t cut = body.find(sep);
  m.code = body.substr(0, cut);
  if (!IsValidCode(m.code)) {
    return AtError{"invalid code \"" + m.code + "\""};
  }
  if (cut != std::string::npos) {
    m.params = SplitParams(body.substr(cut + 1));
  }
  if (m.kind != AtKind::kCommand) {
    m.kind = IsResponseCode(m.code) ? AtKind::kResponse : AtKind::kEvent;
  }
  return m;
}

}  // namespace sirfit::wire

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
// Call conventions the simulated services speak over transaction frames.
// A reply mirrors the request code, sets the reply flag, and carries an
// int32 status in tag 0: zero for success, the negated symbolic error
// code for failure.  Kept apart from the codec so the interposition
// layer can speak it without depending on any service.

#ifndef SIRFIT_PROTOCOL_HPP
#define SIRFIT_PROTOCOL_HPP

#include <cstdint>
#include <optional>

#include "sirfit/model.hpp"
#include "sirfit/wire.hpp"

namespace sirfit::proto {

inline constexpr uint8_t kReplyFlag = 0x80;
inline constexpr uint16_t kStatusTag = 0;

inline bool IsReply(const wire::Transaction& t) {
  return (t.flags & kReplyFlag) != 0;
}

inline wire::Transaction MakeReply(uint32_t request_code) {
  wire::Transaction t;
  t.code = request_code;
  t.flags = kReplyFlag;
  t.fields.push_back(wire::Field{kStatusTag, int32_t{0}});
  return t;
}

inline wire::Transaction MakeErrorReply(uint32_t request_code,
                                        model::SymbolicError error) {
  wire::Transaction t;
  t.code = request_code;
  t.flags = kReplyFlag;
  t.fields.push_back(
      wire::Field{kStatusTag, -static_cast<int32_t>(SymbolicErrorCode(error))});
  return t;
}

// nullopt when the status field is missing or not an int32 (a corrupted
// reply, which receivers must treat as a protocol violation, not trust).
inline std::optional<int32_t> Status(const wire::Transaction& t) {
  const wire::Field* f = t.FindField(kStatusTag);
  if (f == nullptr) return std::nullopt;
  const int32_t* v = std::get_if<int32_t>(&f->value);
  if (v == nullptr) return std::nullopt;
  return *v;
}

inline bool IsErrorStatus(const wire::Transaction& t) {
  std::optional<int32_t> s = Status(t);
  return !s.has_value() || *s < 0;
}

}  // namespace sirfit::proto

#endif  // SIRFIT_PROTOCOL_HPP

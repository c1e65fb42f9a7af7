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
// Message conventions shared by the stack's processes, the harness, and the
// tests: control-socket operations, per-call payload tags, and the blocking
// RPC client every stack participant uses.
//
// Service operation codes are not listed here; they live in the topology
// description, which is the single source of truth for code-to-name maps.

#ifndef SIRFIT_TARGET_MSGS_HPP
#define SIRFIT_TARGET_MSGS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sirfit/net.hpp"
#include "sirfit/wire.hpp"

namespace sirfit::target {

// --- Control socket protocol -------------------------------------------------
//
// Every stack process listens on a private control socket the harness uses
// for supervision.  Requests are transactions; replies follow the proto
// conventions (mirrored code, reply flag, status at tag 0).

inline constexpr uint32_t kCtlHealth = 0x101;
inline constexpr uint32_t kCtlArm = 0x102;      // tag 1: fault model document
inline constexpr uint32_t kCtlDisarm = 0x103;
inline constexpr uint32_t kCtlQuit = 0x104;
inline constexpr uint32_t kCtlTrigger = 0x105;  // tag 1: action, tag 2: argument
inline constexpr uint32_t kCtlHang = 0x106;     // debug: stop responding

// Health reply payload.
inline constexpr uint16_t kCtlTagName = 1;
inline constexpr uint16_t kCtlTagPid = 2;

// Trigger request payload.
inline constexpr uint16_t kCtlTagAction = 1;
inline constexpr uint16_t kCtlTagArgument = 2;

// Trigger reply payload.
inline constexpr uint16_t kCtlTagDetail = 1;  // human-readable result note
inline constexpr uint16_t kCtlTagBlob = 2;    // image bytes, when any
inline constexpr uint16_t kCtlTagValue = 3;   // numeric result, when any

// --- Service call payloads ---------------------------------------------------
//
// Replies reserve tag 0 for the status field (see protocol.hpp); payload
// fields start at tag 1.

// take_picture / read_frame replies: the image and its checksum.  The
// checksum lets a caller detect payload corruption on the wire.
inline constexpr uint16_t kTagImage = 1;
inline constexpr uint16_t kTagImageDigest = 2;

// read_sensor / sensorhub read replies.
inline constexpr uint16_t kTagSensorValue = 1;

// dial requests carry the number; get_state replies carry the state.
inline constexpr uint16_t kTagNumber = 1;
inline constexpr uint16_t kTagPhoneState = 1;

// show_activities / list_packages replies: one string per entry.
inline constexpr uint16_t kTagListBase = 1;

// stop_activity requests name the activity.
inline constexpr uint16_t kTagActivity = 1;

// Valid sensor readings stay inside this closed range; callers treat
// anything outside as corrupt data.
inline constexpr int64_t kSensorMin = 0;
inline constexpr int64_t kSensorMax = 1000;

// --- Robustness handlers -----------------------------------------------------

// What a service does when a call it depends on fails.  Unhandled failures
// abort the whole process (one crash domain per process); catch-and-report
// logs at fatal severity and propagates an error; catch-and-recover logs a
// warning and substitutes a fallback result.
enum class Handler { kUnhandled, kCatchAndReport, kCatchAndRecover };

const char* HandlerName(Handler h);
// Throws ConfigError for unknown names.
Handler HandlerFromName(const std::string& name);

// --- Blocking RPC client -----------------------------------------------------

enum class CallStatus {
  kOk,            // reply with status 0
  kError,         // reply with nonzero status
  kTimedOut,      // no reply within the deadline
  kConnectFailed, // endpoint absent or refusing
  kDisconnected,  // peer closed mid-call
  kBadReply,      // reply bytes did not decode
};

const char* CallStatusName(CallStatus s);

struct CallResult {
  CallStatus status = CallStatus::kConnectFailed;
  int32_t rpc_status = 0;  // meaningful for kOk / kError
  wire::Transaction reply; // meaningful for kOk / kError
};

// One request, one reply, one connection.  timeout_ms 0 blocks until the
// reply or the disconnect arrives, which is what an unhandled caller does.
CallResult RpcCall(const std::string& socket_path, const wire::Transaction& request,
                   int64_t timeout_ms);

// --- Image frames ------------------------------------------------------------

// Deterministic fake camera frame for a capture sequence number.
std::vector<uint8_t> MakeFramePixels(uint64_t capture_no);

// FNV-1a checksum the drivers attach at kTagImageDigest.
uint64_t FrameDigest(const std::vector<uint8_t>& pixels);

// Verifies a frame reply's checksum field against its payload.  False on
// missing fields, wrong kinds, or a mismatched digest.
bool FrameIntact(const wire::Transaction& reply);

}  // namespace sirfit::target

#endif  // SIRFIT_TARGET_MSGS_HPP

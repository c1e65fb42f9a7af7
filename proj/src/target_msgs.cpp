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

#include "sirfit/target_msgs.hpp"

#include <algorithm>

#include "sirfit/errors.hpp"
#include "sirfit/protocol.hpp"
#include "sirfit/rng.hpp"

namespace sirfit::target {

const char* HandlerName(Handler h) {
  switch (h) {
    case Handler::kUnhandled:
      return "unhandled";
    case Handler::kCatchAndReport:
      return "catch-and-report";
    case Handler::kCatchAndRecover:
      return "catch-and-recover";
  }
  return "unhandled";
}

Handler HandlerFromName(const std::string& name) {
  if (name == "unhandled") return Handler::kUnhandled;
  if (name == "catch-and-report") return Handler::kCatchAndReport;
  if (name == "catch-and-recover") return Handler::kCatchAndRecover;
  throw ConfigError("unknown handler name: " + name);
}

const char* CallStatusName(CallStatus s) {
  switch (s) {
    case CallStatus::kOk:
      return "ok";
    case CallStatus::kError:
      return "error";
    case CallStatus::kTimedOut:
      return "timed-out";
    case CallStatus::kConnectFailed:
      return "connect-failed";
    case CallStatus::kDisconnected:
      return "disconnected";
    case CallStatus::kBadReply:
      return "bad-reply";
  }
  return "connect-failed";
}

CallResult RpcCall(const std::string& socket_path, const wire::Transaction& request,
                   int64_t timeout_ms) {
  CallResult result;
  net::Fd fd;
  try {
    // Connection setup gets a short grace period of its own so a dead
    // endpoint reports kConnectFailed fast instead of eating the deadline.
    int64_t connect_ms = timeout_ms > 0 ? std::min<int64_t>(timeout_ms, 250) : 250;
    fd = net::ConnectWithRetry(socket_path, connect_ms);
  } catch (const HarnessError&) {
    result.status = CallStatus::kConnectFailed;
    return result;
  }
  if (!net::WriteAll(fd.get(), wire::Encode(request))) {
    result.status = CallStatus::kDisconnected;
    return result;
  }
  if (timeout_ms > 0 && !net::WaitReadable(fd.get(), timeout_ms)) {
    result.status = CallStatus::kTimedOut;
    return result;
  }
  net::FrameRead read = net::ReadFrameBytes(fd.get());
  if (read.status == net::FrameRead::Status::kEof) {
    result.status = CallStatus::kDisconnected;
    return result;
  }
  if (read.status == net::FrameRead::Status::kGarbage) {
    result.status = CallStatus::kBadReply;
    return result;
  }
  wire::DecodeResult decoded = wire::Decode(read.bytes);
  if (!std::holds_alternative<wire::Transaction>(decoded)) {
    result.status = CallStatus::kBadReply;
    return result;
  }
  result.reply = std::get<wire::Transaction>(std::move(decoded));
  std::optional<int32_t> status = proto::Status(result.reply);
  if (!status.has_value()) {
    result.status = CallStatus::kBadReply;
    return result;
  }
  result.rpc_status = *status;
  result.status = *status == 0 ? CallStatus::kOk : CallStatus::kError;
  return result;
}

std::vector<uint8_t> MakeFramePixels(uint64_t capture_no) {
  // 4 KiB of deterministic "pixels"; content only needs to be stable and
  // checksum-coverable.
  std::vector<uint8_t> pixels(4096);
  Rng rng(0xCA3E0000u + capture_no);
  for (size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<uint8_t>(rng.NextBelow(256));
  }
  return pixels;
}

uint64_t FrameDigest(const std::vector<uint8_t>& pixels) {
  return Fnv1a(std::string_view(reinterpret_cast<const char*>(pixels.data()),
                                pixels.size()));
}

bool FrameIntact(const wire::Transaction& reply) {
  const wire::Field* image = reply.FindField(kTagImage);
  const wire::Field* digest = reply.FindField(kTagImageDigest);
  if (image == nullptr || digest == nullptr) return false;
  const auto* pixels = std::get_if<std::vector<uint8_t>>(&image->value);
  const auto* declared = std::get_if<int64_t>(&digest->value);
  if (pixels == nullptr || declared == nullptr) return false;
  return static_cast<uint64_t>(*declared) == FrameDigest(*pixels);
}

}  // namespace sirfit::target

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

#include "sirfit/proxy.hpp"

#include <chrono>

#include "sirfit/errors.hpp"
#include "sirfit/protocol.hpp"
#include "sirfit/wire.hpp"

namespace sirfit::proxy {

const char* FramingName(Framing f) {
  switch (f) {
    case Framing::kRaw:
      return "raw";
    case Framing::kFrame:
      return "frame";
    case Framing::kAtLine:
      return "at-line";
  }
  return "?";
}

Framing FramingFromName(const std::string& name) {
  if (name == "raw") return Framing::kRaw;
  if (name == "frame") return Framing::kFrame;
  if (name == "at-line") return Framing::kAtLine;
  throw ConfigError("unknown framing \"" + name + "\"");
}

Proxy::Proxy(std::string listen_path, std::string upstream_path,
             ChannelBinding binding, inject::InjectionController* controller)
    : listen_path_(std::move(listen_path)),
      upstream_path_(std::move(upstream_path)),
      binding_(std::move(binding)),
      controller_(controller) {}

Proxy::~Proxy() { Stop(); }

void Proxy::Start() {
  listener_ = net::Listen(listen_path_);
  started_ = true;
  acceptor_ = std::thread([this] { AcceptLoop(); });
}

void Proxy::Stop() {
  {
    std::lock_guard<std::mutex> lock(stop_mu_);
    if (!started_) return;
    stopping_ = true;
  }
  stop_cv_.notify_all();
  net::ShutdownBoth(listener_.get());
  {
    std::lock_guard<std::mutex> lock(conn_mu_);
    for (auto& conn : connections_) {
      net::ShutdownBoth(conn->client.get());
      net::ShutdownBoth(conn->upstream.get());
    }
  }
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::unique_ptr<Connection>> dead;
  {
    std::lock_guard<std::mutex> lock(conn_mu_);
    dead.swap(connections_);
  }
  for (auto& conn : dead) {
    if (conn->forward.joinable()) conn->forward.join();
    if (conn->backward.joinable()) conn->backward.join();
  }
  listener_.Reset();
}

void Proxy::AcceptLoop() {
  for (;;) {
    net::Fd client = net::Accept(listener_.get());
    if (!client.valid()) return;  // listener shut down
    {
      std::lock_guard<std::mutex> lock(stop_mu_);
      if (stopping_) return;
    }
    net::Fd upstream;
    try {
      upstream = net::Connect(upstream_path_);
    } catch (const HarnessError&) {
      continue;  // refusal propagates as an immediate close
    }
    auto conn = std::make_unique<Connection>();
    conn->client = std::move(client);
    conn->upstream = std::move(upstream);
    Connection* raw = conn.get();
    conn->forward = std::thread([this, raw] { Relay(raw, true); });
    conn->backward = std::thread([this, raw] { Relay(raw, false); });
    std::lock_guard<std::mutex> lock(conn_mu_);
    connections_.push_back(std::move(conn));
  }
}

void Proxy::Relay(Connection* conn, bool forward) {
  try {
    switch (binding_.framing) {
      case Framing::kRaw:
        RelayRaw(conn, forward);
        break;
      case Framing::kFrame:
        RelayFrames(conn, forward);
        break;
      case Framing::kAtLine:
        RelayLines(conn, forward);
        break;
    }
  } catch (const HarnessError&) {
    // Relay trouble tears the connection down; the experiment observes
    // the disconnect, the harness survives.
  }
  net::ShutdownBoth(conn->client.get());
  net::ShutdownBoth(conn->upstream.get());
}

bool Proxy::WriteTo(Connection* conn, bool to_client,
                    const std::vector<uint8_t>& bytes) {
  if (to_client) {
    std::lock_guard<std::mutex> lock(conn->client_write_mu);
    return net::WriteAll(conn->client.get(), bytes);
  }
  return net::WriteAll(conn->upstream.get(), bytes);
}

bool Proxy::WriteTo(Connection* conn, bool to_client, const std::string& text) {
  if (to_client) {
    std::lock_guard<std::mutex> lock(conn->client_write_mu);
    return net::WriteAll(conn->client.get(), text);
  }
  return net::WriteAll(conn->upstream.get(), text);
}

bool Proxy::SleepInterruptible(int64_t ms) {
  std::unique_lock<std::mutex> lock(stop_mu_);
  return !stop_cv_.wait_for(lock, std::chrono::milliseconds(ms),
                            [this] { return stopping_; });
}

void Proxy::ParkUntilStop() {
  std::unique_lock<std::mutex> lock(stop_mu_);
  stop_cv_.wait(lock, [this] { return stopping_; });
}

void Proxy::RelayRaw(Connection* conn, bool forward) {
  int src = forward ? conn->client.get() : conn->upstream.get();
  std::vector<uint8_t> buf(4096);
  for (;;) {
    size_t got = net::ReadSome(src, buf.data(), buf.size());
    if (got == 0) return;
    buf.resize(got);
    if (!WriteTo(conn, !forward, buf)) return;
    buf.resize(4096);
  }
}

void Proxy::RelayFrames(Connection* conn, bool forward) {
  int src = forward ? conn->client.get() : conn->upstream.get();
  inject::Direction dir =
      forward ? inject::Direction::kRequest : inject::Direction::kReply;
  for (;;) {
    net::FrameRead fr = net::ReadFrameBytes(src);
    if (fr.status == net::FrameRead::Status::kEof) return;
    if (fr.status == net::FrameRead::Status::kGarbage) {
      // Unframeable stream: hand the prefix on and degrade to raw.
      if (!fr.bytes.empty() && !WriteTo(conn, !forward, fr.bytes)) return;
      RelayRaw(conn, forward);
      return;
    }

    wire::DecodeResult decoded = wire::Decode(fr.bytes);
    const wire::Transaction* t = std::get_if<wire::Transaction>(&decoded);
    const std::string* op = nullptr;
    if (t != nullptr) {
      auto it = binding_.ops_by_code.find(t->code);
      if (it != binding_.ops_by_code.end()) op = &it->second;
    }
    if (t == nullptr || op == nullptr || controller_ == nullptr) {
      if (!WriteTo(conn, !forward, fr.bytes)) return;
      continue;
    }

    auto ev = controller_->Evaluate(binding_.PointFor(*op), dir,
                                    binding_.path_hint, &fr.bytes);
    if (!ev.chosen.has_value()) {
      if (!WriteTo(conn, !forward, fr.bytes)) return;
      continue;
    }

    const model::InjectionAction& action = ev.chosen->action;
    switch (action.kind) {
      case model::ActionKind::kReturnError:
      case model::ActionKind::kDenyResource: {
        model::SymbolicError code =
            action.kind == model::ActionKind::kReturnError
                ? action.error
                : inject::DenyError(action.deny_kind);
        std::vector<uint8_t> reply =
            wire::Encode(proto::MakeErrorReply(t->code, code));
        controller_->SetPostDigest(*ev.record_index,
                                   inject::DigestBytes(reply));
        // The request dies here; the caller sees only the error reply.
        if (!WriteTo(conn, true, reply)) return;
        break;
      }
      case model::ActionKind::kDelay:
        if (!SleepInterruptible(action.duration_ms)) return;
        if (!WriteTo(conn, !forward, fr.bytes)) return;
        break;
      case model::ActionKind::kStall:
        ParkUntilStop();
        return;
      case model::ActionKind::kDropMessage:
        controller_->SetPostDigest(*ev.record_index, 0);
        break;
      case model::ActionKind::kCorruptPayload: {
        Rng rng =
            controller_->CorruptionRng(ev.chosen->id, ev.sequence_no);
        std::vector<uint8_t> mutated;
        try {
          mutated =
              wire::Encode(inject::ApplyCorruptFrame(action, *t, rng));
        } catch (const InvalidArgumentError&) {
          // Selector missed (for example tag absent in this frame):
          // deliver the original, keep the evidence honest.
          mutated = fr.bytes;
        }
        controller_->SetPostDigest(*ev.record_index,
                                   inject::DigestBytes(mutated));
        if (!WriteTo(conn, !forward, mutated)) return;
        break;
      }
    }
  }
}

void Proxy::RelayLines(Connection* conn, bool forward) {
  int src = forward ? conn->client.get() : conn->upstream.get();
  const std::string& op = forward ? binding_.forward_op : binding_.backward_op;
  std::string point = binding_.PointFor(op);
  inject::Direction dir =
      forward ? inject::Direction::kRequest : inject::Direction::kReply;

  std::string buf;
  std::vector<uint8_t> chunk(4096);
  for (;;) {
    size_t got = net::ReadSome(src, chunk.data(), chunk.size());
    if (got == 0) {
      // Partial trailing line travels as-is.
      if (!buf.empty()) WriteTo(conn, !forward, buf);
      return;
    }
    buf.append(reinterpret_cast<const char*>(chunk.data()), got);

    size_t nl;
    while ((nl = buf.find('\n')) != std::string::npos) {
      std::string line = buf.substr(0, nl + 1);
      buf.erase(0, nl + 1);
      std::string body = line.substr(0, nl);
      std::string terminator = "\n";
      if (!body.empty() && body.back() == '\r') {
        body.pop_back();
        terminator = "\r\n";
      }

      if (controller_ == nullptr) {
        if (!WriteTo(conn, !forward, line)) return;
        continue;
      }
      std::vector<uint8_t> payload(body.begin(), body.end());
      // Each flow direction of a device stream is its own operation, so
      // the evaluation is direction-agnostic (the arriving data is the
      // read call and its result at once).
      auto ev = controller_->Evaluate(point, dir, binding_.path_hint, &payload,
                                      /*direction_agnostic=*/true);
      if (!ev.chosen.has_value()) {
        if (!WriteTo(conn, !forward, line)) return;
        continue;
      }

      const model::InjectionAction& action = ev.chosen->action;
      switch (action.kind) {
        case model::ActionKind::kReturnError:
        case model::ActionKind::kDenyResource:
          // The line grammar has no in-band envelope for device
          // failure; the stream dies like a lost device node.
          return;
        case model::ActionKind::kDelay:
          if (!SleepInterruptible(action.duration_ms)) return;
          if (!WriteTo(conn, !forward, line)) return;
          break;
        case model::ActionKind::kStall:
          ParkUntilStop();
          return;
        case model::ActionKind::kDropMessage:
          controller_->SetPostDigest(*ev.record_index, 0);
          break;
        case model::ActionKind::kCorruptPayload: {
          Rng rng =
              controller_->CorruptionRng(ev.chosen->id, ev.sequence_no);
          std::string corrupted =
              inject::ApplyCorruptAtLine(action, body, rng);
          controller_->SetPostDigest(
              *ev.record_index,
              inject::DigestBytes(
                  reinterpret_cast<const uint8_t*>(corrupted.data()),
                  corrupted.size()));
          if (!WriteTo(conn, !forward, corrupted + terminator)) return;
          break;
        }
      }
    }
  }
}

}  // namespace sirfit::proxy

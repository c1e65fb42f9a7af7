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
// Transparent socket interposition.  The proxy sits between a client and
// its upstream server, decodes what it can, consults the injection
// controller, and otherwise relays the original bytes untouched.  A frame
// it cannot parse is forwarded verbatim; framing that breaks down
// entirely degrades the connection to a raw byte relay.  Corrupted
// traffic must stay deliverable, so nothing here validates content.

#ifndef SIRFIT_PROXY_HPP
#define SIRFIT_PROXY_HPP

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sirfit/inject.hpp"
#include "sirfit/net.hpp"

namespace sirfit::proxy {

enum class Framing {
  kRaw,     // opaque byte relay, no interposition points
  kFrame,   // transaction frames; requests flow to upstream, replies back
  kAtLine,  // newline-delimited modem lines; each direction is its own op
};

const char* FramingName(Framing f);
Framing FramingFromName(const std::string& name);

// How byte flows on one socket map to injection points.
struct ChannelBinding {
  Framing framing = Framing::kRaw;
  std::string component;
  std::string interface_name;
  // Frame framing: operation per transaction code (replies reuse the
  // request code, so one table serves both directions).
  std::map<uint32_t, std::string> ops_by_code;
  // Line framing: operation names per flow direction.
  std::string forward_op;   // client to upstream
  std::string backward_op;  // upstream to client
  // Passed to path filters, typically the emulated device path.
  std::string path_hint;

  std::string PointFor(const std::string& op) const {
    return component + "/" + interface_name + "." + op;
  }
};

class Proxy {
 public:
  // The controller decides and keeps the evidence; it may be shared by
  // several proxies.
  Proxy(std::string listen_path, std::string upstream_path,
        ChannelBinding binding, inject::InjectionController* controller);
  ~Proxy();
  Proxy(const Proxy&) = delete;
  Proxy& operator=(const Proxy&) = delete;

  // Binds and starts accepting.  Throws HarnessError when the listen
  // path is unusable.
  void Start();

  // Unparks stalled deliveries, tears down every connection, joins all
  // threads.  Idempotent.
  void Stop();

  const std::string& listen_path() const { return listen_path_; }

 private:
  struct Connection {
    net::Fd client;
    net::Fd upstream;
    std::mutex client_write_mu;
    std::thread forward;
    std::thread backward;
  };

  void AcceptLoop();
  void Relay(Connection* conn, bool forward);
  void RelayFrames(Connection* conn, bool forward);
  void RelayLines(Connection* conn, bool forward);
  void RelayRaw(Connection* conn, bool forward);
  bool WriteTo(Connection* conn, bool to_client,
               const std::vector<uint8_t>& bytes);
  bool WriteTo(Connection* conn, bool to_client, const std::string& text);
  // false when the proxy is stopping.
  bool SleepInterruptible(int64_t ms);
  void ParkUntilStop();

  std::string listen_path_;
  std::string upstream_path_;
  ChannelBinding binding_;
  inject::InjectionController* controller_;

  net::Fd listener_;
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::unique_ptr<Connection>> connections_;

  std::mutex stop_mu_;
  std::condition_variable stop_cv_;
  bool stopping_ = false;
  bool started_ = false;
};

}  // namespace sirfit::proxy

#endif  // SIRFIT_PROXY_HPP

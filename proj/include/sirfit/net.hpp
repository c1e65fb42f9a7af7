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
// Local-socket plumbing.  Everything in the simulated stack, including the
// device channels, rides AF_UNIX stream sockets.  Peer disconnects are a
// normal event here (experiments kill processes on purpose), so the write
// and read helpers report them as values instead of throwing.

#ifndef SIRFIT_NET_HPP
#define SIRFIT_NET_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sirfit::net {

// Owning file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Fd& operator=(Fd&& other) noexcept;
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { Reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int Release();
  void Reset(int fd = -1);

 private:
  int fd_ = -1;
};

// Binds and listens, replacing any stale socket file.  Throws HarnessError.
Fd Listen(const std::string& path, int backlog = 16);

// Invalid Fd when the listening socket was shut down.
Fd Accept(int listen_fd);

// Throws HarnessError when nobody listens.
Fd Connect(const std::string& path);

// Retries until the deadline; servers need a moment to bind after spawn.
Fd ConnectWithRetry(const std::string& path, int timeout_ms);

// Wakes a blocked Accept/read on this socket.
void ShutdownBoth(int fd);

// true when readable before the timeout.  Throws HarnessError.
bool WaitReadable(int fd, int timeout_ms);

// 0 means EOF (a reset peer counts as EOF).  Throws HarnessError on
// anything else unexpected.
size_t ReadSome(int fd, uint8_t* buf, size_t n);

// Reads until n bytes or EOF; returns the byte count actually read.
size_t ReadFully(int fd, uint8_t* buf, size_t n);

// false when the peer is gone.  Throws HarnessError on other failures.
bool WriteAll(int fd, const uint8_t* data, size_t n);
bool WriteAll(int fd, const std::vector<uint8_t>& bytes);
bool WriteAll(int fd, const std::string& text);

// Extracts one transaction frame from the stream without decoding the
// payload values, so undecodable frames can still be relayed verbatim.
struct FrameRead {
  enum class Status {
    kFrame,    // bytes holds one whole frame
    kEof,      // clean close before any byte
    kGarbage,  // header did not parse or the stream ended mid-frame;
               // bytes holds whatever was read
  };
  Status status = Status::kEof;
  std::vector<uint8_t> bytes;
};

FrameRead ReadFrameBytes(int fd);

}  // namespace sirfit::net

#endif  // SIRFIT_NET_HPP

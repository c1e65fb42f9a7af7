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

#include "sirfit/net.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "sirfit/errors.hpp"
#include "sirfit/wire.hpp"

namespace sirfit::net {

namespace {

std::string Errno(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

sockaddr_un MakeAddress(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) {
    throw HarnessError("socket path too long: " + path);
  }
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

}  // namespace

Fd& Fd::operator=(Fd&& other) noexcept {
  if (this != &other) {
    Reset(other.fd_);
    other.fd_ = -1;
  }
  return *this;
}

int Fd::Release() {
  int fd = fd_;
  fd_ = -1;
  return fd;
}

void Fd::Reset(int fd) {
  if (fd_ >= 0) ::close(fd_);
  fd_ = fd;
}

Fd Listen(const std::string& path, int backlog) {
  // Close-on-exec everywhere: stack children are spawned via exec and must
  // not inherit harness sockets.
  Fd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd.valid()) throw HarnessError(Errno("socket"));
  sockaddr_un addr = MakeAddress(path);
  ::unlink(path.c_str());
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw HarnessError(Errno("bind " + path));
  }
  if (::listen(fd.get(), backlog) != 0) {
    throw HarnessError(Errno("listen " + path));
  }
  return fd;
}

Fd Accept(int listen_fd) {
  for (;;) {
    int fd = ::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) return Fd(fd);
    if (errno == EINTR) continue;
    return Fd();  // listener shut down or closed
  }
}

Fd Connect(const std::string& path) {
  Fd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd.valid()) throw HarnessError(Errno("socket"));
  sockaddr_un addr = MakeAddress(path);
  if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) !=
      0) {
    throw HarnessError(Errno("connect " + path));
  }
  return fd;
}

Fd ConnectWithRetry(const std::string& path, int timeout_ms) {
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(timeout_ms);
  for (;;) {
    try {
      return Connect(path);
    } catch (const HarnessError&) {
      if (std::chrono::steady_clock::now() >= deadline) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
}

void ShutdownBoth(int fd) {
  if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

bool WaitReadable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  for (;;) {
    int rc = ::poll(&p, 1, timeout_ms);
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) throw HarnessError(Errno("poll"));
  }
}

size_t ReadSome(int fd, uint8_t* buf, size_t n) {
  for (;;) {
    ssize_t rc = ::read(fd, buf, n);
    if (rc >= 0) return static_cast<size_t>(rc);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    throw HarnessError(Errno("read"));
  }
}

size_t ReadFully(int fd, uint8_t* buf, size_t n) {
  size_t off = 0;
  while (off < n) {
    size_t rc = ReadSome(fd, buf + off, n - off);
    if (rc == 0) break;
    off += rc;
  }
  return off;
}

bool WriteAll(int fd, const uint8_t* data, size_t n) {
  size_t off = 0;
  while (off < n) {
    ssize_t rc = ::send(fd, data + off, n - off, MSG_NOSIGNAL);
    if (rc < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) return false;
      throw HarnessError(Errno("write"));
    }
    off += static_cast<size_t>(rc);
  }
  return true;
}

bool WriteAll(int fd, const std::vector<uint8_t>& bytes) {
  return WriteAll(fd, bytes.data(), bytes.size());
}

bool WriteAll(int fd, const std::string& text) {
  return WriteAll(fd, reinterpret_cast<const uint8_t*>(text.data()),
                  text.size());
}

FrameRead ReadFrameBytes(int fd) {
  FrameRead out;
  out.bytes.resize(wire::kHeaderSize);
  size_t got = ReadFully(fd, out.bytes.data(), wire::kHeaderSize);
  if (got == 0) {
    out.status = FrameRead::Status::kEof;
    out.bytes.clear();
    return out;
  }
  out.status = FrameRead::Status::kGarbage;  // until proven whole
  out.bytes.resize(got);
  if (got < wire::kHeaderSize) return out;
  if (std::memcmp(out.bytes.data(), wire::kMagic, 4) != 0 ||
      out.bytes[4] != wire::kVersion) {
    return out;
  }
  uint16_t count = static_cast<uint16_t>(out.bytes[10]) |
                   static_cast<uint16_t>(out.bytes[11]) << 8;
  if (count > wire::kMaxFields) return out;
  for (uint16_t i = 0; i < count; ++i) {
    size_t base = out.bytes.size();
    out.bytes.resize(base + 7);
    size_t header_got = ReadFully(fd, out.bytes.data() + base, 7);
    if (header_got < 7) {
      out.bytes.resize(base + header_got);
      return out;
    }
    uint32_t len = static_cast<uint32_t>(out.bytes[base + 3]) |
                   static_cast<uint32_t>(out.bytes[base + 4]) << 8 |
                   static_cast<uint32_t>(out.bytes[base + 5]) << 16 |
                   static_cast<uint32_t>(out.bytes[base + 6]) << 24;
    if (len > wire::kMaxBlobBytes) return out;
    size_t payload = out.bytes.size();
    out.bytes.resize(payload + len);
    size_t payload_got = ReadFully(fd, out.bytes.data() + payload, len);
    if (payload_got < len) {
      out.bytes.resize(payload + payload_got);
      return out;
    }
  }
  out.status = FrameRead::Status::kFrame;
  return out;
}

}  // namespace sirfit::net

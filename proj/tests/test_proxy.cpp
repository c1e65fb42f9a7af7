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

#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sirfit/errors.hpp"
#include "sirfit/inject.hpp"
#include "sirfit/model.hpp"
#include "sirfit/net.hpp"
#include "sirfit/protocol.hpp"
#include "sirfit/proxy.hpp"
#include "sirfit/rng.hpp"
#include "sirfit/wire.hpp"

using namespace sirfit;
using namespace std::chrono;

namespace {

std::string SockPath(const std::string& tag) {
  static std::atomic<int> counter{0};
  return "/tmp/sirfit_t_" + std::to_string(::getpid()) + "_" + tag + "_" +
         std::to_string(counter++) + ".sock";
}

// Echoes every byte back on the same connection and keeps a transcript.
class EchoServer {
 public:
  explicit EchoServer(const std::string& path)
      : listener_(net::Listen(path)) {
    acceptor_ = std::thread([this] { Loop(); });
  }
  ~EchoServer() { Stop(); }

  void Stop() {
    if (stopped_.exchange(true)) return;
    net::ShutdownBoth(listener_.get());
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (int fd : live_) net::ShutdownBoth(fd);
    }
    if (acceptor_.joinable()) acceptor_.join();
    for (std::thread& t : workers_) {
      if (t.joinable()) t.join();
    }
  }

  std::vector<uint8_t> Received() {
    std::lock_guard<std::mutex> lock(mu_);
    return received_;
  }

 private:
  void Loop() {
    for (;;) {
      net::Fd conn = net::Accept(listener_.get());
      if (!conn.valid()) return;
      std::lock_guard<std::mutex> lock(mu_);
      int fd = conn.Release();
      live_.push_back(fd);
      workers_.emplace_back([this, fd] {
        std::vector<uint8_t> buf(4096);
        for (;;) {
          size_t got = net::ReadSome(fd, buf.data(), buf.size());
          if (got == 0) break;
          {
            std::lock_guard<std::mutex> lock2(mu_);
            received_.insert(received_.end(), buf.begin(), buf.begin() + got);
          }
          if (!net::WriteAll(fd, buf.data(), got)) break;
        }
        ::close(fd);
      });
    }
  }

  net::Fd listener_;
  std::thread acceptor_;
  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::vector<int> live_;
  std::vector<uint8_t> received_;
  std::atomic<bool> stopped_{false};
};

proxy::ChannelBinding FrameBinding() {
  proxy::ChannelBinding b;
  b.framing = proxy::Framing::kFrame;
  b.component = "svc";
  b.interface_name = "api";
  b.ops_by_code = {{7, "call"}, {9, "slow"}};
  return b;
}

proxy::ChannelBinding AtBinding() {
  proxy::ChannelBinding b;
  b.framing = proxy::Framing::kAtLine;
  b.component = "modem";
  b.interface_name = "at-device";
  b.forward_op = "write";
  b.backward_op = "read";
  b.path_hint = "/dev/ttyS0";
  return b;
}

model::FaultSpec ProxySpec(const std::string& op, model::FailureMode mode,
                           model::InjectionAction action,
                           std::vector<model::Filter> filters,
                           const std::string& component = "svc",
                           const std::string& iface = "api") {
  model::FaultSpec s;
  s.id = component + "/" + iface + "." + op + "/test";
  s.component = component;
  s.target =
      model::TargetRef::Operation(iface, op, model::ChannelKind::kLocalSocket);
  s.mode = mode;
  s.persistence = model::Persistence::kPermanent;
  s.question = "S1";
  s.action = action;
  s.filters = std::move(filters);
  return s;
}

std::vector<uint8_t> RequestBytes(uint32_t code, int32_t value) {
  wire::Transaction t;
  t.code = code;
  t.fields = {wire::Field{1, value}};
  return wire::Encode(t);
}

// One frame back from the proxy, or nullopt on timeout/EOF.
std::optional<wire::Transaction> ReadReply(int fd, int timeout_ms = 2000) {
  if (!net::WaitReadable(fd, timeout_ms)) return std::nullopt;
  net::FrameRead fr = net::ReadFrameBytes(fd);
  if (fr.status != net::FrameRead::Status::kFrame) return std::nullopt;
  auto decoded = wire::Decode(fr.bytes);
  auto* t = std::get_if<wire::Transaction>(&decoded);
  if (t == nullptr) return std::nullopt;
  return *t;
}

}  // namespace

TEST_CASE("pass-through relays a thousand frames byte-identically and fast") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(1);  // armed with nothing
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();

  net::Fd client = net::ConnectWithRetry(px_path, 2000);
  Rng rng(2026);
  std::vector<uint8_t> sent;
  std::vector<uint8_t> got_back;
  std::vector<double> rtt_ms;

  for (int i = 0; i < 1000; ++i) {
    wire::Transaction t;
    t.code = 7;  // a mapped op: the decode/decide path must still be clean
    t.flags = static_cast<uint8_t>(rng.Next());
    t.fields = {wire::Field{1, static_cast<int32_t>(rng.Next())},
                wire::Field{2, std::string("payload-") + std::to_string(i)}};
    std::vector<uint8_t> bytes = wire::Encode(t);
    sent.insert(sent.end(), bytes.begin(), bytes.end());

    auto t0 = steady_clock::now();
    REQUIRE(net::WriteAll(client.get(), bytes));
    net::FrameRead fr = net::ReadFrameBytes(client.get());
    auto t1 = steady_clock::now();
    REQUIRE(fr.status == net::FrameRead::Status::kFrame);
    got_back.insert(got_back.end(), fr.bytes.begin(), fr.bytes.end());
    rtt_ms.push_back(duration<double, std::milli>(t1 - t0).count());
  }

  CHECK(got_back == sent);
  CHECK(upstream.Received() == sent);
  CHECK(controller.InjectionCount() == 0);

  std::sort(rtt_ms.begin(), rtt_ms.end());
  double median = rtt_ms[rtt_ms.size() / 2];
  CAPTURE(median);
  CHECK(median < 1.0);  // full round trip bounds the added latency

  px.Stop();
}

TEST_CASE("undecodable but framed bytes pass through verbatim") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(1);
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  // Valid framing, invalid content: unknown field kind 9.
  std::vector<uint8_t> weird = RequestBytes(7, 42);
  weird[wire::kHeaderSize + 2] = 9;
  REQUIRE(net::WriteAll(client.get(), weird));
  REQUIRE(net::WaitReadable(client.get(), 2000));
  net::FrameRead fr = net::ReadFrameBytes(client.get());
  REQUIRE(fr.status == net::FrameRead::Status::kFrame);
  CHECK(fr.bytes == weird);

  px.Stop();
}

TEST_CASE("non-frame streams degrade to a raw byte relay") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(1);
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  std::string garbage = "definitely not a frame, just bytes\n";
  REQUIRE(net::WriteAll(client.get(), garbage));
  std::string echoed;
  while (echoed.size() < garbage.size()) {
    REQUIRE(net::WaitReadable(client.get(), 2000));
    std::vector<uint8_t> buf(256);
    size_t got = net::ReadSome(client.get(), buf.data(), buf.size());
    REQUIRE(got > 0);
    echoed.append(reinterpret_cast<const char*>(buf.data()), got);
  }
  CHECK(echoed == garbage);

  px.Stop();
}

TEST_CASE("permanent error fault answers matching requests in-band") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(5);
  controller.Arm({ProxySpec(
      "call", model::FailureMode::kAvailability,
      model::InjectionAction::ReturnError(model::SymbolicError::kEio),
      {model::Filter::Probability(1.0)})});
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  for (int i = 0; i < 10; ++i) {
    REQUIRE(net::WriteAll(client.get(), RequestBytes(7, i)));
    auto reply = ReadReply(client.get());
    REQUIRE(reply.has_value());
    CHECK(reply->code == 7);
    CHECK(proto::IsReply(*reply));
    CHECK(proto::Status(*reply) == -5);  // EIO
  }
  // The op with no armed fault flows to the upstream untouched.
  std::vector<uint8_t> other = RequestBytes(9, 5);
  REQUIRE(net::WriteAll(client.get(), other));
  auto echoed = ReadReply(client.get());
  REQUIRE(echoed.has_value());
  CHECK(echoed->code == 9);
  CHECK(!proto::IsReply(*echoed));

  CHECK(upstream.Received() == other);  // injected requests never arrived
  CHECK(controller.InjectionCount() == 10);
  auto log = controller.Log();
  CHECK(log[0].pre_digest == inject::DigestBytes(RequestBytes(7, 0)));
  CHECK(log[0].post_digest != log[0].pre_digest);

  px.Stop();
}

TEST_CASE("denied resources read as lost devices on frame channels") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(5);
  model::FaultSpec deny = ProxySpec(
      "call", model::FailureMode::kResourceManagement,
      model::InjectionAction::DenyResource(model::ResourceKind::kDeviceFile),
      {model::Filter::Probability(1.0)});
  controller.Arm({deny});
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  REQUIRE(net::WriteAll(client.get(), RequestBytes(7, 1)));
  auto reply = ReadReply(client.get());
  REQUIRE(reply.has_value());
  CHECK(proto::Status(*reply) == -19);  // ENODEV

  px.Stop();
}

TEST_CASE("message-pattern filters hit only matching frames") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(5);
  std::string needle = "target-me";
  controller.Arm({ProxySpec(
      "call", model::FailureMode::kAvailability,
      model::InjectionAction::ReturnError(model::SymbolicError::kEio),
      {model::Filter::Probability(1.0),
       model::Filter::MessagePattern(
           std::vector<uint8_t>(needle.begin(), needle.end()))})});
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  int errors = 0;
  int passed = 0;
  for (int i = 0; i < 20; ++i) {
    wire::Transaction t;
    t.code = 7;
    t.fields = {wire::Field{
        1, std::string(i % 3 == 0 ? "please target-me now" : "leave me be")}};
    REQUIRE(net::WriteAll(client.get(), wire::Encode(t)));
    auto reply = ReadReply(client.get());
    REQUIRE(reply.has_value());
    if (proto::IsReply(*reply)) {
      ++errors;
      CHECK(i % 3 == 0);
    } else {
      ++passed;
      CHECK(i % 3 != 0);
    }
  }
  CHECK(errors == 7);
  CHECK(passed == 13);
  CHECK(controller.InjectionCount() == 7);

  px.Stop();
}

TEST_CASE("a delayed connection does not block its neighbors") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(5);
  controller.Arm({ProxySpec("slow", model::FailureMode::kTimeliness,
                            model::InjectionAction::Delay(800),
                            {model::Filter::Probability(1.0)})});
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();

  net::Fd slow_client = net::ConnectWithRetry(px_path, 2000);
  net::Fd fast_client = net::ConnectWithRetry(px_path, 2000);

  auto t0 = steady_clock::now();
  REQUIRE(net::WriteAll(slow_client.get(), RequestBytes(9, 1)));
  REQUIRE(net::WriteAll(fast_client.get(), RequestBytes(7, 2)));

  auto fast_reply = ReadReply(fast_client.get());
  auto fast_ms = duration<double, std::milli>(steady_clock::now() - t0).count();
  auto slow_reply = ReadReply(slow_client.get(), 5000);
  auto slow_ms = duration<double, std::milli>(steady_clock::now() - t0).count();

  REQUIRE(fast_reply.has_value());
  REQUIRE(slow_reply.has_value());
  CAPTURE(fast_ms);
  CAPTURE(slow_ms);
  CHECK(fast_ms < 400.0);
  CHECK(slow_ms >= 800.0);

  px.Stop();
}

TEST_CASE("stalled deliveries park until teardown") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(5);
  controller.Arm({ProxySpec("call", model::FailureMode::kTimeliness,
                            model::InjectionAction::Stall(),
                            {model::Filter::Probability(1.0)})});
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  REQUIRE(net::WriteAll(client.get(), RequestBytes(7, 1)));
  CHECK(!net::WaitReadable(client.get(), 300));  // nothing ever comes
  CHECK(controller.InjectionCount() == 1);

  px.Stop();  // must unpark and finish promptly; doctest would hang otherwise
  uint8_t b;
  CHECK(net::ReadFully(client.get(), &b, 1) == 0);  // torn down
}

TEST_CASE("upstream loss propagates to the client") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  auto upstream = std::make_unique<EchoServer>(up_path);
  inject::InjectionController controller(5);
  proxy::Proxy px(px_path, up_path, FrameBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  REQUIRE(net::WriteAll(client.get(), RequestBytes(7, 1)));
  REQUIRE(ReadReply(client.get()).has_value());

  upstream->Stop();  // connection dies under the proxy
  uint8_t b;
  CHECK(net::ReadFully(client.get(), &b, 1) == 0);

  // A fresh client cannot reach the dead upstream: immediate close.
  net::Fd orphan = net::ConnectWithRetry(px_path, 2000);
  CHECK(net::ReadFully(orphan.get(), &b, 1) == 0);

  px.Stop();
}

TEST_CASE("modem line corruption rewrites codes in flight") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(7);
  model::FaultSpec spec = ProxySpec(
      "read", model::FailureMode::kOutputValue,
      model::InjectionAction::CorruptPayload(
          "code", corrupt::Pattern::Of(corrupt::PatternKind::kSubstringReplace)),
      {model::Filter::Probability(1.0)}, "modem", "at-device");
  spec.target = model::TargetRef::Operation("at-device", "read",
                                            model::ChannelKind::kDeviceFile);
  controller.Arm({spec});
  proxy::Proxy px(px_path, up_path, AtBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  // The echo sends our own line back; the backward leg is the read op.
  const std::string sent = "+CREG:1,5\n";
  REQUIRE(net::WriteAll(client.get(), sent));
  REQUIRE(net::WaitReadable(client.get(), 2000));
  std::vector<uint8_t> buf(256);
  size_t got = net::ReadSome(client.get(), buf.data(), buf.size());
  std::string line(reinterpret_cast<const char*>(buf.data()), got);
  CHECK(line.size() == sent.size());
  CHECK(line != sent);
  CHECK(line.substr(line.find(':')) == ":1,5\n");  // params untouched
  CHECK(upstream.Received() ==
        std::vector<uint8_t>(sent.begin(), sent.end()));

  SUBCASE("corruption is reproducible for a fixed seed") {
    CHECK(controller.InjectionCount() == 1);
  }

  px.Stop();
}

TEST_CASE("dropped modem events never arrive") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(7);
  model::FaultSpec spec = ProxySpec(
      "read", model::FailureMode::kOutputValue,
      model::InjectionAction::DropMessage(), {model::Filter::Probability(1.0)},
      "modem", "at-device");
  spec.target = model::TargetRef::Operation("at-device", "read",
                                            model::ChannelKind::kDeviceFile);
  controller.Arm({spec});
  proxy::Proxy px(px_path, up_path, AtBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  REQUIRE(net::WriteAll(client.get(), std::string("RING\nRING\n")));
  CHECK(!net::WaitReadable(client.get(), 400));
  CHECK(upstream.Received().size() == 10);  // forward leg was untouched
  CHECK(controller.InjectionCount() == 2);

  px.Stop();
}

TEST_CASE("error faults on device streams abort the stream") {
  std::string up_path = SockPath("echo");
  std::string px_path = SockPath("px");
  EchoServer upstream(up_path);
  inject::InjectionController controller(7);
  model::FaultSpec spec = ProxySpec(
      "read", model::FailureMode::kAvailability,
      model::InjectionAction::ReturnError(model::SymbolicError::kEio),
      {model::Filter::Probability(1.0)}, "modem", "at-device");
  spec.target = model::TargetRef::Operation("at-device", "read",
                                            model::ChannelKind::kDeviceFile);
  controller.Arm({spec});
  proxy::Proxy px(px_path, up_path, AtBinding(), &controller);
  px.Start();
  net::Fd client = net::ConnectWithRetry(px_path, 2000);

  REQUIRE(net::WriteAll(client.get(), std::string("OK\n")));
  uint8_t b;
  CHECK(net::ReadFully(client.get(), &b, 1) == 0);  // device is gone
  CHECK(controller.InjectionCount() == 1);

  px.Stop();
}

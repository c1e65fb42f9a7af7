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
// One stack process, driven by the config file the harness wrote.  A child
// hosts its services on dedicated threads, serves the harness control
// socket, instruments its in-process call points, and applies its
// robustness handlers when a dependency misbehaves.
//
// Failure handling is the experiment's subject, so the rules are strict:
// an unhandled dependency failure logs "FATAL EXCEPTION" and terminates
// the whole process (every co-hosted service shares that fate);
// catch-and-report logs at fatal severity and propagates an error;
// catch-and-recover logs a warning and substitutes a fallback.

#include <sys/prctl.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <csignal>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sirfit/corrupt.hpp"
#include "sirfit/errors.hpp"
#include "sirfit/inject.hpp"
#include "sirfit/logline.hpp"
#include "sirfit/model.hpp"
#include "sirfit/net.hpp"
#include "sirfit/protocol.hpp"
#include "sirfit/target.hpp"
#include "sirfit/target_msgs.hpp"
#include "sirfit/wire.hpp"

namespace sirfit::target {

namespace {

using nlohmann::json;

int64_t NowMs() { return NowEpochMs(); }

void SleepMs(int64_t ms) {
  std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

// --- Config ------------------------------------------------------------------

struct ChildChannel {
  std::string name;
  proxy::Framing framing = proxy::Framing::kFrame;
  std::string component;
  std::string interface_name;
  std::vector<ChannelOp> ops;
  std::string forward_op;
  std::string backward_op;
  std::string client_socket;  // proxied path this process connects to
  std::string real_socket;    // nonempty when this process hosts the endpoint
};

struct ChildConfig {
  std::string process;
  std::vector<std::string> services;
  std::vector<std::string> actions;
  std::map<std::string, Handler> handlers;
  std::string log_path;
  std::string injection_log_path;
  std::string control_socket;
  std::string state_dir;
  uint64_t seed = 1;
  int32_t harness_pid = 0;
  StackSettings settings;
  std::string lifecycle_point;
  std::vector<std::string> registry_points;
  std::vector<model::FaultSpec> armed;
  std::vector<ChildChannel> channels;
};

ChildConfig ParseChildConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open child config " + path);
  std::ostringstream os;
  os << in.rdbuf();
  json root = json::parse(os.str());

  ChildConfig cfg;
  cfg.process = root.at("process").get<std::string>();
  for (const json& s : root.at("services")) {
    cfg.services.push_back(s.get<std::string>());
  }
  for (const json& a : root.at("actions")) {
    cfg.actions.push_back(a.get<std::string>());
  }
  for (auto it = root.at("handlers").begin(); it != root.at("handlers").end();
       ++it) {
    cfg.handlers[it.key()] = HandlerFromName(it.value().get<std::string>());
  }
  cfg.log_path = root.at("log_path").get<std::string>();
  cfg.injection_log_path = root.at("injection_log_path").get<std::string>();
  cfg.control_socket = root.at("control_socket").get<std::string>();
  cfg.state_dir = root.at("state_dir").get<std::string>();
  cfg.seed = root.at("seed").get<uint64_t>();
  cfg.harness_pid = root.at("harness_pid").get<int32_t>();
  const json& s = root.at("settings");
  cfg.settings.anr_threshold_ms = s.at("anr_threshold_ms").get<int64_t>();
  cfg.settings.watchdog_poll_ms = s.at("watchdog_poll_ms").get<int64_t>();
  cfg.settings.rpc_timeout_ms = s.at("rpc_timeout_ms").get<int64_t>();
  cfg.settings.baseband_event_interval_ms =
      s.at("baseband_event_interval_ms").get<int64_t>();
  cfg.settings.listen_backlog = s.at("listen_backlog").get<int>();
  cfg.lifecycle_point = root.at("lifecycle_point").get<std::string>();
  for (const json& p : root.at("registry_points")) {
    cfg.registry_points.push_back(p.get<std::string>());
  }
  if (root.contains("armed_model") && !root.at("armed_model").is_null()) {
    model::FaultModel armed = model::ImportFaultModel(root.at("armed_model").dump());
    cfg.armed = std::move(armed.faults);
  }
  for (const json& c : root.at("channels")) {
    ChildChannel ch;
    ch.name = c.at("name").get<std::string>();
    ch.framing = proxy::FramingFromName(c.at("framing").get<std::string>());
    ch.component = c.at("component").get<std::string>();
    ch.interface_name = c.at("interface").get<std::string>();
    for (const json& o : c.at("ops")) {
      ch.ops.push_back(ChannelOp{o.at("code").get<uint32_t>(),
                                 o.at("name").get<std::string>()});
    }
    ch.forward_op = c.at("forward_op").get<std::string>();
    ch.backward_op = c.at("backward_op").get<std::string>();
    ch.client_socket = c.at("client_socket").get<std::string>();
    ch.real_socket = c.at("real_socket").get<std::string>();
    cfg.channels.push_back(std::move(ch));
  }
  return cfg;
}

// --- Shared process context --------------------------------------------------

class ChildContext {
 public:
  explicit ChildContext(ChildConfig cfg)
      : cfg_(std::move(cfg)),
        log_(cfg_.log_path, static_cast<int32_t>(::getpid())),
        controller_(cfg_.seed) {
    for (const std::string& point : cfg_.registry_points) {
      registry_.DeclarePoint(point);
      hooks_.push_back(registry_.Install(point, &controller_));
    }
    if (!cfg_.lifecycle_point.empty()) {
      registry_.DeclarePoint(cfg_.lifecycle_point);
      hooks_.push_back(registry_.Install(cfg_.lifecycle_point, &controller_));
    }
    if (!cfg_.armed.empty()) controller_.Arm(cfg_.armed);
  }

  const ChildConfig& cfg() const { return cfg_; }
  LogWriter& log() { return log_; }
  inject::InjectionController& controller() { return controller_; }

  const ChildChannel* Channel(const std::string& name) const {
    for (const ChildChannel& c : cfg_.channels) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  uint32_t OpCode(const std::string& channel, const std::string& op) const {
    const ChildChannel* c = Channel(channel);
    if (c != nullptr) {
      for (const ChannelOp& o : c->ops) {
        if (o.name == op) return o.code;
      }
    }
    throw HarnessError("no code for " + channel + "." + op);
  }

  Handler HandlerFor(const std::string& service) const {
    auto it = cfg_.handlers.find(service);
    if (it == cfg_.handlers.end()) return Handler::kUnhandled;
    return it->second;
  }

  // RPC deadline a service with this handler applies to its dependencies.
  // Unhandled callers wait forever, which is what makes stalls wedge them.
  int64_t CallTimeout(const std::string& service) const {
    return HandlerFor(service) == Handler::kUnhandled
               ? 0
               : cfg_.settings.rpc_timeout_ms;
  }

  // Replaces the armed registry entries.
  void Arm(std::vector<model::FaultSpec> specs) {
    controller_.Arm(std::move(specs));
  }
  void Disarm() { controller_.Disarm(); }

  // Consults an instrumented call point and persists any new evidence.
  std::optional<inject::HookRegistry::CallResult> Hooked(
      const std::string& point, const std::string& path_hint = "") {
    auto result = registry_.OnCall(point, path_hint);
    FlushInjections();
    return result;
  }

  // Appends controller records the file has not seen yet.  Children write
  // whole lines to an O_APPEND fd so harness-side readers never see torn
  // records.
  void FlushInjections() {
    std::lock_guard<std::mutex> lock(flush_mu_);
    std::vector<inject::InjectionRecord> records = controller_.Log();
    if (records.size() <= flushed_) return;
    std::string out;
    for (size_t i = flushed_; i < records.size(); ++i) {
      out += inject::RecordToJsonLine(records[i]);
      out += '\n';
    }
    std::ofstream f(cfg_.injection_log_path, std::ios::app | std::ios::binary);
    f << out;
    f.flush();
    flushed_ = records.size();
  }

  // The three robustness behaviors.  kUnhandled never returns.
  enum class Course { kRecovered, kReported };
  Course Fail(const std::string& service, const std::string& detail) {
    switch (HandlerFor(service)) {
      case Handler::kUnhandled:
        Crash(service, detail);
      case Handler::kCatchAndReport:
        log_.Write(Severity::kFatal, service, detail);
        return Course::kReported;
      case Handler::kCatchAndRecover:
        log_.Write(Severity::kWarn, service, detail + ", recovering");
        return Course::kRecovered;
    }
    return Course::kReported;
  }

  [[noreturn]] void Crash(const std::string& service,
                          const std::string& detail) {
    log_.Write(Severity::kError, "runtime",
               "FATAL EXCEPTION: " + detail + " in " + service);
    std::_Exit(1);
  }

 private:
  ChildConfig cfg_;
  LogWriter log_;
  inject::InjectionController controller_;
  inject::HookRegistry registry_;
  std::vector<inject::HookRegistry::Hook> hooks_;
  std::mutex flush_mu_;
  size_t flushed_ = 0;
};

// Applies a hooked call result that is not a plain failure.  Returns true
// when the action was consumed (delay slept, stall parked forever never
// returns); false when the caller should treat it as a denial.
bool ConsumeTimingAction(const inject::HookRegistry::CallResult& r) {
  switch (r.action.kind) {
    case model::ActionKind::kDelay:
      SleepMs(r.action.duration_ms);
      return true;
    case model::ActionKind::kStall:
      for (;;) SleepMs(1000);
    default:
      return false;
  }
}

// --- Frame service scaffolding ----------------------------------------------

// One listener, one thread, connections handled to completion in order.
// Sequential handling is deliberate: a stalled request wedges the service
// the way a stuck binder thread would.
class FrameServer {
 public:
  FrameServer(ChildContext& ctx, std::string name, const std::string& path,
              std::function<wire::Transaction(const wire::Transaction&)> handle)
      : ctx_(ctx), name_(std::move(name)), handle_(std::move(handle)) {
    listener_ = net::Listen(path, ctx.cfg().settings.listen_backlog);
    thread_ = std::thread([this] { Serve(); });
  }

  ~FrameServer() {
    // Children exit via _Exit; the thread is never joined in practice.
    thread_.detach();
  }

 private:
  void Serve() {
    for (;;) {
      net::Fd conn = net::Accept(listener_.get());
      if (!conn.valid()) return;
      for (;;) {
        net::FrameRead read = net::ReadFrameBytes(conn.get());
        if (read.status != net::FrameRead::Status::kFrame) break;
        wire::DecodeResult decoded = wire::Decode(read.bytes);
        if (!std::holds_alternative<wire::Transaction>(decoded)) break;
        const auto& request = std::get<wire::Transaction>(decoded);
        wire::Transaction reply = handle_(request);
        if (!net::WriteAll(conn.get(), wire::Encode(reply))) break;
      }
    }
  }

  ChildContext& ctx_;
  std::string name_;
  std::function<wire::Transaction(const wire::Transaction&)> handle_;
  net::Fd listener_;
  std::thread thread_;
};

// --- Baseband ---------------------------------------------------------------

// The fake modem: answers AT commands and pushes a scripted event stream.
// Lives on the real side of the at channel, inside the rild process (they
// die together, like a modem losing its host daemon).
class Baseband {
 public:
  Baseband(ChildContext& ctx, const std::string& path) : ctx_(ctx) {
    listener_ = net::Listen(path, 4);
    thread_ = std::thread([this] { Serve(); });
  }
  ~Baseband() { thread_.detach(); }

 private:
  void Serve() {
    for (;;) {
      net::Fd conn = net::Accept(listener_.get());
      if (!conn.valid()) return;
      ServeConnection(conn);
    }
  }

  void ServeConnection(net::Fd& conn) {
    const int64_t interval = ctx_.cfg().settings.baseband_event_interval_ms;
    int64_t next_event = NowMs() + interval;
    std::string buffer;
    uint64_t event_no = 0;
    for (;;) {
      int64_t wait = std::max<int64_t>(1, next_event - NowMs());
      if (net::WaitReadable(conn.get(), wait)) {
        uint8_t chunk[512];
        size_t got = net::ReadSome(conn.get(), chunk, sizeof(chunk));
        if (got == 0) return;
        buffer.append(reinterpret_cast<char*>(chunk), got);
        size_t pos;
        while ((pos = buffer.find('\n')) != std::string::npos) {
          std::string line = buffer.substr(0, pos);
          buffer.erase(0, pos + 1);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (!HandleCommand(conn, line)) return;
        }
      }
      if (NowMs() >= next_event) {
        if (!SendLine(conn, ScriptedEvent(event_no++))) return;
        next_event += interval;
      }
    }
  }

  bool HandleCommand(net::Fd& conn, const std::string& line) {
    wire::AtResult decoded = wire::DecodeAt(line);
    const auto* cmd = std::get_if<wire::AtMessage>(&decoded);
    if (cmd == nullptr || cmd->kind != wire::AtKind::kCommand) {
      return SendLine(conn, "ERROR");
    }
    if (cmd->code == "D") {
      // Dialing "takes" a moment of modem work.
      SleepMs(5);
      return SendLine(conn, "OK");
    }
    if (cmd->code == "+CPAS") {
      wire::AtMessage reply;
      reply.kind = wire::AtKind::kEvent;
      reply.code = "+CPAS";
      reply.params = {"0"};
      return SendLine(conn, wire::EncodeAt(reply));
    }
    return SendLine(conn, "ERROR");
  }

  std::string ScriptedEvent(uint64_t n) {
    switch (n % 4) {
      case 0:
        return "+CREG:1,5";
      case 1:
        return "RING";
      case 2:
        return "+CREG:1,6";
      default:
        return "+CREG:2,5";
    }
  }

  bool SendLine(net::Fd& conn, const std::string& line) {
    return net::WriteAll(conn.get(), line + "\n");
  }

  ChildContext& ctx_;
  net::Fd listener_;
  std::thread thread_;
};

// --- AT link (rild side) -----------------------------------------------------

// rild's persistent connection to the modem.  One command in flight at a
// time; unsolicited events are dispatched as they arrive.  Every line that
// does not fit the protocol goes through the rild robustness handler.
class AtLink {
 public:
  AtLink(ChildContext& ctx, std::string path) : ctx_(ctx), path_(std::move(path)) {
    Connect(/*initial=*/true);
    reader_ = std::thread([this] { ReadLoop(); });
  }
  ~AtLink() { reader_.detach(); }

  // Sends one command and waits for its terminal line ("OK"/"ERROR" or the
  // named report code).  timeout_ms 0 waits forever.
  struct Outcome {
    bool ok = false;
    std::string code;                 // terminal line code
    std::vector<std::string> params;  // report params when any
    std::string error;                // nonempty on link trouble
  };

  Outcome Transact(const wire::AtMessage& command, const std::string& report_code,
                   int64_t timeout_ms) {
    std::unique_lock<std::mutex> lock(mu_);
    if (!link_up_) return Outcome{false, "", {}, "baseband link down"};
    pending_active_ = true;
    pending_report_code_ = report_code;
    pending_result_.reset();
    std::string encoded = wire::EncodeAt(command) + "\n";
    if (!net::WriteAll(fd_.get(), encoded)) {
      pending_active_ = false;
      return Outcome{false, "", {}, "baseband write failed"};
    }
    auto ready = [this] { return pending_result_.has_value() || !link_up_; };
    if (timeout_ms > 0) {
      if (!cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), ready)) {
        pending_active_ = false;
        return Outcome{false, "", {}, "baseband reply timed out"};
      }
    } else {
      cv_.wait(lock, ready);
    }
    pending_active_ = false;
    if (!pending_result_.has_value()) {
      return Outcome{false, "", {}, "baseband link down"};
    }
    Outcome out = *pending_result_;
    pending_result_.reset();
    return out;
  }

 private:
  void Connect(bool initial) {
    try {
      fd_ = net::ConnectWithRetry(path_, initial ? 3000 : 500);
      link_up_ = true;
    } catch (const HarnessError&) {
      link_up_ = false;
    }
  }

  void ReadLoop() {
    std::string buffer;
    for (;;) {
      uint8_t chunk[512];
      size_t got = link_up_ ? net::ReadSome(fd_.get(), chunk, sizeof(chunk)) : 0;
      if (got == 0) {
        OnLinkLost();
        continue;
      }
      buffer.append(reinterpret_cast<char*>(chunk), got);
      size_t pos;
      while ((pos = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, pos);
        buffer.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        HandleLine(line);
      }
    }
  }

  void OnLinkLost() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      link_up_ = false;
    }
    cv_.notify_all();
    // Unhandled rild treats a dead modem as fatal; graceful rild keeps
    // trying to get it back.
    ctx_.Fail("rild", "baseband connection lost");
    SleepMs(400);
    std::lock_guard<std::mutex> lock(mu_);
    Connect(/*initial=*/false);
  }

  void HandleLine(const std::string& line) {
    wire::AtResult decoded = wire::DecodeAt(line);
    const auto* msg = std::get_if<wire::AtMessage>(&decoded);
    if (msg == nullptr || msg->kind == wire::AtKind::kCommand) {
      ctx_.Fail("rild", "unparseable line from baseband: \"" + line + "\"");
      return;
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (pending_active_ && !pending_result_.has_value()) {
        if (msg->kind == wire::AtKind::kResponse) {
          pending_result_ = Outcome{msg->code == "OK", msg->code, msg->params, ""};
          cv_.notify_all();
          return;
        }
        if (!pending_report_code_.empty() && msg->code == pending_report_code_) {
          pending_result_ = Outcome{true, msg->code, msg->params, ""};
          cv_.notify_all();
          return;
        }
      }
    }
    // Unsolicited traffic.
    if (msg->code == "RING") {
      ctx_.log().Write(Severity::kInfo, "rild", "incoming call signal");
      return;
    }
    if (msg->code == "+CREG") {
      ctx_.log().Write(Severity::kDebug, "rild",
                       "registration update " + line);
      return;
    }
    if (msg->kind == wire::AtKind::kResponse) {
      // Stray OK/ERROR with nothing pending; harmless.
      return;
    }
    ctx_.Fail("rild", "unknown event from baseband: \"" + line + "\"");
  }

  ChildContext& ctx_;
  std::string path_;
  net::Fd fd_;
  std::thread reader_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool link_up_ = false;
  bool pending_active_ = false;
  std::string pending_report_code_;
  std::optional<Outcome> pending_result_;
};

// --- Service implementations -------------------------------------------------

wire::Transaction ListReply(const wire::Transaction& request,
                            const std::vector<std::string>& entries) {
  wire::Transaction reply = proto::MakeReply(request.code);
  uint16_t tag = kTagListBase;
  for (const std::string& e : entries) {
    reply.fields.push_back(wire::Field{tag++, e});
  }
  return reply;
}

class CameraService {
 public:
  CameraService(ChildContext& ctx, const ChildChannel& serve) : ctx_(ctx) {
    take_picture_code_ = 0;
    for (const ChannelOp& op : serve.ops) {
      if (op.name == "take_picture") take_picture_code_ = op.code;
    }
    server_ = std::make_unique<FrameServer>(
        ctx, "camera-service", serve.real_socket,
        [this](const wire::Transaction& t) { return Handle(t); });
  }

 private:
  wire::Transaction Handle(const wire::Transaction& request) {
    if (request.code != take_picture_code_) {
      return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
    }
    ctx_.log().Write(Severity::kDebug, "camera-service", "take_picture request");

    // Frame buffers come from the instrumented heap.
    if (auto hooked = ctx_.Hooked("camera-service/frame-heap")) {
      if (!ConsumeTimingAction(*hooked)) {
        if (ctx_.Fail("camera-service", "frame buffer allocation failed") ==
            ChildContext::Course::kReported) {
          return proto::MakeErrorReply(request.code, model::SymbolicError::kEnomem);
        }
        return FallbackReply(request, "allocation denied, cached frame");
      }
    }

    const ChildChannel* camdev = ctx_.Channel("camdev");
    wire::Transaction read_req;
    read_req.code = ctx_.OpCode("camdev", "read_frame");
    CallResult r = RpcCall(camdev->client_socket, read_req,
                           ctx_.CallTimeout("camera-service"));
    if (r.status == CallStatus::kOk && FrameIntact(r.reply)) {
      wire::Transaction reply = proto::MakeReply(request.code);
      const wire::Field* image = r.reply.FindField(kTagImage);
      reply.fields.push_back(wire::Field{kTagImage, image->value});
      const auto& pixels = std::get<std::vector<uint8_t>>(image->value);
      reply.fields.push_back(wire::Field{
          kTagImageDigest, static_cast<int64_t>(FrameDigest(pixels))});
      return reply;
    }

    std::string detail =
        r.status == CallStatus::kOk
            ? "corrupt frame from camera device"
            : std::string("camera device read failed (") +
                  CallStatusName(r.status) +
                  (r.status == CallStatus::kError
                       ? " " + std::to_string(r.rpc_status)
                       : "") +
                  ")";
    if (ctx_.Fail("camera-service", detail) == ChildContext::Course::kReported) {
      return proto::MakeErrorReply(request.code, model::SymbolicError::kEio);
    }
    return FallbackReply(request, "cached frame substituted");
  }

  wire::Transaction FallbackReply(const wire::Transaction& request,
                                  const std::string& note) {
    ctx_.log().Write(Severity::kInfo, "camera-service", note);
    std::vector<uint8_t> pixels = MakeFramePixels(0);
    wire::Transaction reply = proto::MakeReply(request.code);
    reply.fields.push_back(wire::Field{kTagImage, pixels});
    reply.fields.push_back(
        wire::Field{kTagImageDigest, static_cast<int64_t>(FrameDigest(pixels))});
    return reply;
  }

  ChildContext& ctx_;
  uint32_t take_picture_code_ = 0;
  std::unique_ptr<FrameServer> server_;
};

class ActivityManager {
 public:
  ActivityManager(ChildContext& ctx, const ChildChannel& serve) : ctx_(ctx) {
    for (const ChannelOp& op : serve.ops) {
      if (op.name == "show_activities") show_code_ = op.code;
      if (op.name == "stop_activity") stop_code_ = op.code;
    }
    server_ = std::make_unique<FrameServer>(
        ctx, "activity-manager", serve.real_socket,
        [this](const wire::Transaction& t) { return Handle(t); });
  }

 private:
  wire::Transaction Handle(const wire::Transaction& request) {
    if (request.code == show_code_) {
      ctx_.log().Write(Severity::kDebug, "activity-manager", "show_activities");
      return ListReply(request, {"home", "camera", "dialer", "settings"});
    }
    if (request.code == stop_code_) {
      std::string activity = "unknown";
      if (const wire::Field* f = request.FindField(kTagActivity)) {
        if (const auto* s = std::get_if<std::string>(&f->value)) activity = *s;
      }
      ctx_.log().Write(Severity::kDebug, "activity-manager",
                       "stop_activity " + activity);
      wire::Transaction reply = proto::MakeReply(request.code);
      reply.fields.push_back(wire::Field{kCtlTagDetail, "stopped " + activity});
      return reply;
    }
    return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
  }

  ChildContext& ctx_;
  uint32_t show_code_ = 0;
  uint32_t stop_code_ = 0;
  std::unique_ptr<FrameServer> server_;
};

class PackageManager {
 public:
  PackageManager(ChildContext& ctx, const ChildChannel& serve) : ctx_(ctx) {
    for (const ChannelOp& op : serve.ops) {
      if (op.name == "list_packages") list_code_ = op.code;
    }
    db_path_ = ctx.cfg().state_dir + "/package-db";
    server_ = std::make_unique<FrameServer>(
        ctx, "package-manager", serve.real_socket,
        [this](const wire::Transaction& t) { return Handle(t); });
  }

 private:
  wire::Transaction Handle(const wire::Transaction& request) {
    if (request.code != list_code_) {
      return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
    }
    ctx_.log().Write(Severity::kDebug, "package-manager", "list_packages");

    if (auto hooked = ctx_.Hooked("package-manager/package-db", db_path_)) {
      if (hooked->action.kind == model::ActionKind::kCorruptPayload) {
        CorruptDatabase(*hooked);
      } else if (!ConsumeTimingAction(*hooked)) {
        if (ctx_.Fail("package-manager", "package database access denied") ==
            ChildContext::Course::kReported) {
          return proto::MakeErrorReply(request.code, model::SymbolicError::kEacces);
        }
        return ListReply(request, {});
      }
    }

    std::ifstream in(db_path_, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    std::vector<std::string> names;
    bool malformed = !in.good() && !in.eof();
    std::istringstream lines(os.str());
    std::string line;
    while (std::getline(lines, line)) {
      size_t colon = line.find(':');
      if (line.empty() || colon == std::string::npos || colon == 0 ||
          colon + 1 == line.size() ||
          line.find_first_not_of("0123456789", colon + 1) != std::string::npos) {
        malformed = true;
        break;
      }
      names.push_back(line.substr(0, colon));
    }
    if (malformed) {
      if (ctx_.Fail("package-manager", "package database corrupt") ==
          ChildContext::Course::kReported) {
        return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
      }
      return ListReply(request, {});
    }
    return ListReply(request, names);
  }

  // Realizes file-content corruption: the persistent database itself is
  // rewritten, so the damage survives until a reset restores the snapshot.
  void CorruptDatabase(const inject::HookRegistry::CallResult& r) {
    std::ifstream in(db_path_, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    std::string content = os.str();
    if (content.empty()) return;
    Rng rng = ctx_.controller().CorruptionRng(r.spec_id, r.sequence_no);
    wire::FieldValue value =
        std::vector<uint8_t>(content.begin(), content.end());
    wire::FieldValue mutated =
        r.action.pattern.has_value()
            ? corrupt::Corrupt(value, *r.action.pattern, rng)
            : corrupt::CorruptAuto(value, rng);
    const auto& bytes = std::get<std::vector<uint8_t>>(mutated);
    std::ofstream out(db_path_, std::ios::trunc | std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }

  ChildContext& ctx_;
  uint32_t list_code_ = 0;
  std::string db_path_;
  std::unique_ptr<FrameServer> server_;
};

class SensorsService {
 public:
  SensorsService(ChildContext& ctx, const ChildChannel& serve) : ctx_(ctx) {
    for (const ChannelOp& op : serve.ops) {
      if (op.name == "read_sensor") read_code_ = op.code;
    }
    server_ = std::make_unique<FrameServer>(
        ctx, "sensors-service", serve.real_socket,
        [this](const wire::Transaction& t) { return Handle(t); });
  }

 private:
  wire::Transaction Handle(const wire::Transaction& request) {
    if (request.code != read_code_) {
      return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
    }
    ctx_.log().Write(Severity::kDebug, "sensors-service", "read_sensor");
    const ChildChannel* hub = ctx_.Channel("sensorhub");
    wire::Transaction read_req;
    read_req.code = ctx_.OpCode("sensorhub", "read");
    CallResult r = RpcCall(hub->client_socket, read_req,
                           ctx_.CallTimeout("sensors-service"));
    if (r.status == CallStatus::kOk) {
      // The service is a conduit; readings are passed along untouched and
      // consumers do their own sanity checks.
      if (const wire::Field* f = r.reply.FindField(kTagSensorValue)) {
        if (const auto* v = std::get_if<int64_t>(&f->value)) {
          last_good_ = *v;
          wire::Transaction reply = proto::MakeReply(request.code);
          reply.fields.push_back(wire::Field{kTagSensorValue, *v});
          return reply;
        }
      }
    }
    std::string detail = std::string("sensor hub read failed (") +
                         CallStatusName(r.status) +
                         (r.status == CallStatus::kError
                              ? " " + std::to_string(r.rpc_status)
                              : "") +
                         ")";
    if (ctx_.Fail("sensors-service", detail) == ChildContext::Course::kReported) {
      return proto::MakeErrorReply(request.code, model::SymbolicError::kEio);
    }
    wire::Transaction reply = proto::MakeReply(request.code);
    reply.fields.push_back(wire::Field{kTagSensorValue, last_good_});
    return reply;
  }

  ChildContext& ctx_;
  uint32_t read_code_ = 0;
  int64_t last_good_ = 500;
  std::unique_ptr<FrameServer> server_;
};

class PhoneService {
 public:
  PhoneService(ChildContext& ctx, const ChildChannel& serve, AtLink& link)
      : ctx_(ctx), link_(link) {
    for (const ChannelOp& op : serve.ops) {
      if (op.name == "dial") dial_code_ = op.code;
      if (op.name == "get_state") state_code_ = op.code;
    }
    server_ = std::make_unique<FrameServer>(
        ctx, "rild", serve.real_socket,
        [this](const wire::Transaction& t) { return Handle(t); });
  }

 private:
  wire::Transaction Handle(const wire::Transaction& request) {
    const int64_t timeout = ctx_.CallTimeout("rild");
    if (request.code == dial_code_) {
      std::string number = "5550100";
      if (const wire::Field* f = request.FindField(kTagNumber)) {
        if (const auto* s = std::get_if<std::string>(&f->value)) number = *s;
      }
      ctx_.log().Write(Severity::kDebug, "rild", "dial " + number);
      wire::AtMessage cmd;
      cmd.kind = wire::AtKind::kCommand;
      cmd.code = "D";
      cmd.params = {number};
      AtLink::Outcome out = link_.Transact(cmd, "", timeout);
      if (out.ok) return proto::MakeReply(request.code);
      return FailReply(request, "dial failed: " +
                                    (out.error.empty() ? out.code : out.error));
    }
    if (request.code == state_code_) {
      wire::AtMessage cmd;
      cmd.kind = wire::AtKind::kCommand;
      cmd.code = "+CPAS";
      AtLink::Outcome out = link_.Transact(cmd, "+CPAS", timeout);
      if (out.ok && !out.params.empty()) {
        wire::Transaction reply = proto::MakeReply(request.code);
        reply.fields.push_back(
            wire::Field{kTagPhoneState,
                        static_cast<int64_t>(std::atoll(out.params[0].c_str()))});
        return reply;
      }
      return FailReply(request, "get_state failed: " +
                                    (out.error.empty() ? out.code : out.error));
    }
    return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
  }

  wire::Transaction FailReply(const wire::Transaction& request,
                              const std::string& detail) {
    ctx_.Fail("rild", detail);
    return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
  }

  ChildContext& ctx_;
  AtLink& link_;
  uint32_t dial_code_ = 0;
  uint32_t state_code_ = 0;
  std::unique_ptr<FrameServer> server_;
};

// --- App event loop and watchdog ---------------------------------------------

class App {
 public:
  explicit App(ChildContext& ctx) : ctx_(ctx) {
    last_progress_ms_ = NowMs();
    loop_ = std::thread([this] { Loop(); });
    watchdog_ = std::thread([this] { Watchdog(); });
  }
  ~App() {
    loop_.detach();
    watchdog_.detach();
  }

  // Queues an action onto the event loop and waits for it; a stalled loop
  // keeps the caller waiting, which is exactly what the harness-side
  // timeout and the watchdog are for.
  wire::Transaction Run(const wire::Transaction& request) {
    std::future<wire::Transaction> done;
    {
      std::lock_guard<std::mutex> lock(mu_);
      jobs_.push_back(Job{request, {}});
      done = jobs_.back().result.get_future();
    }
    cv_.notify_one();
    return done.get();
  }

 private:
  struct Job {
    wire::Transaction request;
    std::promise<wire::Transaction> result;
  };

  void Loop() {
    for (;;) {
      std::optional<Job> job;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait_for(lock, std::chrono::milliseconds(100),
                     [this] { return !jobs_.empty(); });
        if (jobs_.empty()) {
          // Idle is progress; only a stuck job freezes the heartbeat.
          last_progress_ms_ = NowMs();
          episode_reported_ = false;
          continue;
        }
        job.emplace(std::move(jobs_.front()));
        jobs_.pop_front();
      }
      wire::Transaction reply = Execute(job->request);
      last_progress_ms_ = NowMs();
      episode_reported_ = false;
      job->result.set_value(std::move(reply));
    }
  }

  void Watchdog() {
    const StackSettings& s = ctx_.cfg().settings;
    for (;;) {
      SleepMs(s.watchdog_poll_ms);
      int64_t silent = NowMs() - last_progress_ms_.load();
      if (silent >= s.anr_threshold_ms && !episode_reported_.exchange(true)) {
        ctx_.log().Write(Severity::kError, "watchdog",
                         "ANR in " + ctx_.cfg().process);
      }
    }
  }

  wire::Transaction Execute(const wire::Transaction& request) {
    std::string action;
    std::string argument;
    if (const wire::Field* f = request.FindField(kCtlTagAction)) {
      if (const auto* s = std::get_if<std::string>(&f->value)) action = *s;
    }
    if (const wire::Field* f = request.FindField(kCtlTagArgument)) {
      if (const auto* s = std::get_if<std::string>(&f->value)) argument = *s;
    }
    const std::string& app = ctx_.cfg().process;
    for (const std::string& known : ctx_.cfg().actions) {
      if (known == action) return Dispatch(request, action, argument);
    }
    ctx_.log().Write(Severity::kWarn, app, "unknown action " + action);
    return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
  }

  wire::Transaction Dispatch(const wire::Transaction& request,
                             const std::string& action,
                             const std::string& argument) {
    if (action == "take_picture") return TakePicture(request);
    if (action == "show_activities") return SimpleList(request, "am", "show_activities");
    if (action == "stop_activity") return StopActivity(request, argument);
    if (action == "dial") return Dial(request, argument);
    if (action == "get_state") return GetState(request);
    if (action == "read_sensor") return ReadSensor(request);
    if (action == "list_packages") return SimpleList(request, "pm", "list_packages");
    return proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
  }

  CallResult Call(const std::string& channel, const std::string& op,
                  std::vector<wire::Field> fields = {}) {
    const ChildChannel* c = ctx_.Channel(channel);
    wire::Transaction req;
    req.code = ctx_.OpCode(channel, op);
    req.fields = std::move(fields);
    return RpcCall(c->client_socket, req, ctx_.CallTimeout(ctx_.cfg().process));
  }

  static std::string Describe(const CallResult& r) {
    std::string out = CallStatusName(r.status);
    if (r.status == CallStatus::kError) {
      out += " " + std::to_string(r.rpc_status);
    }
    return out;
  }

  wire::Transaction ErrorReply(const wire::Transaction& request,
                               const std::string& detail) {
    wire::Transaction reply =
        proto::MakeErrorReply(request.code, model::SymbolicError::kServiceError);
    reply.fields.push_back(wire::Field{kCtlTagDetail, detail});
    return reply;
  }

  wire::Transaction OkReply(const wire::Transaction& request,
                            const std::string& detail) {
    wire::Transaction reply = proto::MakeReply(request.code);
    reply.fields.push_back(wire::Field{kCtlTagDetail, detail});
    return reply;
  }

  wire::Transaction TakePicture(const wire::Transaction& request) {
    const std::string& app = ctx_.cfg().process;
    CallResult r = Call("camera", "take_picture");
    if (r.status == CallStatus::kOk && FrameIntact(r.reply)) {
      wire::Transaction reply = OkReply(request, "captured");
      reply.fields.push_back(
          wire::Field{kCtlTagBlob, r.reply.FindField(kTagImage)->value});
      return reply;
    }
    std::string detail = r.status == CallStatus::kOk
                             ? "corrupt image payload"
                             : "take_picture failed (" + Describe(r) + ")";
    if (ctx_.Fail(app, detail) == ChildContext::Course::kReported) {
      return ErrorReply(request, detail);
    }
    // Recovery: re-bind the service once, then fall back to the cached
    // shot so the user still sees a picture.
    ctx_.log().Write(Severity::kInfo, app,
                     "restarting camera service binding");
    CallResult retry = Call("camera", "take_picture");
    if (retry.status == CallStatus::kOk && FrameIntact(retry.reply)) {
      wire::Transaction reply = OkReply(request, "recovered after restart");
      reply.fields.push_back(
          wire::Field{kCtlTagBlob, retry.reply.FindField(kTagImage)->value});
      return reply;
    }
    ctx_.log().Write(Severity::kWarn, app,
                     "picture unavailable, using cached image");
    wire::Transaction reply = OkReply(request, "recovered-fallback");
    reply.fields.push_back(wire::Field{kCtlTagBlob, MakeFramePixels(0)});
    return reply;
  }

  wire::Transaction SimpleList(const wire::Transaction& request,
                               const std::string& channel,
                               const std::string& op) {
    const std::string& app = ctx_.cfg().process;
    CallResult r = Call(channel, op);
    if (r.status == CallStatus::kOk) {
      int64_t count = 0;
      for (const wire::Field& f : r.reply.fields) {
        if (f.tag >= kTagListBase) ++count;
      }
      wire::Transaction reply = OkReply(request, op + " ok");
      reply.fields.push_back(wire::Field{kCtlTagValue, count});
      return reply;
    }
    std::string detail = op + " failed (" + Describe(r) + ")";
    if (ctx_.Fail(app, detail) == ChildContext::Course::kReported) {
      return ErrorReply(request, detail);
    }
    wire::Transaction reply = OkReply(request, "recovered-empty");
    reply.fields.push_back(wire::Field{kCtlTagValue, int64_t{0}});
    return reply;
  }

  wire::Transaction StopActivity(const wire::Transaction& request,
                                 const std::string& argument) {
    const std::string& app = ctx_.cfg().process;
    std::string activity = argument.empty() ? "camera" : argument;
    CallResult r = Call("am", "stop_activity",
                        {wire::Field{kTagActivity, activity}});
    if (r.status == CallStatus::kOk) {
      return OkReply(request, "stopped " + activity);
    }
    std::string detail = "stop_activity failed (" + Describe(r) + ")";
    if (ctx_.Fail(app, detail) == ChildContext::Course::kReported) {
      return ErrorReply(request, detail);
    }
    return OkReply(request, "recovered");
  }

  wire::Transaction Dial(const wire::Transaction& request,
                         const std::string& argument) {
    const std::string& app = ctx_.cfg().process;
    std::string number = argument.empty() ? "5550100" : argument;
    CallResult r = Call("phone", "dial", {wire::Field{kTagNumber, number}});
    if (r.status == CallStatus::kOk) return OkReply(request, "dialed " + number);
    std::string detail = "dial failed (" + Describe(r) + ")";
    if (ctx_.Fail(app, detail) == ChildContext::Course::kReported) {
      return ErrorReply(request, detail);
    }
    return OkReply(request, "recovered");
  }

  wire::Transaction GetState(const wire::Transaction& request) {
    const std::string& app = ctx_.cfg().process;
    CallResult r = Call("phone", "get_state");
    if (r.status == CallStatus::kOk) {
      wire::Transaction reply = OkReply(request, "state ok");
      if (const wire::Field* f = r.reply.FindField(kTagPhoneState)) {
        reply.fields.push_back(wire::Field{kCtlTagValue, f->value});
      }
      return reply;
    }
    std::string detail = "get_state failed (" + Describe(r) + ")";
    if (ctx_.Fail(app, detail) == ChildContext::Course::kReported) {
      return ErrorReply(request, detail);
    }
    return OkReply(request, "recovered");
  }

  wire::Transaction ReadSensor(const wire::Transaction& request) {
    const std::string& app = ctx_.cfg().process;
    CallResult r = Call("sensors", "read_sensor");
    std::string detail;
    if (r.status == CallStatus::kOk) {
      const wire::Field* f = r.reply.FindField(kTagSensorValue);
      const int64_t* v =
          f != nullptr ? std::get_if<int64_t>(&f->value) : nullptr;
      if (v != nullptr && *v >= kSensorMin && *v <= kSensorMax) {
        wire::Transaction reply = OkReply(request, "sensor ok");
        reply.fields.push_back(wire::Field{kCtlTagValue, *v});
        return reply;
      }
      detail = v == nullptr
                   ? "malformed sensor reply"
                   : "sensor reading out of range: " + std::to_string(*v);
    } else {
      detail = "read_sensor failed (" + Describe(r) + ")";
    }
    if (ctx_.Fail(app, detail) == ChildContext::Course::kReported) {
      return ErrorReply(request, detail);
    }
    wire::Transaction reply = OkReply(request, "recovered-last-known");
    reply.fields.push_back(wire::Field{kCtlTagValue, int64_t{500}});
    return reply;
  }

  ChildContext& ctx_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Job> jobs_;
  std::thread loop_;
  std::thread watchdog_;
  std::atomic<int64_t> last_progress_ms_{0};
  std::atomic<bool> episode_reported_{false};
};

// --- Control server ----------------------------------------------------------

// Serves the harness on the main thread.  Triggers run through the app's
// event loop; everything else is answered inline so a wedged app still
// leaves supervision working until the loop's backlog wedges this thread
// too (which the harness tolerates via its own timeouts).
[[noreturn]] void ServeControl(ChildContext& ctx, App* app) {
  net::Fd listener =
      net::Listen(ctx.cfg().control_socket, ctx.cfg().settings.listen_backlog);
  for (;;) {
    net::Fd conn = net::Accept(listener.get());
    if (!conn.valid()) std::_Exit(0);
    for (;;) {
      net::FrameRead read = net::ReadFrameBytes(conn.get());
      if (read.status != net::FrameRead::Status::kFrame) break;
      wire::DecodeResult decoded = wire::Decode(read.bytes);
      if (!std::holds_alternative<wire::Transaction>(decoded)) break;
      const auto& request = std::get<wire::Transaction>(decoded);
      wire::Transaction reply;
      bool quit = false;
      bool hang = false;
      switch (request.code) {
        case kCtlHealth: {
          reply = proto::MakeReply(request.code);
          reply.fields.push_back(wire::Field{kCtlTagName, ctx.cfg().process});
          reply.fields.push_back(
              wire::Field{kCtlTagPid, static_cast<int32_t>(::getpid())});
          break;
        }
        case kCtlArm: {
          try {
            const wire::Field* doc = request.FindField(1);
            if (doc == nullptr) throw ConfigError("arm without document");
            model::FaultModel armed =
                model::ImportFaultModel(std::get<std::string>(doc->value));
            ctx.Arm(std::move(armed.faults));
            reply = proto::MakeReply(request.code);
          } catch (const std::exception& e) {
            ctx.log().Write(Severity::kWarn, ctx.cfg().process,
                            std::string("arm rejected: ") + e.what());
            reply = proto::MakeErrorReply(request.code,
                                          model::SymbolicError::kServiceError);
          }
          break;
        }
        case kCtlDisarm: {
          ctx.Disarm();
          reply = proto::MakeReply(request.code);
          break;
        }
        case kCtlQuit: {
          reply = proto::MakeReply(request.code);
          quit = true;
          break;
        }
        case kCtlHang: {
          reply = proto::MakeReply(request.code);
          hang = true;
          break;
        }
        case kCtlTrigger: {
          if (app == nullptr) {
            reply = proto::MakeErrorReply(request.code,
                                          model::SymbolicError::kServiceError);
          } else {
            reply = app->Run(request);
          }
          break;
        }
        default:
          reply = proto::MakeErrorReply(request.code,
                                        model::SymbolicError::kServiceError);
      }
      if (!net::WriteAll(conn.get(), wire::Encode(reply))) break;
      if (quit) {
        ctx.log().Write(Severity::kInfo, ctx.cfg().process, "quitting");
        ctx.FlushInjections();
        std::_Exit(0);
      }
      if (hang) {
        ctx.log().Write(Severity::kWarn, ctx.cfg().process,
                        "entering debug hang");
        for (;;) SleepMs(1000);
      }
    }
  }
}

}  // namespace

int RunChildProcess(const std::string& config_path) {
  // Dying with the harness keeps aborted test runs from leaking stacks.
  ::prctl(PR_SET_PDEATHSIG, SIGKILL);
  ChildConfig cfg = ParseChildConfig(config_path);
  if (cfg.harness_pid != 0 && ::getppid() != cfg.harness_pid) return 0;
  ChildContext ctx(std::move(cfg));
  const ChildConfig& c = ctx.cfg();

  // Process-lifecycle faults strike before any service comes up.
  if (!c.lifecycle_point.empty()) {
    if (auto hooked = ctx.Hooked(c.lifecycle_point)) {
      switch (hooked->action.kind) {
        case model::ActionKind::kDelay:
          SleepMs(hooked->action.duration_ms);
          break;
        case model::ActionKind::kStall:
          ctx.log().Write(Severity::kWarn, c.process, "process start stalled");
          for (;;) SleepMs(1000);
        default:
          ctx.log().Write(Severity::kError, c.process,
                          "process resources denied, cannot start");
          return 1;
      }
    }
  }

  // Hosted endpoints.
  std::unique_ptr<Baseband> baseband;
  std::unique_ptr<AtLink> at_link;
  std::unique_ptr<CameraService> camera;
  std::unique_ptr<ActivityManager> am;
  std::unique_ptr<PackageManager> pm;
  std::unique_ptr<SensorsService> sensors;
  std::unique_ptr<PhoneService> phone;

  for (const ChildChannel& ch : c.channels) {
    if (ch.real_socket.empty()) continue;
    if (ch.name == "at") {
      baseband = std::make_unique<Baseband>(ctx, ch.real_socket);
    }
  }
  // rild needs its modem link before it can serve calls.
  bool hosts_rild = false;
  for (const std::string& s : c.services) {
    if (s == "rild") hosts_rild = true;
  }
  if (hosts_rild) {
    const ChildChannel* at = ctx.Channel("at");
    if (at != nullptr) at_link = std::make_unique<AtLink>(ctx, at->client_socket);
  }
  for (const ChildChannel& ch : c.channels) {
    if (ch.real_socket.empty()) continue;
    if (ch.name == "camera") {
      camera = std::make_unique<CameraService>(ctx, ch);
    } else if (ch.name == "am") {
      am = std::make_unique<ActivityManager>(ctx, ch);
    } else if (ch.name == "pm") {
      pm = std::make_unique<PackageManager>(ctx, ch);
    } else if (ch.name == "sensors") {
      sensors = std::make_unique<SensorsService>(ctx, ch);
    } else if (ch.name == "phone") {
      if (at_link == nullptr) throw HarnessError("phone channel without at link");
      phone = std::make_unique<PhoneService>(ctx, ch, *at_link);
    }
  }

  std::unique_ptr<App> app;
  if (!c.actions.empty()) app = std::make_unique<App>(ctx);

  // Heartbeat makes a process's log stream observable even when idle, so a
  // crashed process is visible as a stream that stops.
  std::thread([&ctx] {
    for (uint64_t n = 0;; ++n) {
      ctx.log().Write(Severity::kVerbose, ctx.cfg().process,
                      "alive " + std::to_string(n));
      SleepMs(500);
    }
  }).detach();

  ctx.log().Write(Severity::kInfo, c.process, "process up");
  ServeControl(ctx, app.get());
}

}  // namespace sirfit::target

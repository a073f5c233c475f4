#include "smcgw/adapter.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <sys/socket.h>
#include <sys/time.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/read.hpp>
#include <boost/asio/write.hpp>

namespace smcgw {
namespace asio = boost::asio;
using asio::ip::tcp;

namespace {

nlohmann::json failure(Errc code, const std::string& message) {
  return {{"ok", false}, {"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

const std::string& session_of(const nlohmann::json& command) {
  const auto it = command.find("session_id");
  if (it == command.end() || !it->is_string()) {
    throw Error(Errc::AdapterProtocolError, "command without session_id");
  }
  return it->get_ref<const std::string&>();
}

}  // namespace

std::string_view to_string(AdapterMode mode) {
  return mode == AdapterMode::InProcess ? "inproc" : "socket";
}

AdapterMode adapter_mode_from_string(std::string_view s) {
  if (s == "inproc" || s == "in_process" || s == "inprocess") return AdapterMode::InProcess;
  if (s == "socket" || s == "loopback_socket" || s == "loopback") return AdapterMode::LoopbackSocket;
  throw Error(Errc::ConfigError, "unknown adapter mode '" + std::string(s) + "'");
}

SmcService::SmcService(std::uint64_t seed) : rng_(std::make_unique<SeededRandom>(seed)) {}
SmcService::SmcService(std::unique_ptr<RandomSource> rng) : rng_(std::move(rng)) {}

nlohmann::json SmcService::handle(const nlohmann::json& command) {
  std::lock_guard lock(mu_);
  try {
    return dispatch(command);
  } catch (const Error& e) {
    return failure(e.code(), e.what());
  } catch (const nlohmann::json::exception& e) {
    return failure(Errc::AdapterProtocolError, std::string("malformed command: ") + e.what());
  }
}

nlohmann::json SmcService::dispatch(const nlohmann::json& command) {
  if (!command.is_object() || !command.contains("cmd") || !command["cmd"].is_string()) {
    throw Error(Errc::AdapterProtocolError, "command must be an object with a string \"cmd\"");
  }
  const auto& cmd = command["cmd"].get_ref<const std::string&>();
  const auto& sid = session_of(command);

  if (cmd == "echo") {
    return {{"ok", true}, {"session_id", sid}, {"payload", command.value("payload", nlohmann::json())}};
  }
  if (cmd == "prepare") {
    auto plan = plan_from_json(command.at("plan"));
    if (plan.session_id != sid) throw Error(Errc::AdapterProtocolError, "plan belongs to another session");
    const auto self = command.at("self").get<std::string>();
    plan.at(self);
    sessions_.insert_or_assign(sid, initial_state(std::move(plan), self));
    return {{"ok", true}, {"session_id", sid}};
  }
  if (cmd == "abort") {
    const bool existed = sessions_.erase(sid) != 0;
    return {{"ok", true}, {"session_id", sid}, {"existed", existed}};
  }
  if (cmd == "execute") {
    auto it = sessions_.find(sid);
    if (it == sessions_.end()) throw Error(Errc::AdapterProtocolError, "execute before prepare for " + sid);
    auto r = step(it->second, event_from_json(command.at("event")), *rng_);
    nlohmann::json outbound = nlohmann::json::array();
    for (const auto& o : r.outbound) outbound.push_back(outbound_to_json(o));
    nlohmann::json entered = nlohmann::json::array();
    for (auto k : r.entered) entered.push_back(to_string(k));
    nlohmann::json reply = {{"ok", true},
                            {"session_id", sid},
                            {"outbound", std::move(outbound)},
                            {"entered", std::move(entered)},
                            {"current", to_string(r.state.current)}};
    if (r.result) reply["result"] = std::to_string(r.result->value());
    it->second = std::move(r.state);
    return reply;
  }
  throw Error(Errc::AdapterProtocolError, "unknown command '" + cmd + "'");
}

std::size_t SmcService::open_sessions() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

std::optional<EngineState> SmcService::session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

nlohmann::json Adapter::invoke(const nlohmann::json& command) {
  auto reply = roundtrip(command);
  if (!reply.is_object() || !reply.contains("ok") || !reply["ok"].is_boolean()) {
    throw Error(Errc::AdapterProtocolError, "adapter reply lacks \"ok\"");
  }
  if (!reply["ok"].get<bool>()) {
    const auto& err = reply.value("error", nlohmann::json::object());
    const auto code = errc_from_string(err.value("code", "")).value_or(Errc::AdapterProtocolError);
    throw Error(code, err.value("message", std::string("adapter command failed")));
  }
  return reply;
}

void Adapter::prepare(const RoundPlan& plan, const std::string& self) {
  invoke({{"cmd", "prepare"}, {"session_id", plan.session_id}, {"plan", plan_to_json(plan)}, {"self", self}});
}

StepReply Adapter::execute(const std::string& session_id, const EngineEvent& event) {
  const auto reply = invoke({{"cmd", "execute"}, {"session_id", session_id}, {"event", event_to_json(event)}});
  try {
    StepReply r;
    for (const auto& o : reply.at("outbound")) r.outbound.push_back(outbound_from_json(o));
    for (const auto& k : reply.at("entered")) r.entered.push_back(round_from_string(k.get<std::string>()));
    r.current = round_from_string(reply.at("current").get<std::string>());
    if (reply.contains("result")) r.result = FieldElement(std::stoull(reply["result"].get<std::string>()));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::AdapterProtocolError, std::string("malformed execute reply: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(Errc::AdapterProtocolError, std::string("malformed execute reply: ") + e.what());
  }
}

void Adapter::abort(const std::string& session_id) { invoke({{"cmd", "abort"}, {"session_id", session_id}}); }

nlohmann::json Adapter::echo(const std::string& session_id, const nlohmann::json& payload) {
  auto reply = invoke({{"cmd", "echo"}, {"session_id", session_id}, {"payload", payload}});
  if (!reply.contains("payload")) throw Error(Errc::AdapterProtocolError, "echo reply without payload");
  return reply["payload"];
}

nlohmann::json InProcessAdapter::roundtrip(const nlohmann::json& command) { return service_.handle(command); }

// ---------------------------------------------------------------------------

struct AdapterServer::Impl {
  struct Conn : std::enable_shared_from_this<Conn> {
    Conn(Impl& owner, tcp::socket s) : owner(owner), socket(std::move(s)) {}

    void read_header() {
      asio::async_read(socket, asio::buffer(header), [self = shared_from_this()](auto ec, std::size_t) {
        if (ec) return;
        const auto len = read_frame_length(std::string_view(self->header.data(), self->header.size()));
        if (len > kMaxFramePayload) {
          self->reply(failure(Errc::FrameTooLarge, "adapter frame too large"));
          return;
        }
        self->body.resize(len);
        self->read_body();
      });
    }

    void read_body() {
      asio::async_read(socket, asio::buffer(body), [self = shared_from_this()](auto ec, std::size_t) {
        if (ec) return;
        nlohmann::json reply;
        try {
          reply = self->owner.service.handle(parse_payload(self->body));
        } catch (const Error& e) {
          reply = failure(Errc::AdapterProtocolError, e.what());
        }
        self->reply(reply);
      });
    }

    void reply(const nlohmann::json& j) {
      out = encode_json_frame(j);
      asio::async_write(socket, asio::buffer(out), [self = shared_from_this()](auto ec, std::size_t) {
        if (!ec) self->read_header();
      });
    }

    Impl& owner;
    tcp::socket socket;
    std::array<char, 4> header{};
    std::string body;
    std::string out;
  };

  explicit Impl(SmcService& s) : service(s), acceptor(io) {}

  void accept() {
    acceptor.async_accept([this](boost::system::error_code ec, tcp::socket s) {
      if (ec) return;
      s.set_option(tcp::no_delay(true), ec);
      std::make_shared<Conn>(*this, std::move(s))->read_header();
      accept();
    });
  }

  SmcService& service;
  asio::io_context io;
  tcp::acceptor acceptor;
  std::thread thread;
};

AdapterServer::AdapterServer(SmcService& service, std::uint16_t port) : impl_(std::make_unique<Impl>(service)) {
  boost::system::error_code ec;
  const tcp::endpoint ep(asio::ip::address_v4::loopback(), port);
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error(Errc::SocketUnavailable, "adapter cannot listen on 127.0.0.1:" + std::to_string(port));
  port_ = impl_->acceptor.local_endpoint().port();
  impl_->accept();
  impl_->thread = std::thread([impl = impl_.get()] { impl->io.run(); });
}

AdapterServer::~AdapterServer() { stop(); }

void AdapterServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->io.stop();
  impl_->thread.join();
  boost::system::error_code ec;
  impl_->acceptor.close(ec);
}

struct SocketAdapter::Impl {
  asio::io_context io;
  std::optional<tcp::socket> socket;
  std::uint16_t port;
  std::chrono::milliseconds timeout;

  void connect() {
    tcp::socket s(io);
    boost::system::error_code ec;
    s.connect(tcp::endpoint(asio::ip::address_v4::loopback(), port), ec);
    if (ec) throw Error(Errc::AdapterUnreachable, "no adapter on 127.0.0.1:" + std::to_string(port));
    s.set_option(tcp::no_delay(true), ec);
    // Blocking reads give up after the timeout instead of hanging forever.
    timeval tv{};
    tv.tv_sec = timeout.count() / 1000;
    tv.tv_usec = (timeout.count() % 1000) * 1000;
    ::setsockopt(s.native_handle(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    socket.emplace(std::move(s));
  }
};

SocketAdapter::SocketAdapter(std::uint16_t port, std::chrono::milliseconds io_timeout)
    : impl_(std::make_unique<Impl>()) {
  impl_->port = port;
  impl_->timeout = io_timeout;
}

SocketAdapter::~SocketAdapter() = default;

nlohmann::json SocketAdapter::roundtrip(const nlohmann::json& command) {
  if (!impl_->socket) impl_->connect();
  auto& s = *impl_->socket;
  boost::system::error_code ec;
  const auto frame = encode_json_frame(command);
  asio::write(s, asio::buffer(frame), ec);
  std::array<char, 4> header{};
  if (!ec) asio::read(s, asio::buffer(header), ec);
  if (ec) {
    impl_->socket.reset();
    throw Error(Errc::AdapterUnreachable, "adapter connection failed: " + ec.message());
  }
  const auto len = read_frame_length(std::string_view(header.data(), header.size()));
  if (len > kMaxFramePayload) {
    impl_->socket.reset();
    throw Error(Errc::AdapterProtocolError, "adapter reply too large");
  }
  std::string body(len, '\0');
  asio::read(s, asio::buffer(body), ec);
  if (ec) {
    impl_->socket.reset();
    throw Error(Errc::AdapterUnreachable, "adapter connection failed: " + ec.message());
  }
  try {
    return parse_payload(body);
  } catch (const Error& e) {
    throw Error(Errc::AdapterProtocolError, std::string("malformed adapter reply: ") + e.what());
  }
}

AdapterStack AdapterStack::create(AdapterMode mode, std::unique_ptr<RandomSource> rng) {
  AdapterStack stack;
  stack.service = std::make_unique<SmcService>(std::move(rng));
  if (mode == AdapterMode::InProcess) {
    stack.adapter = std::make_unique<InProcessAdapter>(*stack.service);
  } else {
    stack.server = std::make_unique<AdapterServer>(*stack.service);
    stack.adapter = std::make_unique<SocketAdapter>(stack.server->port());
  }
  return stack;
}

}  // namespace smcgw

#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/engine.hpp"

namespace smcgw {

enum class AdapterMode { InProcess, LoopbackSocket };

std::string_view to_string(AdapterMode mode);
/// Accepts "inproc" / "in_process" and "socket" / "loopback_socket".
AdapterMode adapter_mode_from_string(std::string_view s);

/// The SMC instance a daemon drives. Commands and replies are JSON objects:
///   {"cmd":"prepare","session_id":..,"plan":..,"self":..}
///   {"cmd":"execute","session_id":..,"event":..}
///   {"cmd":"abort","session_id":..}
///   {"cmd":"echo","session_id":..,"payload":..}
/// Replies carry "ok"; failures carry "error": {"code","message"}.
class SmcService {
 public:
  explicit SmcService(std::uint64_t seed);
  explicit SmcService(std::unique_ptr<RandomSource> rng);

  nlohmann::json handle(const nlohmann::json& command);

  std::size_t open_sessions() const;
  /// Test hook: a copy of a session's engine state.
  std::optional<EngineState> session(const std::string& session_id) const;

 private:
  nlohmann::json dispatch(const nlohmann::json& command);

  mutable std::mutex mu_;
  std::unique_ptr<RandomSource> rng_;
  std::map<std::string, EngineState> sessions_;
};

struct StepReply {
  std::vector<Outbound> outbound;
  std::optional<FieldElement> result;
  std::vector<RoundKind> entered;
  RoundKind current = RoundKind::Distribute;
};

/// Client side of the adapter boundary.
class Adapter {
 public:
  virtual ~Adapter() = default;
  virtual AdapterMode mode() const = 0;

  /// Sends one command and returns the successful reply. Remote failures are
  /// rethrown with their error code.
  nlohmann::json invoke(const nlohmann::json& command);

  void prepare(const RoundPlan& plan, const std::string& self);
  StepReply execute(const std::string& session_id, const EngineEvent& event);
  void abort(const std::string& session_id);
  nlohmann::json echo(const std::string& session_id, const nlohmann::json& payload);

 protected:
  /// Raw request/reply exchange. Throws AdapterUnreachable or
  /// AdapterProtocolError.
  virtual nlohmann::json roundtrip(const nlohmann::json& command) = 0;
};

/// Calls the service directly.
class InProcessAdapter final : public Adapter {
 public:
  explicit InProcessAdapter(SmcService& service) : service_(service) {}
  AdapterMode mode() const override { return AdapterMode::InProcess; }

 protected:
  nlohmann::json roundtrip(const nlohmann::json& command) override;

 private:
  SmcService& service_;
};

/// Serves an SmcService over length-prefixed JSON frames on 127.0.0.1.
class AdapterServer {
 public:
  /// Port 0 picks a free port. Throws SocketUnavailable.
  AdapterServer(SmcService& service, std::uint16_t port = 0);
  ~AdapterServer();
  AdapterServer(const AdapterServer&) = delete;
  AdapterServer& operator=(const AdapterServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;
};

/// Blocking client for an AdapterServer. Connects lazily and reconnects
/// after a failure.
class SocketAdapter final : public Adapter {
 public:
  explicit SocketAdapter(std::uint16_t port, std::chrono::milliseconds io_timeout = std::chrono::seconds(5));
  ~SocketAdapter() override;
  AdapterMode mode() const override { return AdapterMode::LoopbackSocket; }

 protected:
  nlohmann::json roundtrip(const nlohmann::json& command) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// A service together with the adapter that reaches it in the given mode.
struct AdapterStack {
  std::unique_ptr<SmcService> service;
  std::unique_ptr<AdapterServer> server;
  std::unique_ptr<Adapter> adapter;

  static AdapterStack create(AdapterMode mode, std::unique_ptr<RandomSource> rng);
};

}  // namespace smcgw

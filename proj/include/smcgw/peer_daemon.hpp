#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smcgw/adapter.hpp"
#include "smcgw/config.hpp"
#include "smcgw/discovery.hpp"
#include "smcgw/peer_state.hpp"
#include "smcgw/secure_channel.hpp"
#include "smcgw/session.hpp"

namespace smcgw {

/// The peer process: discovery, pairing, control channel, heartbeats and
/// session execution. Everything runs on the host's loop.
class PeerDaemon : public std::enable_shared_from_this<PeerDaemon> {
 public:
  using Ptr = std::shared_ptr<PeerDaemon>;
  using StateObserver = std::function<void(PeerState from, PeerState to)>;

  struct Stats {
    std::size_t heartbeats_sent = 0;
    std::size_t heartbeats_acked = 0;
    std::size_t sessions_prepared = 0;
    std::size_t sessions_revealed = 0;
    std::size_t aborts_sent = 0;
    std::size_t echoes = 0;
    std::optional<nlohmann::json> last_teardown;
  };

  static Ptr create(net::Host& host, PeerConfig config, Identity identity);
  static Ptr create(net::Host& host, PeerConfig config, Identity identity, TrustStore trust);
  ~PeerDaemon();

  /// Binds the protocol listener and the discovery browser, then enters
  /// Discovery. Throws SocketUnavailable.
  void start();
  /// Closes everything. No handlers fire afterwards.
  void stop();

  PeerState state() const { return state_; }
  const Identity& identity() const { return identity_; }
  const TrustStore& trust() const { return trust_; }
  const PeerConfig& config() const { return config_; }
  net::Address endpoint() const;
  std::optional<std::string> gateway() const;
  const std::set<std::string>& blacklist() const { return blacklist_; }
  const Stats& stats() const { return stats_; }
  std::size_t active_sessions() const { return runners_.size(); }
  void set_state_observer(StateObserver obs) { observer_ = std::move(obs); }
  Adapter& adapter() { return *adapter_.adapter; }
  PeerMetadata metadata() const;

 private:
  PeerDaemon(net::Host& host, PeerConfig config, Identity identity, TrustStore trust);

  void fire(PeerEvent ev);
  void on_enter(PeerState s);
  void schedule_selection(net::Duration delay);
  void try_select();
  void pair(const GatewayAnnouncement& gw);
  void connect_control();
  void heartbeat_tick();
  void cleanup();

  void on_accepted(net::LinkPtr link);
  void on_control(Message m);
  void handle_prepare(const Message& m);
  void handle_start(const std::string& sid);
  void drop_session(const std::string& sid);
  void send_control(MessageType type, const std::optional<std::string>& sid, nlohmann::json body);
  void abort_to_gateway(const std::string& sid, const Error& err);

  net::Host& host_;
  PeerConfig config_;
  Identity identity_;
  TrustStore trust_;
  AdapterStack adapter_;
  std::map<std::string, DataSource> sources_;
  PeerState state_ = PeerState::Discovery;
  StateObserver observer_;
  bool running_ = false;

  net::ListenerPtr listener_;
  std::unique_ptr<Browser> browser_;
  DiscoveryCache cache_;
  std::set<std::string> blacklist_;
  net::TimerHandle select_timer_;
  std::uint64_t epoch_ = 0;  // bumps on every cleanup; stale callbacks compare it

  std::optional<GatewayAnnouncement> selected_;
  std::string gateway_fp_;
  std::string gateway_name_;
  SecureChannel::Ptr pair_channel_;
  net::TimerHandle pair_timer_;
  SecureChannel::Ptr control_;
  net::TimerHandle heartbeat_timer_;
  std::uint64_t beat_seq_ = 0;
  std::uint64_t last_acked_ = 0;
  int misses_ = 0;

  struct Session {
    SessionRunner::Ptr runner;
    net::Duration adapter_prepare{0};
  };
  std::map<std::string, Session> runners_;
  Stats stats_;
};

}  // namespace smcgw

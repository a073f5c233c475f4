#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/adapter.hpp"
#include "smcgw/config.hpp"
#include "smcgw/discovery.hpp"
#include "smcgw/registry.hpp"
#include "smcgw/session.hpp"

namespace smcgw {

/// Per-peer timing of one session or echo batch, in milliseconds.
struct PeerTiming {
  std::string peer;
  double flex_ms = 0;
  double adapter_ms = 0;
  double total_ms = 0;

  friend bool operator==(const PeerTiming&, const PeerTiming&) = default;
};

nlohmann::json timing_to_json(const std::vector<PeerTiming>& peers);
std::vector<PeerTiming> timing_from_json(const nlohmann::json& j);

/// The coordinating node: client API, registry, session orchestration,
/// liveness monitoring and bounded retries.
class GatewayDaemon : public std::enable_shared_from_this<GatewayDaemon> {
 public:
  using Ptr = std::shared_ptr<GatewayDaemon>;
  using Reply = std::function<void(nlohmann::json)>;
  using LivenessObserver = std::function<void(const std::string& fingerprint, Liveness now)>;

  struct Stats {
    std::size_t requests = 0;
    std::size_t responses = 0;
    std::size_t sessions_ok = 0;
    std::size_t sessions_failed = 0;
    std::size_t attempts = 0;
    std::size_t heartbeats = 0;
  };

  static Ptr create(net::Host& host, GatewayConfig config, Identity identity);
  static Ptr create(net::Host& host, GatewayConfig config, Identity identity, TrustStore trust);
  ~GatewayDaemon();

  /// Binds control and client listeners and starts announcing. Throws
  /// SocketUnavailable.
  void start();
  void stop();

  /// Client API entry. `reply` runs exactly once, on the host loop.
  void submit(nlohmann::json request, Reply reply);

  const Identity& identity() const { return identity_; }
  const GatewayConfig& config() const { return config_; }
  const Registry& registry() const { return registry_; }
  const TrustStore& trust() const { return trust_; }
  net::Address control_endpoint() const;
  net::Address client_endpoint() const;
  GatewayAnnouncement announcement() const;
  const Stats& stats() const { return stats_; }
  bool busy() const { return static_cast<bool>(job_); }
  void set_liveness_observer(LivenessObserver obs) { liveness_observer_ = std::move(obs); }

 private:
  struct Job {
    nlohmann::json request;
    Reply reply;
    std::string group;
    std::string data_type;
    Operation op = Operation::Sum;
    std::string base_id;
    int attempt = 0;
    std::vector<std::string> peers;
    nlohmann::json failures = nlohmann::json::array();
    bool answered = false;
  };
  struct Attempt {
    std::string sid;
    RoundPlan plan;
    std::set<std::string> peers;
    std::map<std::string, net::Duration> prepare_sent;
    std::map<std::string, net::Duration> ready_rtt;
    std::map<std::string, net::Duration> ready_adapter;
    std::map<std::string, std::pair<net::Duration, net::Duration>> revealed;
    SessionRunner::Ptr runner;
    std::optional<FieldElement> result;
    net::TimerHandle prepare_timer;
    net::TimerHandle grace_timer;
    bool started = false;
    bool over = false;
  };
  struct EchoBatch {
    Reply reply;
    int count = 0;
    bool via_adapter = false;
    nlohmann::json payload;
    std::map<std::string, int> done;
    std::map<std::string, net::Duration> began;
    std::map<std::string, net::Duration> adapter;
    std::map<std::string, net::Duration> finished;
    net::TimerHandle timeout;
    bool answered = false;
  };

  GatewayDaemon(net::Host& host, GatewayConfig config, Identity identity, TrustStore trust);

  void on_control_link(net::LinkPtr link);
  void on_client_link(net::LinkPtr link);
  void on_pair_channel(const SecureChannel::Ptr& ch);
  void on_control_channel(const SecureChannel::Ptr& ch);
  void on_peer_message(const std::string& fp, Message m);
  void peer_lost(const std::string& fp, const std::string& why);
  void monitor_tick();
  void notify(const std::string& fp);

  void pump();
  void begin_job();
  void run_attempt();
  void on_ready(const std::string& fp, const nlohmann::json& body);
  void on_revealed(const std::string& fp, const nlohmann::json& body);
  void check_complete();
  void attempt_failed(const Error& err);
  void succeed();
  void finish(nlohmann::json response);
  void send_to(const std::string& fp, MessageType type, const std::optional<std::string>& sid, nlohmann::json body);

  void start_echo(nlohmann::json request, Reply reply);
  void echo_next(const std::shared_ptr<EchoBatch>& batch, const std::string& fp);
  void echo_reply(const std::string& fp, const nlohmann::json& body);
  void echo_finish(const std::shared_ptr<EchoBatch>& batch);

  net::Host& host_;
  GatewayConfig config_;
  Identity identity_;
  TrustStore trust_;
  AdapterStack adapter_;
  Registry registry_;
  std::map<std::string, Liveness> last_liveness_;
  LivenessObserver liveness_observer_;
  bool running_ = false;

  net::ListenerPtr control_listener_;
  net::ListenerPtr client_listener_;
  std::shared_ptr<Announcer> announcer_;
  net::TimerHandle monitor_timer_;
  std::vector<SecureChannel::Ptr> clients_;

  std::deque<std::unique_ptr<Job>> queue_;
  std::unique_ptr<Job> job_;
  std::unique_ptr<Attempt> attempt_;
  net::TimerHandle retry_timer_;
  std::uint64_t next_session_ = 1;

  std::uint64_t next_echo_ = 1;
  std::map<std::string, std::pair<std::shared_ptr<EchoBatch>, std::uint64_t>> echo_waiting_;
  Stats stats_;
};

/// Fraction as returned for Average: numerator/denominator in lowest terms.
nlohmann::json rational_json(std::uint64_t numerator, std::uint64_t denominator);

}  // namespace smcgw

#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/client.hpp"
#include "smcgw/gateway.hpp"
#include "smcgw/net/sim_network.hpp"
#include "smcgw/peer_daemon.hpp"

namespace smcgw::harness {

struct ClusterSpec {
  std::size_t peers = 3;
  std::string location = "lab";
  std::string capability = "reading";
  /// Constant input per peer; empty means seeded readings.
  std::vector<std::uint64_t> inputs;
  AdapterMode adapter = AdapterMode::InProcess;
  std::chrono::milliseconds channel_wait{0};
  std::uint64_t seed = 1;
  net::FaultPlan faults;
  std::function<void(GatewayConfig&)> gateway_tweak;
  std::function<void(std::size_t index, PeerConfig&)> peer_tweak;

  std::string group() const { return location + "/" + capability; }
};

/// "peer1", "peer2", ...
std::string peer_name(std::size_t index);

/// Expected input of one peer for one session, recomputed from the spec.
std::uint64_t expected_input(const ClusterSpec& spec, std::size_t index, const std::string& session_id);

struct LivenessEvent {
  net::Duration at{0};
  std::string peer;
  Liveness liveness = Liveness::Active;
};

/// A gateway, a client and N peers, on whatever transport.
class Cluster {
 public:
  virtual ~Cluster() = default;

  /// Returns once every live peer is Active at the gateway. Throws
  /// ScenarioSetupFailed on timeout.
  virtual void wait_operational(net::Duration limit = std::chrono::seconds(60)) = 0;
  /// One client request, blocking until the reply. Throws RequestTimeout.
  virtual nlohmann::json request(const nlohmann::json& body, net::Duration limit = std::chrono::seconds(120)) = 0;
  nlohmann::json sum(Operation op = Operation::Sum);

  virtual void kill_peer(std::size_t index) = 0;
  /// Same identity and trust as before the kill.
  virtual void restart_peer(std::size_t index) = 0;
  /// Starts the fault plan's clock. Only the simulated network injects faults.
  virtual void arm_faults() = 0;
  virtual std::size_t size() const = 0;
  virtual const ClusterSpec& spec() const = 0;
};

/// Everything on one simulated network.
class SimCluster final : public Cluster {
 public:
  explicit SimCluster(ClusterSpec spec);
  ~SimCluster() override;
  SimCluster(const SimCluster&) = delete;
  SimCluster& operator=(const SimCluster&) = delete;

  void wait_operational(net::Duration limit = std::chrono::seconds(60)) override;
  nlohmann::json request(const nlohmann::json& body, net::Duration limit = std::chrono::seconds(120)) override;

  void kill_peer(std::size_t index) override;
  void restart_peer(std::size_t index) override;
  void arm_faults() override { world_.arm_faults(); }

  net::SimWorld& world() { return world_; }
  GatewayDaemon& gateway() { return *gateway_; }
  PeerDaemon& peer(std::size_t index) { return *peers_.at(index); }
  std::size_t size() const override { return peers_.size(); }
  const ClusterSpec& spec() const override { return spec_; }
  const std::vector<LivenessEvent>& liveness_log() const { return liveness_log_; }
  std::string name_of(const std::string& fingerprint) const;

 private:
  void make_peer(std::size_t index, TrustStore trust);
  void connect_client(net::Duration limit);

  ClusterSpec spec_;
  net::SimWorld world_;
  GatewayDaemon::Ptr gateway_;
  std::vector<PeerDaemon::Ptr> peers_;
  std::vector<Identity> peer_ids_;
  Identity client_id_;
  Client::Ptr client_;
  std::vector<LivenessEvent> liveness_log_;
};

}  // namespace smcgw::harness

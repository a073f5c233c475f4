#pragma once

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smcgw/client.hpp"
#include "smcgw/harness/cluster.hpp"

namespace smcgw::harness {

/// A spawned child with stdout and stderr sent to a log file. The destructor
/// terminates it.
class ChildProcess {
 public:
  /// Throws ScenarioSetupFailed if the spawn fails.
  ChildProcess(const std::filesystem::path& exe, const std::vector<std::string>& args,
               const std::filesystem::path& log);
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  pid_t pid() const { return pid_; }
  bool running();
  void kill();
  void signal(int sig);
  /// SIGTERM, then SIGKILL after `grace`.
  void terminate(std::chrono::milliseconds grace = std::chrono::milliseconds(2000));

 private:
  void reap(bool block);

  pid_t pid_ = -1;
  bool exited_ = false;
};

/// Where the gateway and peer executables live: $SMCGW_TOOLS_DIR, else the
/// build tree's tools directory.
std::filesystem::path tools_dir();

/// Gateway and peers as separate processes on loopback TCP.
class ProcessCluster final : public Cluster {
 public:
  /// `workdir` receives configs, keys, trust stores and logs; empty means a
  /// fresh temporary directory, removed afterwards.
  explicit ProcessCluster(ClusterSpec spec, std::filesystem::path workdir = {});
  ~ProcessCluster() override;

  void wait_operational(net::Duration limit = std::chrono::seconds(60)) override;
  nlohmann::json request(const nlohmann::json& body, net::Duration limit = std::chrono::seconds(120)) override;
  void kill_peer(std::size_t index) override;
  void restart_peer(std::size_t index) override;
  /// SIGSTOP: sockets stay open but the peer goes silent, like a hung host.
  void freeze_peer(std::size_t index);
  /// Fault plans need the simulated network; this is a no-op.
  void arm_faults() override {}
  std::size_t size() const override { return peers_.size(); }
  const ClusterSpec& spec() const override { return spec_; }

  /// Liveness of each peer as the gateway reports it, by peer name.
  std::map<std::string, std::string> liveness();
  const std::filesystem::path& workdir() const { return workdir_; }
  const std::string& gateway_fingerprint() const { return gateway_fp_; }
  const net::Address& client_endpoint() const { return client_endpoint_; }

 private:
  void launch_peer(std::size_t index);
  BlockingClient& client();

  ClusterSpec spec_;
  std::filesystem::path workdir_;
  bool owns_workdir_ = false;
  std::unique_ptr<ChildProcess> gateway_;
  std::vector<std::unique_ptr<ChildProcess>> peers_;
  std::vector<bool> alive_;
  net::Address control_;
  net::Address client_endpoint_;
  std::string gateway_fp_;
  std::unique_ptr<BlockingClient> client_;
};

}  // namespace smcgw::harness

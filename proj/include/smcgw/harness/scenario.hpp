#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "smcgw/harness/cluster.hpp"
#include "smcgw/harness/report.hpp"

namespace smcgw::harness {

/// Simulated or multi-process cluster per the transport.
std::unique_ptr<Cluster> make_cluster(Transport transport, ClusterSpec spec);

/// Cluster spec for one peer count of a scenario.
ClusterSpec cluster_spec(const Scenario& s, std::size_t peers);

/// Sum of the expected inputs of the named peers ("peerK") for the session.
std::uint64_t oracle_sum(const ClusterSpec& spec, const std::vector<std::string>& participants,
                         const std::string& session_id);

/// Called after each repetition with (n, repetition); for progress output.
using Progress = std::function<void(std::size_t, std::size_t)>;

/// Batches of `echo_count` consecutive echoes to every peer per repetition.
/// Throws ScenarioSetupFailed.
TimingReport run_echo_benchmark(const Scenario& s, const Progress& progress = {});
/// One client sum per repetition. Wrong results and error responses are
/// recorded as failures. Throws ScenarioSetupFailed.
TimingReport run_sum_benchmark(const Scenario& s, const Progress& progress = {});

struct ChaosCase {
  std::string name;
  std::size_t peers = 5;
  net::FaultPlan faults;
};

/// Kill one of five at each round kind, drop a control link, reset a
/// gateway-side link, and a kill that leaves too few peers.
std::vector<ChaosCase> chaos_suite();

/// Peers that the plan removes for good: killed, or cut off from the gateway.
std::size_t permanent_losses(const ChaosCase& c);

/// Runs one client sum under the case's faults on the simulated backend.
ChaosOutcome run_chaos(const ChaosCase& c, std::uint64_t seed);

}  // namespace smcgw::harness

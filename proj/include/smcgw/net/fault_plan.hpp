#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace smcgw::net {

struct LatencySpec {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Fixed;
  double fixed_ms = 0.2;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

/// Fault on the link between two hosts, fired either at an absolute
/// simulated time or when either endpoint enters a protocol round.
struct LinkFault {
  std::string a;
  std::string b;
  std::optional<double> at_ms;
  std::optional<int> round;
};

struct KillFault {
  std::string peer;
  std::optional<double> at_ms;
  std::optional<int> round;
};

/// Simulated-network behaviour. Applies only to the simulated backend and
/// is deterministic for a given world seed.
struct FaultPlan {
  LatencySpec latency;
  /// Per-host egress serialisation: each frame occupies the sender's uplink
  /// for this long before its propagation latency starts.
  double egress_ms_per_frame = 0.02;
  /// Frames on the link are silently discarded from the trigger onwards.
  std::vector<LinkFault> drop_links;
  /// Open connections on the link are closed at the trigger; reconnecting
  /// is allowed.
  std::vector<LinkFault> reset_links;
  /// The host stops: timers never fire, links go silent.
  std::vector<KillFault> kills;
  bool duplicate = false;
  double duplicate_probability = 0.1;
  bool reorder = false;
  double reorder_jitter_ms = 1.0;

  bool has_faults() const { return !drop_links.empty() || !reset_links.empty() || !kills.empty() || duplicate || reorder; }

  nlohmann::json to_json() const;
  static FaultPlan from_json(const nlohmann::json& j);
};

/// "distribute" | "aggregate_local" | "reveal" or an integer index.
int parse_round(const nlohmann::json& j);

}  // namespace smcgw::net

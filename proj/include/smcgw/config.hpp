#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/adapter.hpp"
#include "smcgw/discovery.hpp"
#include "smcgw/field.hpp"
#include "smcgw/registry.hpp"

namespace smcgw {

using std::chrono::milliseconds;

/// Inputs are kept below 2^32 so sums of up to 255 of them never wrap.
inline constexpr std::uint64_t kInputBound = 1ULL << 32;

struct DataSourceSpec {
  enum class Kind { Constant, Seeded };
  std::string capability;
  Kind kind = Kind::Seeded;
  std::uint64_t value = 0;
};

/// Deterministic test reading for one peer, capability and session. Retries
/// of a session share the base id, so they read the same value.
std::uint64_t seeded_reading(std::uint64_t seed, const std::string& peer, const std::string& capability,
                             const std::string& base_session_id);
/// "gw-3.2" -> "gw-3".
std::string base_session_id(const std::string& session_id);

class DataSource {
 public:
  DataSource(DataSourceSpec spec, std::string peer, std::uint64_t seed);
  const std::string& capability() const { return spec_.capability; }
  /// Throws InputOutOfRange.
  FieldElement fetch(const std::string& session_id) const;

 private:
  DataSourceSpec spec_;
  std::string peer_;
  std::uint64_t seed_;
};

struct StaticGateway {
  net::Address endpoint;
  std::string fingerprint;
  std::string name;
};

struct PeerConfig {
  std::string name = "peer";
  std::optional<std::filesystem::path> key_file;
  std::optional<std::filesystem::path> trust_store;
  net::Address listen{"127.0.0.1", 0};
  std::string location = "default";
  std::vector<DataSourceSpec> sources;
  SelectionPolicy policy;
  bool multicast = true;
  net::Address discovery_group = kDiscoveryGroup;
  std::vector<StaticGateway> static_gateways;
  AdapterMode adapter = AdapterMode::InProcess;
  std::uint64_t seed = 1;

  milliseconds heartbeat_interval{1000};
  int heartbeat_misses = 3;
  milliseconds round_timeout{10000};
  milliseconds handshake_timeout{5000};
  milliseconds establish_timeout{5000};
  milliseconds retry_delay{1000};
  milliseconds discovery_period{2000};

  std::vector<std::string> capabilities() const;
};

PeerConfig peer_config_from_json(const nlohmann::json& j);
nlohmann::json peer_config_to_json(const PeerConfig& c);
PeerConfig load_peer_config(const std::filesystem::path& path);

struct GatewayConfig {
  std::string name = "gateway";
  std::optional<std::filesystem::path> key_file;
  std::optional<std::filesystem::path> trust_store;
  net::Address control{"127.0.0.1", 0};
  net::Address client{"127.0.0.1", 0};
  net::Address discovery_group = kDiscoveryGroup;
  bool announce = true;
  std::string location = "default";
  std::string purpose = "aggregation";
  AdapterMode adapter = AdapterMode::InProcess;
  std::uint64_t seed = 1;

  int retry_budget = 3;
  std::size_t min_group = kDefaultMinContributors;
  std::optional<std::size_t> threshold;
  milliseconds channel_wait{0};
  milliseconds heartbeat_interval{1000};
  LivenessPolicy liveness;
  milliseconds prepare_timeout{5000};
  milliseconds round_timeout{10000};
  milliseconds handshake_timeout{5000};
  milliseconds establish_timeout{5000};
  milliseconds recovery_delay{1500};
  milliseconds completion_grace{2000};
  milliseconds announce_period{2000};
};

GatewayConfig gateway_config_from_json(const nlohmann::json& j);
nlohmann::json gateway_config_to_json(const GatewayConfig& c);
GatewayConfig load_gateway_config(const std::filesystem::path& path);

/// Key from the configured file (created if missing) or derived from the seed.
Identity load_identity(const std::string& name, const std::optional<std::filesystem::path>& key_file,
                       std::uint64_t seed);

}  // namespace smcgw

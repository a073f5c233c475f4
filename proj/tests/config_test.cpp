#include "smcgw/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>

namespace smcgw {
namespace {

namespace fs = std::filesystem;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::ConfigError;
}

TEST(PeerConfig, ParsesAllSections) {
  auto c = peer_config_from_json(nlohmann::json::parse(R"({
    "name": "p1", "listen": "127.0.0.1:6001", "location": "floor2",
    "capabilities": {"presence_count": 3, "temperature_c": "seeded", "humidity": {"kind": "constant", "value": 40}},
    "discovery": {"policy": "manual", "gateway": "abcd", "multicast": false,
                  "static": [{"endpoint": "127.0.0.1:7000", "fingerprint": "abcd", "name": "gw"}]},
    "adapter": "socket", "seed": 5,
    "tunables": {"heartbeat_interval_ms": 500, "round_timeout_ms": 2000}
  })"));
  EXPECT_EQ(c.name, "p1");
  EXPECT_EQ(c.listen, (net::Address{"127.0.0.1", 6001}));
  ASSERT_EQ(c.sources.size(), 3u);
  EXPECT_EQ(c.capabilities(), (std::vector<std::string>{"humidity", "presence_count", "temperature_c"}));
  EXPECT_EQ(c.policy.kind, SelectionPolicy::Kind::Manual);
  EXPECT_EQ(c.policy.target, "abcd");
  EXPECT_FALSE(c.multicast);
  ASSERT_EQ(c.static_gateways.size(), 1u);
  EXPECT_EQ(c.static_gateways[0].endpoint.port, 7000);
  EXPECT_EQ(c.adapter, AdapterMode::LoopbackSocket);
  EXPECT_EQ(c.heartbeat_interval.count(), 500);
  EXPECT_EQ(c.round_timeout.count(), 2000);
  EXPECT_EQ(c.heartbeat_misses, 3);
}

TEST(PeerConfig, RoundTrip) {
  PeerConfig c;
  c.name = "p";
  c.sources = {{"presence_count", DataSourceSpec::Kind::Constant, 7}, {"t", DataSourceSpec::Kind::Seeded, 0}};
  c.static_gateways = {{{"10.0.0.1", 7000}, "ff", "gw"}};
  c.key_file = "/tmp/k";
  const auto j = peer_config_to_json(c);
  EXPECT_EQ(peer_config_to_json(peer_config_from_json(j)), j);
}

TEST(PeerConfig, Rejections) {
  EXPECT_EQ(code_of([] { peer_config_from_json({{"colour", "red"}}); }), Errc::ConfigError);
  EXPECT_EQ(code_of([] { peer_config_from_json({{"capabilities", {{"x", 1ULL << 32}}}}); }), Errc::ConfigError);
  EXPECT_EQ(code_of([] { peer_config_from_json({{"discovery", {{"policy", "manual"}}}}); }), Errc::ConfigError);
  EXPECT_EQ(code_of([] { peer_config_from_json({{"adapter", "carrier_pigeon"}}); }), Errc::ConfigError);
  EXPECT_EQ(code_of([] { peer_config_from_json({{"tunables", {{"heartbeat_interval_ms", -1}}}}); }),
            Errc::ConfigError);
}

TEST(GatewayConfig, DefaultsMatchDesign) {
  const auto c = gateway_config_from_json(nlohmann::json::object());
  EXPECT_EQ(c.retry_budget, 3);
  EXPECT_EQ(c.min_group, 3u);
  EXPECT_EQ(c.prepare_timeout.count(), 5000);
  EXPECT_EQ(c.round_timeout.count(), 10000);
  EXPECT_EQ(c.heartbeat_interval.count(), 1000);
  EXPECT_EQ(c.liveness.suspect_after, 1);
  EXPECT_EQ(c.liveness.unlisted_after, 3);
  EXPECT_EQ(c.channel_wait.count(), 0);
  EXPECT_EQ(c.discovery_group, kDiscoveryGroup);
}

TEST(GatewayConfig, RoundTripAndUnknownKeys) {
  auto c = gateway_config_from_json(nlohmann::json::parse(R"({
    "name": "gw", "bind": {"control": "127.0.0.1:7000", "client": "127.0.0.1:7001"},
    "tunables": {"channel_wait_ms": 1000, "retry_budget": 2, "threshold": 1}
  })"));
  EXPECT_EQ(c.channel_wait.count(), 1000);
  EXPECT_EQ(c.retry_budget, 2);
  EXPECT_EQ(c.threshold, std::optional<std::size_t>(1));
  const auto j = gateway_config_to_json(c);
  EXPECT_EQ(gateway_config_to_json(gateway_config_from_json(j)), j);
  EXPECT_EQ(code_of([] { gateway_config_from_json({{"bind", {{"admin", "x"}}}}); }), Errc::ConfigError);
  EXPECT_EQ(code_of([] { gateway_config_from_json({{"tunables", {{"retry_budget", 0}}}}); }), Errc::ConfigError);
}

TEST(ConfigFile, RelativePathsResolveAgainstFile) {
  const auto dir = fs::temp_directory_path() / ("smcgw-config-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  std::ofstream(dir / "peer.json") << R"({"name": "p", "key_file": "keys/p.key", "trust_store": "/abs/trust.json"})";
  const auto c = load_peer_config(dir / "peer.json");
  EXPECT_EQ(*c.key_file, dir / "keys/p.key");
  EXPECT_EQ(*c.trust_store, fs::path("/abs/trust.json"));
  EXPECT_EQ(code_of([&] { load_peer_config(dir / "missing.json"); }), Errc::ConfigError);
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_EQ(code_of([&] { load_gateway_config(dir / "bad.json"); }), Errc::ConfigError);
  fs::remove_all(dir);
}

TEST(DataSource, SeededIsReproducibleAndBounded) {
  const DataSource s({"t", DataSourceSpec::Kind::Seeded, 0}, "peer1", 42);
  EXPECT_EQ(s.fetch("gw-1.1"), s.fetch("gw-1.1"));
  // Retries of one session read the same input.
  EXPECT_EQ(s.fetch("gw-1.1"), s.fetch("gw-1.3"));
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 200; ++i) {
    const auto v = seeded_reading(42, "peer1", "t", "gw-" + std::to_string(i));
    EXPECT_LT(v, kInputBound);
    seen.insert(v);
  }
  EXPECT_GT(seen.size(), 195u);
  EXPECT_NE(seeded_reading(42, "peer1", "t", "x"), seeded_reading(42, "peer2", "t", "x"));
}

TEST(DataSource, ConstantOutOfRange) {
  const DataSource s({"t", DataSourceSpec::Kind::Constant, kInputBound}, "p", 1);
  EXPECT_EQ(code_of([&] { s.fetch("a"); }), Errc::InputOutOfRange);
}

TEST(SessionIds, BaseStripsAttempt) {
  EXPECT_EQ(base_session_id("gw-3.2"), "gw-3");
  EXPECT_EQ(base_session_id("plain"), "plain");
}

TEST(Identity, SeededIsStableFileIsPersistent) {
  EXPECT_EQ(load_identity("a", std::nullopt, 1).fingerprint(), load_identity("a", std::nullopt, 1).fingerprint());
  EXPECT_NE(load_identity("a", std::nullopt, 1).fingerprint(), load_identity("b", std::nullopt, 1).fingerprint());
  const auto path = fs::temp_directory_path() / ("smcgw-key-" + std::to_string(::getpid()));
  const auto first = load_identity("a", path, 1).fingerprint();
  EXPECT_EQ(load_identity("a", path, 2).fingerprint(), first);
  fs::remove(path);
}

}  // namespace
}  // namespace smcgw

#include "smcgw/config.hpp"

#include <fstream>
#include <set>

namespace smcgw {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(Errc::ConfigError, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error(Errc::ConfigError, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::ConfigError, std::string("bad value for '") + key + "'");
  }
}

void read_ms(const nlohmann::json& j, const char* key, milliseconds& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number() || v.get<double>() < 0) throw Error(Errc::ConfigError, std::string("bad duration '") + key + "'");
  out = milliseconds(v.get<std::int64_t>());
}

void read_address(const nlohmann::json& j, const char* key, net::Address& out) {
  if (!j.contains(key)) return;
  try {
    out = net::Address::parse(j.at(key).get<std::string>());
  } catch (const std::exception& e) {
    throw Error(Errc::ConfigError, std::string("bad address '") + key + "': " + e.what());
  }
}

void read_path(const nlohmann::json& j, const char* key, std::optional<std::filesystem::path>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  out = std::filesystem::path(j.at(key).get<std::string>());
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, path.string() + ": " + e.what());
  }
}

void relative_to(std::optional<std::filesystem::path>& p, const std::filesystem::path& base) {
  if (p && p->is_relative()) p = base / *p;
}


}  // namespace

std::uint64_t seeded_reading(std::uint64_t seed, const std::string& peer, const std::string& capability,
                             const std::string& base_session_id) {
  auto h = hash_seed(seed, peer);
  h = hash_seed(h, capability);
  h = hash_seed(h, base_session_id);
  return h % kInputBound;
}

std::string base_session_id(const std::string& session_id) {
  const auto dot = session_id.rfind('.');
  return dot == std::string::npos ? session_id : session_id.substr(0, dot);
}

DataSource::DataSource(DataSourceSpec spec, std::string peer, std::uint64_t seed)
    : spec_(std::move(spec)), peer_(std::move(peer)), seed_(seed) {}

FieldElement DataSource::fetch(const std::string& session_id) const {
  const std::uint64_t v = spec_.kind == DataSourceSpec::Kind::Constant
                              ? spec_.value
                              : seeded_reading(seed_, peer_, spec_.capability, base_session_id(session_id));
  if (v >= kInputBound) throw Error(Errc::InputOutOfRange, "reading " + std::to_string(v) + " is not below 2^32");
  return FieldElement(v);
}

std::vector<std::string> PeerConfig::capabilities() const {
  std::vector<std::string> out;
  for (const auto& s : sources) out.push_back(s.capability);
  return out;
}

PeerConfig peer_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"name", "key_file", "trust_store", "listen", "location", "capabilities", "discovery", "adapter",
                  "seed", "tunables"},
                 "peer config");
  PeerConfig c;
  read(j, "name", c.name);
  read_path(j, "key_file", c.key_file);
  read_path(j, "trust_store", c.trust_store);
  read_address(j, "listen", c.listen);
  read(j, "location", c.location);
  read(j, "seed", c.seed);
  if (j.contains("adapter")) c.adapter = adapter_mode_from_string(j["adapter"].get<std::string>());
  if (j.contains("capabilities")) {
    const auto& caps = j["capabilities"];
    if (!caps.is_object()) throw Error(Errc::ConfigError, "capabilities must map tag -> source");
    for (const auto& [tag, src] : caps.items()) {
      DataSourceSpec s;
      s.capability = tag;
      if (src.is_number_unsigned()) {
        s.kind = DataSourceSpec::Kind::Constant;
        s.value = src.get<std::uint64_t>();
      } else if (src.is_object()) {
        const auto kind = src.value("kind", "seeded");
        if (kind == "constant") {
          s.kind = DataSourceSpec::Kind::Constant;
          s.value = src.value("value", std::uint64_t{0});
        } else if (kind != "seeded") {
          throw Error(Errc::ConfigError, "unknown data source kind '" + kind + "'");
        }
      } else if (!(src.is_string() && src.get<std::string>() == "seeded")) {
        throw Error(Errc::ConfigError, "bad data source for " + tag);
      }
      if (s.value >= kInputBound) throw Error(Errc::ConfigError, "constant for " + tag + " is not below 2^32");
      c.sources.push_back(s);
    }
  }
  if (j.contains("discovery")) {
    const auto& d = j["discovery"];
    reject_unknown(d, {"policy", "gateway", "location", "purpose", "multicast", "group", "period_ms", "static"},
                   "discovery");
    const auto policy = d.value("policy", "auto");
    if (policy == "manual") {
      c.policy = SelectionPolicy::manual(d.value("gateway", ""));
      if (c.policy.target.empty()) throw Error(Errc::ConfigError, "manual discovery needs a gateway fingerprint");
    } else if (policy == "auto") {
      c.policy = SelectionPolicy::automatic(d.value("location", c.location), d.value("purpose", ""));
    } else {
      throw Error(Errc::ConfigError, "unknown discovery policy '" + policy + "'");
    }
    read(d, "multicast", c.multicast);
    read_address(d, "group", c.discovery_group);
    read_ms(d, "period_ms", c.discovery_period);
    if (d.contains("static")) {
      for (const auto& g : d["static"]) {
        StaticGateway sg;
        read_address(g, "endpoint", sg.endpoint);
        sg.fingerprint = g.value("fingerprint", "");
        sg.name = g.value("name", "");
        c.static_gateways.push_back(sg);
      }
    }
  } else {
    c.policy = SelectionPolicy::automatic(c.location);
  }
  if (j.contains("tunables")) {
    const auto& t = j["tunables"];
    reject_unknown(t,
                   {"heartbeat_interval_ms", "heartbeat_misses", "round_timeout_ms", "handshake_timeout_ms",
                    "establish_timeout_ms", "retry_delay_ms"},
                   "tunables");
    read_ms(t, "heartbeat_interval_ms", c.heartbeat_interval);
    read(t, "heartbeat_misses", c.heartbeat_misses);
    read_ms(t, "round_timeout_ms", c.round_timeout);
    read_ms(t, "handshake_timeout_ms", c.handshake_timeout);
    read_ms(t, "establish_timeout_ms", c.establish_timeout);
    read_ms(t, "retry_delay_ms", c.retry_delay);
  }
  if (c.heartbeat_interval.count() <= 0 || c.heartbeat_misses < 1) {
    throw Error(Errc::ConfigError, "heartbeat interval and miss threshold must be positive");
  }
  return c;
}

nlohmann::json peer_config_to_json(const PeerConfig& c) {
  nlohmann::json caps = nlohmann::json::object();
  for (const auto& s : c.sources) {
    caps[s.capability] = s.kind == DataSourceSpec::Kind::Constant
                             ? nlohmann::json{{"kind", "constant"}, {"value", s.value}}
                             : nlohmann::json{{"kind", "seeded"}};
  }
  nlohmann::json statics = nlohmann::json::array();
  for (const auto& g : c.static_gateways) {
    statics.push_back({{"endpoint", g.endpoint.to_string()}, {"fingerprint", g.fingerprint}, {"name", g.name}});
  }
  nlohmann::json disc = {{"multicast", c.multicast},
                         {"group", c.discovery_group.to_string()},
                         {"period_ms", c.discovery_period.count()},
                         {"static", statics}};
  if (c.policy.kind == SelectionPolicy::Kind::Manual) {
    disc["policy"] = "manual";
    disc["gateway"] = c.policy.target;
  } else {
    disc["policy"] = "auto";
    disc["location"] = c.policy.location;
    disc["purpose"] = c.policy.purpose;
  }
  nlohmann::json j = {{"name", c.name},
                      {"listen", c.listen.to_string()},
                      {"location", c.location},
                      {"capabilities", caps},
                      {"discovery", disc},
                      {"adapter", to_string(c.adapter)},
                      {"seed", c.seed},
                      {"tunables",
                       {{"heartbeat_interval_ms", c.heartbeat_interval.count()},
                        {"heartbeat_misses", c.heartbeat_misses},
                        {"round_timeout_ms", c.round_timeout.count()},
                        {"handshake_timeout_ms", c.handshake_timeout.count()},
                        {"establish_timeout_ms", c.establish_timeout.count()},
                        {"retry_delay_ms", c.retry_delay.count()}}}};
  if (c.key_file) j["key_file"] = c.key_file->string();
  if (c.trust_store) j["trust_store"] = c.trust_store->string();
  return j;
}

PeerConfig load_peer_config(const std::filesystem::path& path) {
  auto c = peer_config_from_json(load_json(path));
  relative_to(c.key_file, path.parent_path());
  relative_to(c.trust_store, path.parent_path());
  return c;
}

GatewayConfig gateway_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"name", "key_file", "trust_store", "bind", "announce", "location", "purpose", "adapter", "seed",
                  "tunables"},
                 "gateway config");
  GatewayConfig c;
  read(j, "name", c.name);
  read_path(j, "key_file", c.key_file);
  read_path(j, "trust_store", c.trust_store);
  read(j, "announce", c.announce);
  read(j, "location", c.location);
  read(j, "purpose", c.purpose);
  read(j, "seed", c.seed);
  if (j.contains("adapter")) c.adapter = adapter_mode_from_string(j["adapter"].get<std::string>());
  if (j.contains("bind")) {
    const auto& b = j["bind"];
    reject_unknown(b, {"control", "client", "discovery"}, "bind");
    read_address(b, "control", c.control);
    read_address(b, "client", c.client);
    read_address(b, "discovery", c.discovery_group);
  }
  if (j.contains("tunables")) {
    const auto& t = j["tunables"];
    reject_unknown(t,
                   {"retry_budget", "min_group", "threshold", "channel_wait_ms", "heartbeat_interval_ms",
                    "heartbeat_window_ms", "suspect_after_misses", "unlisted_after_misses", "prepare_timeout_ms",
                    "round_timeout_ms", "handshake_timeout_ms", "establish_timeout_ms", "recovery_delay_ms",
                    "completion_grace_ms", "announce_period_ms"},
                   "tunables");
    read(t, "retry_budget", c.retry_budget);
    read(t, "min_group", c.min_group);
    if (t.contains("threshold") && !t["threshold"].is_null()) c.threshold = t["threshold"].get<std::size_t>();
    read_ms(t, "channel_wait_ms", c.channel_wait);
    read_ms(t, "heartbeat_interval_ms", c.heartbeat_interval);
    milliseconds window = std::chrono::duration_cast<milliseconds>(c.liveness.window);
    read_ms(t, "heartbeat_window_ms", window);
    c.liveness.window = window;
    read(t, "suspect_after_misses", c.liveness.suspect_after);
    read(t, "unlisted_after_misses", c.liveness.unlisted_after);
    read_ms(t, "prepare_timeout_ms", c.prepare_timeout);
    read_ms(t, "round_timeout_ms", c.round_timeout);
    read_ms(t, "handshake_timeout_ms", c.handshake_timeout);
    read_ms(t, "establish_timeout_ms", c.establish_timeout);
    read_ms(t, "recovery_delay_ms", c.recovery_delay);
    read_ms(t, "completion_grace_ms", c.completion_grace);
    read_ms(t, "announce_period_ms", c.announce_period);
  }
  if (c.retry_budget < 1) throw Error(Errc::ConfigError, "retry_budget must be at least 1");
  if (c.liveness.window.count() <= 0 || c.liveness.suspect_after < 1 ||
      c.liveness.unlisted_after < c.liveness.suspect_after) {
    throw Error(Errc::ConfigError, "liveness windows are inconsistent");
  }
  return c;
}

nlohmann::json gateway_config_to_json(const GatewayConfig& c) {
  nlohmann::json j = {
      {"name", c.name},
      {"bind",
       {{"control", c.control.to_string()}, {"client", c.client.to_string()}, {"discovery", c.discovery_group.to_string()}}},
      {"announce", c.announce},
      {"location", c.location},
      {"purpose", c.purpose},
      {"adapter", to_string(c.adapter)},
      {"seed", c.seed},
      {"tunables",
       {{"retry_budget", c.retry_budget},
        {"min_group", c.min_group},
        {"threshold", c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json()},
        {"channel_wait_ms", c.channel_wait.count()},
        {"heartbeat_interval_ms", c.heartbeat_interval.count()},
        {"heartbeat_window_ms", std::chrono::duration_cast<milliseconds>(c.liveness.window).count()},
        {"suspect_after_misses", c.liveness.suspect_after},
        {"unlisted_after_misses", c.liveness.unlisted_after},
        {"prepare_timeout_ms", c.prepare_timeout.count()},
        {"round_timeout_ms", c.round_timeout.count()},
        {"handshake_timeout_ms", c.handshake_timeout.count()},
        {"establish_timeout_ms", c.establish_timeout.count()},
        {"recovery_delay_ms", c.recovery_delay.count()},
        {"completion_grace_ms", c.completion_grace.count()},
        {"announce_period_ms", c.announce_period.count()}}}};
  if (c.key_file) j["key_file"] = c.key_file->string();
  if (c.trust_store) j["trust_store"] = c.trust_store->string();
  return j;
}

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
  auto c = gateway_config_from_json(load_json(path));
  relative_to(c.key_file, path.parent_path());
  relative_to(c.trust_store, path.parent_path());
  return c;
}

Identity load_identity(const std::string& name, const std::optional<std::filesystem::path>& key_file,
                       std::uint64_t seed) {
  if (key_file) return Identity{name, KeyPair::load_or_create(*key_file)};
  SeededRandom rng(hash_seed(seed, "identity:" + name));
  return Identity{name, KeyPair::from_random(rng)};
}

}  // namespace smcgw

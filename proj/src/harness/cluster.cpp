#include "smcgw/harness/cluster.hpp"

namespace smcgw::harness {

using namespace std::chrono_literals;

namespace {
constexpr std::uint16_t kPeerPort = 6000;
constexpr std::uint16_t kControlPort = 7000;
constexpr std::uint16_t kClientPort = 7001;
}  // namespace

std::string peer_name(std::size_t index) { return "peer" + std::to_string(index + 1); }

std::uint64_t expected_input(const ClusterSpec& spec, std::size_t index, const std::string& session_id) {
  if (!spec.inputs.empty()) return spec.inputs.at(index);
  return seeded_reading(spec.seed, peer_name(index), spec.capability, base_session_id(session_id));
}

SimCluster::SimCluster(ClusterSpec spec) : spec_(std::move(spec)), world_(spec_.seed, spec_.faults) {
  if (!spec_.inputs.empty() && spec_.inputs.size() != spec_.peers) {
    throw Error(Errc::ScenarioSetupFailed, "inputs must list one value per peer");
  }
  auto& gw_host = world_.add_host("gw");
  GatewayConfig g;
  g.name = "gw";
  g.control = {"gw", kControlPort};
  g.client = {"gw", kClientPort};
  g.location = spec_.location;
  g.adapter = spec_.adapter;
  g.seed = spec_.seed;
  g.channel_wait = spec_.channel_wait;
  if (spec_.gateway_tweak) spec_.gateway_tweak(g);
  auto gw_id = load_identity(g.name, std::nullopt, g.seed);
  gateway_ = GatewayDaemon::create(gw_host, g, gw_id);
  gateway_->set_liveness_observer([this](const std::string& fp, Liveness l) {
    liveness_log_.push_back({world_.now(), name_of(fp), l});
  });
  gateway_->start();

  for (std::size_t i = 0; i < spec_.peers; ++i) {
    world_.add_host(peer_name(i));
    peer_ids_.push_back(load_identity(peer_name(i), std::nullopt, mix_seed(spec_.seed, i + 1)));
    peers_.push_back(nullptr);
    make_peer(i, TrustStore());
  }
  world_.add_host("client");
  client_id_ = load_identity("client", std::nullopt, spec_.seed);
}

SimCluster::~SimCluster() {
  if (client_) client_->close();
  client_.reset();
  for (auto& p : peers_) {
    if (p) p->stop();
  }
  peers_.clear();
  if (gateway_) gateway_->stop();
  gateway_.reset();
  world_.run_for(1ms);
}

void SimCluster::make_peer(std::size_t i, TrustStore trust) {
  PeerConfig c;
  c.name = peer_name(i);
  c.listen = {c.name, kPeerPort};
  c.location = spec_.location;
  DataSourceSpec src;
  src.capability = spec_.capability;
  if (spec_.inputs.empty()) {
    src.kind = DataSourceSpec::Kind::Seeded;
  } else {
    src.kind = DataSourceSpec::Kind::Constant;
    src.value = spec_.inputs[i];
  }
  c.sources.push_back(src);
  c.adapter = spec_.adapter;
  c.seed = spec_.seed;
  if (spec_.peer_tweak) spec_.peer_tweak(i, c);
  peers_[i] = PeerDaemon::create(world_.host(c.name), c, peer_ids_[i], std::move(trust));
  peers_[i]->start();
}

std::string SimCluster::name_of(const std::string& fp) const {
  for (std::size_t i = 0; i < peer_ids_.size(); ++i) {
    if (peer_ids_[i].fingerprint() == fp) return peer_name(i);
  }
  return fp;
}

void SimCluster::wait_operational(net::Duration limit) {
  const bool ok = world_.run_until(
      [this] {
        for (std::size_t i = 0; i < peers_.size(); ++i) {
          if (!world_.host(peer_name(i)).alive()) continue;
          if (peers_[i]->state() != PeerState::Operation) return false;
          if (!gateway_->registry().is_active(peer_ids_[i].fingerprint())) return false;
        }
        return true;
      },
      limit);
  if (!ok) throw Error(Errc::ScenarioSetupFailed, "peers did not reach Operation in time");
}

void SimCluster::connect_client(net::Duration limit) {
  struct Outcome {
    bool done = false;
    Client::Ptr client;
    std::optional<Error> error;
  };
  auto out = std::make_shared<Outcome>();
  Client::connect(world_.host("client"), client_id_, {"gw", kClientPort}, gateway_->identity().fingerprint(), 5s,
                  [out](Client::Ptr c, std::optional<Error> err) {
                    out->client = std::move(c);
                    out->error = std::move(err);
                    out->done = true;
                  });
  world_.run_until([&] { return out->done; }, limit);
  if (!out->done) throw Error(Errc::ScenarioSetupFailed, "client could not reach the gateway");
  if (out->error) throw *out->error;
  client_ = out->client;
}

nlohmann::json SimCluster::request(const nlohmann::json& body, net::Duration limit) {
  if (!client_ || !client_->is_open()) connect_client(10s);
  auto reply = std::make_shared<std::optional<nlohmann::json>>();
  client_->request(body, [reply](nlohmann::json r) { *reply = std::move(r); });
  world_.run_until([&] { return reply->has_value(); }, limit);
  if (!*reply) throw Error(Errc::RequestTimeout, "no reply from the gateway");
  return std::move(**reply);
}

nlohmann::json Cluster::sum(Operation op) {
  return request(
      {{"group", spec().group()}, {"operation", std::string(to_string(op))}, {"data_type", spec().capability}});
}

void SimCluster::kill_peer(std::size_t i) { world_.kill(peer_name(i)); }

void SimCluster::restart_peer(std::size_t i) {
  TrustStore trust = peers_[i]->trust();
  peers_[i]->stop();
  peers_[i].reset();
  if (!world_.host(peer_name(i)).alive()) world_.restart(peer_name(i));
  make_peer(i, std::move(trust));
}

}  // namespace smcgw::harness

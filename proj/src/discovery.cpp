#include "smcgw/discovery.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "smcgw/frame.hpp"

namespace smcgw {

nlohmann::json announcement_to_json(const GatewayAnnouncement& a) {
  return {{"fingerprint", a.fingerprint},
          {"name", a.name},
          {"public_key", a.public_key_hex},
          {"endpoint", a.endpoint.to_string()},
          {"location", a.location},
          {"purpose", a.purpose},
          {"protocols", a.protocols}};
}

GatewayAnnouncement announcement_from_json(const nlohmann::json& j) {
  try {
    GatewayAnnouncement a;
    a.fingerprint = j.at("fingerprint").get<std::string>();
    a.name = j.at("name").get<std::string>();
    a.public_key_hex = j.value("public_key", "");
    a.endpoint = net::Address::parse(j.at("endpoint").get<std::string>());
    a.location = j.value("location", "");
    a.purpose = j.value("purpose", "");
    a.protocols = j.value("protocols", std::vector<std::string>{});
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedMessage, std::string("bad announcement: ") + e.what());
  }
}

std::string encode_announcement(const GatewayAnnouncement& a) {
  return encode_payload(Message{MessageType::Announce, a.fingerprint, std::nullopt, announcement_to_json(a),
                                std::nullopt});
}

GatewayAnnouncement decode_announcement(std::string_view datagram) {
  const auto msg = decode_payload(datagram);
  if (msg.type != MessageType::Announce) throw Error(Errc::MalformedMessage, "datagram is not an announcement");
  auto a = announcement_from_json(msg.body);
  if (a.fingerprint != msg.sender) throw Error(Errc::MalformedMessage, "announcement sender mismatch");
  if (!a.public_key_hex.empty() && fingerprint_of(public_key_from_hex(a.public_key_hex)) != a.fingerprint) {
    throw Error(Errc::MalformedMessage, "announced key does not match fingerprint");
  }
  return a;
}

SelectionPolicy SelectionPolicy::automatic(std::string location, std::string purpose) {
  SelectionPolicy p;
  p.location = std::move(location);
  p.purpose = std::move(purpose);
  return p;
}

SelectionPolicy SelectionPolicy::manual(std::string fingerprint) {
  SelectionPolicy p;
  p.kind = Kind::Manual;
  p.target = std::move(fingerprint);
  return p;
}

GatewayAnnouncement select_gateway(const std::vector<GatewayAnnouncement>& candidates, const SelectionPolicy& policy) {
  if (candidates.empty()) throw Error(Errc::NoCandidates, "no gateway candidates");
  if (policy.kind == SelectionPolicy::Kind::Manual) {
    for (const auto& c : candidates) {
      if (c.fingerprint == policy.target) return c;
    }
    throw Error(Errc::ManualTargetAbsent, "gateway " + policy.target + " is not among the candidates");
  }
  auto key = [&](const GatewayAnnouncement& a) {
    const bool loc = !policy.location.empty() && a.location == policy.location;
    const bool pur = !policy.purpose.empty() && a.purpose == policy.purpose;
    // Lower sorts first.
    return std::make_tuple(!loc, !pur, a.fingerprint);
  };
  return *std::min_element(candidates.begin(), candidates.end(),
                           [&](const auto& a, const auto& b) { return key(a) < key(b); });
}

void DiscoveryCache::observe(const GatewayAnnouncement& a, net::Duration now) {
  entries_.insert_or_assign(a.fingerprint, Entry{a, now});
}

std::vector<GatewayAnnouncement> DiscoveryCache::candidates(net::Duration now) const {
  std::vector<GatewayAnnouncement> out;
  for (const auto& [fp, e] : entries_) {
    if (now - e.last_seen <= period_ * kCacheExpiryPeriods) out.push_back(e.announcement);
  }
  return out;
}

void DiscoveryCache::expire(net::Duration now) {
  std::erase_if(entries_, [&](const auto& kv) { return now - kv.second.last_seen > period_ * kCacheExpiryPeriods; });
}

Announcer::Announcer(net::Host& host, GatewayAnnouncement a, net::Address group, net::Duration period)
    : host_(host), datagram_(encode_announcement(a)), group_(std::move(group)), period_(period) {}

std::shared_ptr<Announcer> Announcer::create(net::Host& host, GatewayAnnouncement announcement, net::Address group,
                                             net::Duration period) {
  return std::shared_ptr<Announcer>(new Announcer(host, std::move(announcement), std::move(group), period));
}

void Announcer::start() {
  if (running_) return;
  running_ = true;
  tick();
}

void Announcer::stop() {
  running_ = false;
  timer_.cancel();
}

void Announcer::tick() {
  if (!running_) return;
  try {
    host_.send_datagram(group_, datagram_);
    ++sent_;
  } catch (const Error& e) {
    spdlog::warn("{}: announcement failed: {}", host_.name(), e.what());
  }
  std::weak_ptr<Announcer> weak = shared_from_this();
  timer_ = host_.after(period_, [weak] {
    if (auto self = weak.lock()) self->tick();
  });
}

Browser::Browser(net::Host& host, net::Address group, Handler on_announcement) {
  net::Address bind{group.host, group.port};
  socket_ = host.open_datagram(bind, [on = std::move(on_announcement)](std::string payload, net::Address) {
    try {
      on(decode_announcement(payload));
    } catch (const Error& e) {
      spdlog::debug("ignoring datagram: {}", e.what());
    }
  });
}

Browser::~Browser() { close(); }

void Browser::close() {
  if (socket_) socket_->close();
  socket_.reset();
}

nlohmann::json metadata_to_json(const PeerMetadata& m) {
  return {{"name", m.name},
          {"fingerprint", m.fingerprint},
          {"public_key", m.public_key_hex},
          {"endpoint", m.endpoint.to_string()},
          {"location", m.location},
          {"capabilities", m.capabilities},
          {"protocols", m.protocols}};
}

PeerMetadata metadata_from_json(const nlohmann::json& j) {
  try {
    PeerMetadata m;
    m.name = j.at("name").get<std::string>();
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.public_key_hex = j.at("public_key").get<std::string>();
    m.endpoint = net::Address::parse(j.at("endpoint").get<std::string>());
    m.location = j.value("location", "");
    m.capabilities = j.value("capabilities", std::vector<std::string>{});
    m.protocols = j.value("protocols", std::vector<std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedMessage, std::string("bad peer metadata: ") + e.what());
  }
}

std::string group_label(const std::string& location, const std::string& capability) {
  return location + "/" + capability;
}

nlohmann::json bundle_to_json(const std::vector<TrustBundleEntry>& bundle) {
  auto arr = nlohmann::json::array();
  for (const auto& e : bundle) {
    arr.push_back({{"name", e.name}, {"fingerprint", e.fingerprint}, {"public_key", e.public_key_hex}});
  }
  return arr;
}

std::vector<TrustBundleEntry> bundle_from_json(const nlohmann::json& j) {
  try {
    std::vector<TrustBundleEntry> out;
    for (const auto& e : j) {
      out.push_back({e.at("name").get<std::string>(), e.at("fingerprint").get<std::string>(),
                     e.at("public_key").get<std::string>()});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedMessage, std::string("bad trust bundle: ") + e.what());
  }
}

std::size_t pin_bundle(TrustStore& store, const std::vector<TrustBundleEntry>& bundle, std::int64_t now_ms) {
  std::size_t added = 0;
  for (const auto& e : bundle) {
    if (store.pin(e.name, e.fingerprint, e.public_key_hex, now_ms) == TrustStore::PinResult::Pinned) ++added;
  }
  return added;
}

}  // namespace smcgw

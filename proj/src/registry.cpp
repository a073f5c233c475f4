#include "smcgw/registry.hpp"

#include <algorithm>
#include <set>

namespace smcgw {

std::string_view to_string(Liveness l) {
  switch (l) {
    case Liveness::Active:
      return "active";
    case Liveness::Suspect:
      return "suspect";
    case Liveness::Unlisted:
      return "unlisted";
  }
  return "unlisted";
}

std::vector<std::string> Registry::register_peer(const PeerMetadata& meta) {
  if (meta.capabilities.empty()) throw Error(Errc::MetadataRejected, meta.name + " declares no capabilities");
  if (std::find(meta.protocols.begin(), meta.protocols.end(), kProtocolShamirSum) == meta.protocols.end()) {
    throw Error(Errc::MetadataRejected, meta.name + " does not speak " + std::string(kProtocolShamirSum));
  }
  if (meta.fingerprint.empty() || meta.location.empty()) {
    throw Error(Errc::MetadataRejected, "metadata lacks a fingerprint or location");
  }
  auto& e = entries_[meta.fingerprint];
  e.meta = meta;
  e.groups.clear();
  std::set<std::string> labels;
  for (const auto& c : meta.capabilities) labels.insert(group_label(meta.location, c));
  e.groups.assign(labels.begin(), labels.end());
  return e.groups;
}

void Registry::attach_control(const std::string& fingerprint, SecureChannel::Ptr channel, net::Duration now) {
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) throw Error(Errc::UnknownParticipant, "control channel from an unpaired peer");
  auto& e = it->second;
  if (e.control && e.control != channel) e.control->close();
  e.control = std::move(channel);
  e.liveness = Liveness::Active;
  e.last_heartbeat = now;
}

void Registry::heartbeat(const std::string& fingerprint, net::Duration now) {
  auto it = entries_.find(fingerprint);
  if (it == entries_.end() || it->second.liveness == Liveness::Unlisted) return;
  it->second.last_heartbeat = now;
  it->second.liveness = Liveness::Active;
}

int missed_beats(net::Duration elapsed, const LivenessPolicy& policy) {
  if (elapsed < policy.window) return 0;
  return 1 + static_cast<int>((elapsed - policy.window) / policy.interval);
}

std::vector<std::pair<std::string, SecureChannel::Ptr>> Registry::sweep(net::Duration now,
                                                                       const LivenessPolicy& policy) {
  std::vector<std::pair<std::string, SecureChannel::Ptr>> dropped;
  for (auto& [fp, e] : entries_) {
    if (e.liveness == Liveness::Unlisted) continue;
    const auto missed = missed_beats(now - e.last_heartbeat, policy);
    if (missed >= policy.unlisted_after) {
      e.liveness = Liveness::Unlisted;
      dropped.emplace_back(fp, std::move(e.control));
      e.control.reset();
    } else if (missed >= policy.suspect_after) {
      e.liveness = Liveness::Suspect;
    } else {
      e.liveness = Liveness::Active;
    }
  }
  return dropped;
}

SecureChannel::Ptr Registry::unlist(const std::string& fingerprint) {
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) return nullptr;
  it->second.liveness = Liveness::Unlisted;
  auto ch = std::move(it->second.control);
  it->second.control.reset();
  return ch;
}

const RegistryEntry* Registry::find(const std::string& fingerprint) const {
  auto it = entries_.find(fingerprint);
  return it == entries_.end() ? nullptr : &it->second;
}

bool Registry::is_active(const std::string& fingerprint) const {
  const auto* e = find(fingerprint);
  return e && e->liveness == Liveness::Active;
}

std::vector<PeerMetadata> Registry::members(const std::string& group) const {
  std::vector<PeerMetadata> out;
  for (const auto& [fp, e] : entries_) {
    if (e.liveness != Liveness::Active) continue;
    if (std::find(e.groups.begin(), e.groups.end(), group) != e.groups.end()) out.push_back(e.meta);
  }
  return out;
}

bool Registry::has_group(const std::string& group) const {
  for (const auto& [fp, e] : entries_) {
    if (std::find(e.groups.begin(), e.groups.end(), group) != e.groups.end()) return true;
  }
  return false;
}

nlohmann::json Registry::catalog() const {
  std::map<std::string, std::vector<std::string>> groups;
  auto peers = nlohmann::json::array();
  auto liveness = nlohmann::json::array();
  for (const auto& [fp, e] : entries_) {
    liveness.push_back({{"name", e.meta.name}, {"fingerprint", fp}, {"liveness", std::string(to_string(e.liveness))}});
    if (e.liveness != Liveness::Active) continue;
    for (const auto& g : e.groups) groups[g].push_back(fp);
    peers.push_back({{"name", e.meta.name},
                     {"fingerprint", fp},
                     {"location", e.meta.location},
                     {"capabilities", e.meta.capabilities}});
  }
  auto gj = nlohmann::json::array();
  for (const auto& [label, members] : groups) {
    const auto slash = label.find('/');
    gj.push_back({{"label", label},
                  {"location", label.substr(0, slash)},
                  {"capability", label.substr(slash + 1)},
                  {"members", members}});
  }
  return {{"groups", gj}, {"peers", peers}, {"liveness", liveness}};
}

std::map<std::string, std::vector<TrustBundleEntry>> Registry::distribute_group_certs(
    const std::vector<std::string>& participants, const TrustBundleEntry& gateway) const {
  std::vector<TrustBundleEntry> all;
  std::set<std::string> seen;
  for (const auto& fp : participants) {
    if (!seen.insert(fp).second) continue;
    if (fp == gateway.fingerprint) {
      all.push_back(gateway);
      continue;
    }
    const auto* e = find(fp);
    if (!e) throw Error(Errc::UnknownParticipant, "participant " + fp.substr(0, 16) + " is not paired");
    all.push_back({e->meta.name, fp, e->meta.public_key_hex});
  }
  std::map<std::string, std::vector<TrustBundleEntry>> out;
  for (const auto& self : all) {
    auto& bundle = out[self.fingerprint];
    for (const auto& other : all) {
      if (other.fingerprint != self.fingerprint) bundle.push_back(other);
    }
  }
  return out;
}

}  // namespace smcgw

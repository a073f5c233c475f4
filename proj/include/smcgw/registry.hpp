#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/discovery.hpp"
#include "smcgw/secure_channel.hpp"

namespace smcgw {

enum class Liveness { Active, Suspect, Unlisted };
std::string_view to_string(Liveness l);

struct RegistryEntry {
  PeerMetadata meta;
  Liveness liveness = Liveness::Unlisted;
  net::Duration last_heartbeat{0};
  SecureChannel::Ptr control;
  std::vector<std::string> groups;
};

/// A beat counts as missed once `window` has passed since it was due one
/// interval earlier: the first miss is declared `window` after the last
/// beat, each further one an interval later.
struct LivenessPolicy {
  net::Duration interval = std::chrono::milliseconds(1000);
  net::Duration window = std::chrono::milliseconds(1500);
  int suspect_after = 1;
  int unlisted_after = 3;
};

/// Gateway-side record of paired peers. Single writer: the gateway's loop.
/// Beats missed at `elapsed` since the last one.
int missed_beats(net::Duration elapsed, const LivenessPolicy& policy);

class Registry {
 public:
  /// Adds or refreshes a peer and derives its group labels. The peer stays
  /// Unlisted until its control channel is up. Throws MetadataRejected.
  std::vector<std::string> register_peer(const PeerMetadata& meta);
  /// Control channel up: the peer becomes Active.
  void attach_control(const std::string& fingerprint, SecureChannel::Ptr channel, net::Duration now);
  void heartbeat(const std::string& fingerprint, net::Duration now);
  /// Applies the missed-window rule. Returns peers that just became Unlisted;
  /// their control channels are detached and returned for cleanup.
  std::vector<std::pair<std::string, SecureChannel::Ptr>> sweep(net::Duration now, const LivenessPolicy& policy);
  /// Connection loss: Unlisted right away. Returns the detached channel.
  SecureChannel::Ptr unlist(const std::string& fingerprint);

  const RegistryEntry* find(const std::string& fingerprint) const;
  bool is_active(const std::string& fingerprint) const;
  /// Active members of a group, ordered by fingerprint.
  std::vector<PeerMetadata> members(const std::string& group) const;
  bool has_group(const std::string& group) const;
  /// Active peers grouped by label (no endpoints), plus the liveness of
  /// every peer the gateway has seen.
  nlohmann::json catalog() const;
  const std::map<std::string, RegistryEntry>& entries() const { return entries_; }

  /// Per participant, the pins of every other participant. `gateway` is
  /// included as a participant. Throws UnknownParticipant.
  std::map<std::string, std::vector<TrustBundleEntry>> distribute_group_certs(
      const std::vector<std::string>& participants, const TrustBundleEntry& gateway) const;

 private:
  std::map<std::string, RegistryEntry> entries_;
};

}  // namespace smcgw

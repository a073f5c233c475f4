#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/identity.hpp"
#include "smcgw/net/host.hpp"

namespace smcgw {

inline constexpr std::string_view kProtocolShamirSum = "shamir_sum_v1";
inline constexpr net::Duration kAnnouncePeriod = std::chrono::seconds(2);
inline constexpr int kCacheExpiryPeriods = 3;
inline const net::Address kDiscoveryGroup{"239.255.42.99", 47000};

struct GatewayAnnouncement {
  std::string fingerprint;
  std::string name;
  std::string public_key_hex;
  net::Address endpoint;
  std::string location;
  std::string purpose;
  std::vector<std::string> protocols;

  friend bool operator==(const GatewayAnnouncement&, const GatewayAnnouncement&) = default;
};

nlohmann::json announcement_to_json(const GatewayAnnouncement& a);
GatewayAnnouncement announcement_from_json(const nlohmann::json& j);
/// One datagram: the JSON payload of an "announce" message, no length prefix.
std::string encode_announcement(const GatewayAnnouncement& a);
/// Throws MalformedJson / MalformedMessage / UnknownType.
GatewayAnnouncement decode_announcement(std::string_view datagram);

struct SelectionPolicy {
  enum class Kind { Auto, Manual };
  Kind kind = Kind::Auto;
  /// Gateway fingerprint for Manual.
  std::string target;
  /// Preferences used by Auto.
  std::string location;
  std::string purpose;

  static SelectionPolicy automatic(std::string location = {}, std::string purpose = {});
  static SelectionPolicy manual(std::string fingerprint);
};

/// Manual picks the named gateway; Auto prefers a matching location, then a
/// matching purpose, then the lowest fingerprint. Throws NoCandidates or
/// ManualTargetAbsent.
GatewayAnnouncement select_gateway(const std::vector<GatewayAnnouncement>& candidates, const SelectionPolicy& policy);

/// Announcements heard recently. Entries expire after three missed periods.
class DiscoveryCache {
 public:
  explicit DiscoveryCache(net::Duration period = kAnnouncePeriod) : period_(period) {}

  void observe(const GatewayAnnouncement& a, net::Duration now);
  /// Live candidates, ordered by fingerprint.
  std::vector<GatewayAnnouncement> candidates(net::Duration now) const;
  void expire(net::Duration now);
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    GatewayAnnouncement announcement;
    net::Duration last_seen;
  };
  net::Duration period_;
  std::map<std::string, Entry> entries_;
};

/// Periodically sends the gateway's announcement to the discovery group.
class Announcer : public std::enable_shared_from_this<Announcer> {
 public:
  static std::shared_ptr<Announcer> create(net::Host& host, GatewayAnnouncement announcement,
                                           net::Address group = kDiscoveryGroup, net::Duration period = kAnnouncePeriod);
  void start();
  void stop();
  std::size_t sent() const { return sent_; }

 private:
  Announcer(net::Host& host, GatewayAnnouncement a, net::Address group, net::Duration period);
  void tick();

  net::Host& host_;
  std::string datagram_;
  net::Address group_;
  net::Duration period_;
  net::TimerHandle timer_;
  bool running_ = false;
  std::size_t sent_ = 0;
};

/// Listens on the discovery port and feeds a cache.
class Browser {
 public:
  using Handler = std::function<void(const GatewayAnnouncement&)>;
  /// Throws SocketUnavailable.
  Browser(net::Host& host, net::Address group, Handler on_announcement);
  ~Browser();
  void close();

 private:
  net::DatagramPtr socket_;
};

/// What a peer tells the gateway about itself when pairing.
struct PeerMetadata {
  std::string name;
  std::string fingerprint;
  std::string public_key_hex;
  /// Where the peer accepts protocol channels.
  net::Address endpoint;
  std::string location;
  std::vector<std::string> capabilities;
  std::vector<std::string> protocols;

  friend bool operator==(const PeerMetadata&, const PeerMetadata&) = default;
};

nlohmann::json metadata_to_json(const PeerMetadata& m);
PeerMetadata metadata_from_json(const nlohmann::json& j);

/// "<location>/<capability>".
std::string group_label(const std::string& location, const std::string& capability);

/// One entry of a trust bundle: enough to pin and reach a participant.
struct TrustBundleEntry {
  std::string name;
  std::string fingerprint;
  std::string public_key_hex;

  friend bool operator==(const TrustBundleEntry&, const TrustBundleEntry&) = default;
};

nlohmann::json bundle_to_json(const std::vector<TrustBundleEntry>& bundle);
std::vector<TrustBundleEntry> bundle_from_json(const nlohmann::json& j);

/// Pins every entry; returns how many were new. Throws FingerprintMismatch.
std::size_t pin_bundle(TrustStore& store, const std::vector<TrustBundleEntry>& bundle, std::int64_t now_ms);

}  // namespace smcgw

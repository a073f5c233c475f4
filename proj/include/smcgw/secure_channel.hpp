#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "smcgw/identity.hpp"
#include "smcgw/net/host.hpp"

namespace smcgw {

inline constexpr net::Duration kDefaultHandshakeTimeout = std::chrono::seconds(5);

/// What the other side proved during the handshake, plus what it asked for.
struct RemoteIdentity {
  std::string name;
  std::string fingerprint;
  std::string public_key_hex;
  /// "pair", "control", "data" or "client".
  std::string purpose;
  std::optional<std::string> session_id;
  nlohmann::json extra = nlohmann::json::object();
};

/// Decides whether a remote identity is acceptable. Throws (typically
/// FingerprintMismatch or Refused) to reject.
using Verifier = std::function<void(const RemoteIdentity&)>;

/// Accepts only identities already pinned in `store` under their name.
Verifier pinned_in(const TrustStore& store);
/// Pins unknown identities (trust on first use); rejects changed keys.
Verifier trust_on_first_use(TrustStore& store, std::function<std::int64_t()> clock);
Verifier accept_any();

struct HandshakeOptions {
  std::string purpose = "control";
  std::optional<std::string> session_id;
  /// Fingerprint the initiator insists on; mismatch aborts.
  std::optional<std::string> expected_fingerprint;
  Verifier verify = accept_any();
  net::Duration timeout = kDefaultHandshakeTimeout;
  nlohmann::json extra = nlohmann::json::object();
};

/// Authenticated, encrypted channel over one link. Hello messages travel in
/// the clear; every later frame carries a sequence number and a sealed body
/// bound to the type, sender, session and sequence number.
class SecureChannel : public std::enable_shared_from_this<SecureChannel> {
 public:
  using Ptr = std::shared_ptr<SecureChannel>;
  using ReadyHandler = std::function<void(Ptr, std::optional<Error>)>;
  using MessageHandler = std::function<void(Message)>;
  using CloseHandler = std::function<void()>;

  /// Connects and runs the initiator side.
  static void open(net::Host& host, const Identity& self, const net::Address& target, HandshakeOptions options,
                   ReadyHandler on_ready);
  /// Runs the initiator side over an existing link.
  static void initiate(net::Host& host, const Identity& self, net::LinkPtr link, HandshakeOptions options,
                       ReadyHandler on_ready);
  /// Runs the responder side on an accepted link. `options.verify` sees the
  /// initiator's identity and requested purpose/session.
  static void respond(net::Host& host, const Identity& self, net::LinkPtr link, HandshakeOptions options,
                      ReadyHandler on_ready);

  ~SecureChannel();

  /// Starts delivering messages. Messages that arrived earlier come first.
  void start(MessageHandler on_message, CloseHandler on_close);
  /// Seals and sends. Sender and sequence number are filled in.
  void send(Message msg);
  void close();
  bool is_open() const;

  const RemoteIdentity& remote() const { return remote_; }
  net::Duration established_at() const { return established_at_; }
  /// Frames dropped because they failed authentication or were replays.
  std::size_t rejected_frames() const { return rejected_; }

  /// Test hook: raw encoded frames as they went onto the link.
  void set_wire_tap(std::function<void(const std::string&)> tap) { wire_tap_ = std::move(tap); }
  /// Test hook: injects an encoded frame as if received from the link.
  void inject_frame(const std::string& frame);

 private:
  enum class Role { Initiator, Responder };
  enum class Phase { AwaitResp, AwaitInit, AwaitFin, Open, Failed };

  SecureChannel(net::Host& host, const Identity& self, net::LinkPtr link, HandshakeOptions options, Role role,
                ReadyHandler on_ready);

  void begin();
  void on_frame(std::string payload);
  void handle_handshake(const Message& msg);
  void handle_sealed(const Message& msg);
  void fail(const Error& err, bool tell_remote);
  void succeed();
  void derive_keys(bool as_client, const std::array<std::uint8_t, 32>& remote_eph);
  std::array<std::uint8_t, 32> transcript_hash() const;
  nlohmann::json hello_identity() const;
  void send_raw(const Message& msg);

  net::Host& host_;
  Identity self_;
  net::LinkPtr link_;
  HandshakeOptions options_;
  Role role_;
  Phase phase_;
  ReadyHandler on_ready_;
  MessageHandler on_message_;
  CloseHandler on_close_;
  net::TimerHandle timeout_;
  RemoteIdentity remote_;
  net::Duration established_at_{0};

  std::array<std::uint8_t, 32> eph_public_{};
  std::array<std::uint8_t, 32> eph_secret_{};
  std::array<std::uint8_t, 32> init_eph_{};
  std::array<std::uint8_t, 32> resp_eph_{};
  std::string init_fp_;
  std::string resp_fp_;
  std::array<std::uint8_t, 32> tx_key_{};
  std::array<std::uint8_t, 32> rx_key_{};
  std::uint64_t tx_seq_ = 0;
  std::uint64_t rx_seq_ = 0;
  std::size_t rejected_ = 0;
  std::vector<Message> pending_;
  bool started_ = false;
  bool closed_ = false;
  bool remote_closed_ = false;
  std::function<void(const std::string&)> wire_tap_;
};

}  // namespace smcgw

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "smcgw/net/asio_host.hpp"
#include "smcgw/secure_channel.hpp"

namespace smcgw {

/// Client side of the gateway's request API. Requests carry an id; replies
/// may arrive in any order. Runs on the host's loop.
class Client : public std::enable_shared_from_this<Client> {
 public:
  using Ptr = std::shared_ptr<Client>;
  using Reply = std::function<void(nlohmann::json)>;
  using Ready = std::function<void(Ptr, std::optional<Error>)>;

  static void connect(net::Host& host, const Identity& self, const net::Address& gateway,
                      std::optional<std::string> expected_fingerprint, net::Duration timeout, Ready on_ready);

  /// `reply` runs once: with the gateway's response, or with a
  /// ChannelClosed error body if the channel drops first.
  void request(nlohmann::json body, Reply reply);
  void close();
  bool is_open() const { return channel_ && channel_->is_open(); }
  const RemoteIdentity& gateway() const { return channel_->remote(); }

 private:
  explicit Client(SecureChannel::Ptr ch) : channel_(std::move(ch)) {}
  void on_message(Message m);
  void on_closed();

  SecureChannel::Ptr channel_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, Reply> waiting_;
};

/// Synchronous wrapper over a private AsioHost, for tools and tests.
class BlockingClient {
 public:
  /// Throws Refused, HandshakeTimeout or FingerprintMismatch.
  BlockingClient(const net::Address& gateway, std::optional<std::string> expected_fingerprint = std::nullopt,
                 std::string name = "client", net::Duration timeout = std::chrono::seconds(5));
  ~BlockingClient();

  /// Throws RequestTimeout if no reply within `timeout`.
  nlohmann::json request(const nlohmann::json& body, net::Duration timeout = std::chrono::seconds(120));
  const RemoteIdentity& gateway() const { return client_->gateway(); }

 private:
  net::AsioHost host_;
  Identity id_;
  Client::Ptr client_;
};

}  // namespace smcgw

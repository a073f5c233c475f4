#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smcgw/adapter.hpp"
#include "smcgw/engine.hpp"
#include "smcgw/secure_channel.hpp"

namespace smcgw {

inline constexpr net::Duration kDefaultRoundTimeout = std::chrono::seconds(10);
inline constexpr net::Duration kConnectRetry = std::chrono::milliseconds(250);

/// Pairwise protocol channels of one session. The participant with the
/// lower share index opens each channel; the other side hands accepted
/// channels in through accept().
class ChannelSet : public std::enable_shared_from_this<ChannelSet> {
 public:
  using Ptr = std::shared_ptr<ChannelSet>;
  using ReadyHandler = std::function<void(std::optional<Error>)>;
  using MessageHandler = std::function<void(const std::string& from, Message)>;
  using LostHandler = std::function<void(const std::string& fingerprint)>;

  struct Options {
    net::Duration handshake_timeout = kDefaultHandshakeTimeout;
    /// Extra time after channel_wait before missing channels count as failed.
    net::Duration establish_timeout = std::chrono::seconds(5);
  };

  static Ptr create(net::Host& host, const Identity& self, const TrustStore& trust, RoundPlan plan,
                    Options options);

  /// Opens outgoing channels, waits plan.channel_wait, then reports once all
  /// n-1 channels are up, or ChannelEstablishmentFailed at the deadline.
  void establish(ReadyHandler on_ready, MessageHandler on_message, LostHandler on_lost);
  /// Takes an accepted channel for this session. False if it does not
  /// belong here.
  bool accept(const SecureChannel::Ptr& channel);
  void send(const std::string& to, Message msg);
  void close();

  std::vector<std::string> missing() const;
  bool complete() const { return missing().empty(); }
  const RoundPlan& plan() const { return plan_; }

 private:
  ChannelSet(net::Host& host, const Identity& self, const TrustStore& trust, RoundPlan plan, Options options);
  void connect_to(const Participant& p);
  void adopt(const std::string& fingerprint, const SecureChannel::Ptr& channel);
  void check();

  net::Host& host_;
  Identity self_;
  const TrustStore& trust_;
  RoundPlan plan_;
  Options options_;
  std::map<std::string, SecureChannel::Ptr> channels_;
  ReadyHandler on_ready_;
  MessageHandler on_message_;
  LostHandler on_lost_;
  bool waiting_ = true;
  bool closed_ = false;
  bool establishing_ = false;
  net::TimerHandle wait_timer_;
  net::TimerHandle deadline_;
  std::vector<net::TimerHandle> retries_;
};

/// Drives one participant through a session: channels, then engine steps
/// through the adapter, routing outbound shares over the channel set.
class SessionRunner : public std::enable_shared_from_this<SessionRunner> {
 public:
  using Ptr = std::shared_ptr<SessionRunner>;
  using DoneHandler = std::function<void(std::optional<FieldElement> result)>;
  using FailHandler = std::function<void(const Error& err)>;

  struct Options {
    net::Duration round_timeout = kDefaultRoundTimeout;
    ChannelSet::Options channels;
  };

  /// The engine must already be prepared on `adapter` for plan.session_id.
  static Ptr create(net::Host& host, const Identity& self, const TrustStore& trust, Adapter& adapter, RoundPlan plan,
                    std::optional<FieldElement> input, Options options);

  void start(DoneHandler on_done, FailHandler on_fail);
  bool accept_channel(const SecureChannel::Ptr& channel);
  /// Closes channels and drops the engine session. Idempotent.
  void stop();

  const std::string& session_id() const { return plan_.session_id; }
  bool finished() const { return finished_; }
  bool failed() const { return failed_; }
  /// Time spent inside adapter calls on this host's clock.
  net::Duration adapter_time() const { return adapter_time_; }
  RoundKind current() const { return current_; }

 private:
  SessionRunner(net::Host& host, const Identity& self, const TrustStore& trust, Adapter& adapter, RoundPlan plan,
                std::optional<FieldElement> input, Options options);
  void on_channels(std::optional<Error> err);
  void execute(const EngineEvent& ev);
  void enter(RoundKind round);
  void fail(const Error& err);

  net::Host& host_;
  Identity self_;
  Adapter& adapter_;
  RoundPlan plan_;
  std::optional<FieldElement> input_;
  Options options_;
  ChannelSet::Ptr channels_;
  DoneHandler on_done_;
  FailHandler on_fail_;
  net::TimerHandle round_timer_;
  net::Duration adapter_time_{0};
  RoundKind current_ = RoundKind::Distribute;
  bool started_ = false;
  bool finished_ = false;
  bool failed_ = false;
  bool stopped_ = false;
};

}  // namespace smcgw

#include "smcgw/peer_daemon.hpp"

#include <spdlog/spdlog.h>

namespace smcgw {
namespace {

// Lets the engine draw from the host's randomness without owning it.
class BorrowedRandom final : public RandomSource {
 public:
  explicit BorrowedRandom(RandomSource& r) : r_(r) {}
  std::uint64_t next_u64() override { return r_.next_u64(); }

 private:
  RandomSource& r_;
};

bool permanent(Errc code) { return code == Errc::FingerprintMismatch || code == Errc::MetadataRejected; }

}  // namespace

PeerDaemon::PeerDaemon(net::Host& host, PeerConfig config, Identity identity, TrustStore trust)
    : host_(host),
      config_(std::move(config)),
      identity_(std::move(identity)),
      trust_(std::move(trust)),
      cache_(config_.discovery_period) {
  for (const auto& s : config_.sources) sources_.emplace(s.capability, DataSource(s, config_.name, config_.seed));
}

PeerDaemon::Ptr PeerDaemon::create(net::Host& host, PeerConfig config, Identity identity) {
  TrustStore trust = config.trust_store ? TrustStore::load_or_empty(*config.trust_store) : TrustStore();
  return create(host, std::move(config), std::move(identity), std::move(trust));
}

PeerDaemon::Ptr PeerDaemon::create(net::Host& host, PeerConfig config, Identity identity, TrustStore trust) {
  return Ptr(new PeerDaemon(host, std::move(config), std::move(identity), std::move(trust)));
}

PeerDaemon::~PeerDaemon() { stop(); }

void PeerDaemon::start() {
  if (running_) return;
  adapter_ = AdapterStack::create(config_.adapter, std::make_unique<BorrowedRandom>(host_.random()));
  std::weak_ptr<PeerDaemon> weak = shared_from_this();
  listener_ = host_.listen(config_.listen, [weak](net::LinkPtr link) {
    if (auto self = weak.lock()) self->on_accepted(std::move(link));
  });
  if (config_.multicast) {
    browser_ = std::make_unique<Browser>(host_, config_.discovery_group, [weak](const GatewayAnnouncement& a) {
      auto self = weak.lock();
      if (!self || !self->running_) return;
      self->cache_.observe(a, self->host_.now());
      if (self->state_ == PeerState::Discovery && !self->select_timer_.pending()) self->schedule_selection({});
    });
  }
  running_ = true;
  on_enter(PeerState::Discovery);
}

void PeerDaemon::stop() {
  if (!running_) return;
  running_ = false;
  cleanup();
  select_timer_.cancel();
  if (browser_) browser_->close();
  browser_.reset();
  if (listener_) listener_->close();
  listener_.reset();
  adapter_ = AdapterStack{};
}

net::Address PeerDaemon::endpoint() const { return listener_ ? listener_->address() : config_.listen; }

std::optional<std::string> PeerDaemon::gateway() const {
  if (gateway_fp_.empty()) return std::nullopt;
  return gateway_fp_;
}

PeerMetadata PeerDaemon::metadata() const {
  return PeerMetadata{identity_.name,
                      identity_.fingerprint(),
                      identity_.keys.public_key_hex(),
                      endpoint(),
                      config_.location,
                      config_.capabilities(),
                      {std::string(kProtocolShamirSum)}};
}

void PeerDaemon::fire(PeerEvent ev) {
  const auto from = state_;
  const auto to = advance(state_, ev);
  spdlog::debug("{}: {} --{}--> {}", config_.name, to_string(from), to_string(ev.kind), to_string(to));
  if (to == PeerState::Discovery) cleanup();
  state_ = to;
  if (observer_) observer_(from, to);
  on_enter(to);
}

void PeerDaemon::on_enter(PeerState s) {
  if (!running_) return;
  switch (s) {
    case PeerState::Discovery:
      schedule_selection(selected_ ? net::Duration(config_.retry_delay) : net::Duration{});
      break;
    case PeerState::Pairing:
      pair(*selected_);
      break;
    case PeerState::Connecting:
      connect_control();
      break;
    case PeerState::Operation:
      misses_ = 0;
      last_acked_ = beat_seq_;
      heartbeat_tick();
      break;
  }
}

void PeerDaemon::schedule_selection(net::Duration delay) {
  select_timer_.cancel();
  std::weak_ptr<PeerDaemon> weak = shared_from_this();
  select_timer_ = host_.after(delay, [weak] {
    if (auto self = weak.lock()) self->try_select();
  });
}

void PeerDaemon::try_select() {
  if (!running_ || state_ != PeerState::Discovery) return;
  std::vector<GatewayAnnouncement> candidates;
  for (auto& a : cache_.candidates(host_.now())) {
    if (!blacklist_.count(a.fingerprint)) candidates.push_back(a);
  }
  if (candidates.empty()) {
    // Static fallback for networks without multicast.
    for (const auto& g : config_.static_gateways) {
      if (!g.fingerprint.empty() && blacklist_.count(g.fingerprint)) continue;
      GatewayAnnouncement a;
      a.fingerprint = g.fingerprint;
      a.name = g.name;
      a.endpoint = g.endpoint;
      candidates.push_back(a);
    }
  }
  try {
    selected_ = select_gateway(candidates, config_.policy);
  } catch (const Error&) {
    // Nothing usable yet; look again after a while.
    schedule_selection(config_.discovery_period / 4);
    return;
  }
  fire({PeerEventKind::GatewayFound});
}

void PeerDaemon::pair(const GatewayAnnouncement& gw) {
  HandshakeOptions opts;
  opts.purpose = "pair";
  opts.timeout = config_.handshake_timeout;
  if (!gw.fingerprint.empty()) opts.expected_fingerprint = gw.fingerprint;
  opts.verify = trust_on_first_use(trust_, unix_time_ms);
  std::weak_ptr<PeerDaemon> weak = shared_from_this();
  const auto epoch = epoch_;
  auto fail = [weak, epoch](const Error& e) {
    auto self = weak.lock();
    if (!self || self->epoch_ != epoch || self->state_ != PeerState::Pairing) return;
    spdlog::info("{}: pairing failed: {}", self->config_.name, e.what());
    if (permanent(e.code()) && self->selected_ && !self->selected_->fingerprint.empty()) {
      self->blacklist_.insert(self->selected_->fingerprint);
    }
    self->fire({PeerEventKind::PairFail, permanent(e.code())});
  };
  SecureChannel::open(host_, identity_, gw.endpoint, opts, [weak, epoch, fail](SecureChannel::Ptr ch,
                                                                               std::optional<Error> err) {
    auto self = weak.lock();
    if (!self || self->epoch_ != epoch || self->state_ != PeerState::Pairing) {
      if (ch) ch->close();
      return;
    }
    if (err) {
      fail(*err);
      return;
    }
    self->pair_channel_ = ch;
    self->gateway_fp_ = ch->remote().fingerprint;
    self->gateway_name_ = ch->remote().name;
    self->pair_timer_ = self->host_.after(self->config_.handshake_timeout, [fail] {
      fail(Error(Errc::HandshakeTimeout, "no pairing answer"));
    });
    ch->start(
        [weak, epoch, fail](Message m) {
          auto self = weak.lock();
          if (!self || self->epoch_ != epoch || self->state_ != PeerState::Pairing) return;
          self->pair_timer_.cancel();
          if (m.type == MessageType::PairAccept) {
            spdlog::info("{}: paired with {} groups {}", self->config_.name, self->gateway_name_,
                         m.body.value("groups", nlohmann::json::array()).dump());
            self->pair_channel_->close();
            self->pair_channel_.reset();
            self->fire({PeerEventKind::PairOk});
          } else if (m.type == MessageType::Error) {
            const auto code = errc_from_string(m.body.value("code", "")).value_or(Errc::Refused);
            fail(Error(code, m.body.value("message", std::string("pairing rejected"))));
          }
        },
        [fail] { fail(Error(Errc::ChannelClosed, "pairing channel closed")); });
    ch->send(Message{MessageType::PairRequest, "", std::nullopt, {{"metadata", metadata_to_json(self->metadata())}},
                     std::nullopt});
  });
}

void PeerDaemon::connect_control() {
  HandshakeOptions opts;
  opts.purpose = "control";
  opts.timeout = config_.handshake_timeout;
  opts.expected_fingerprint = gateway_fp_;
  opts.verify = pinned_in(trust_);
  std::weak_ptr<PeerDaemon> weak = shared_from_this();
  const auto epoch = epoch_;
  SecureChannel::open(host_, identity_, selected_->endpoint, opts, [weak, epoch](SecureChannel::Ptr ch,
                                                                                std::optional<Error> err) {
    auto self = weak.lock();
    if (!self || self->epoch_ != epoch || self->state_ != PeerState::Connecting) {
      if (ch) ch->close();
      return;
    }
    if (err) {
      spdlog::info("{}: control channel failed: {}", self->config_.name, err->what());
      self->fire({PeerEventKind::PairFail, permanent(err->code())});
      return;
    }
    self->control_ = ch;
    ch->start(
        [weak, epoch](Message m) {
          auto self = weak.lock();
          if (self && self->epoch_ == epoch) self->on_control(std::move(m));
        },
        [weak, epoch] {
          auto self = weak.lock();
          if (!self || self->epoch_ != epoch || !self->running_) return;
          spdlog::info("{}: control channel lost", self->config_.name);
          self->fire({PeerEventKind::ChannelLost});
        });
    self->fire({PeerEventKind::ChannelUp});
  });
}

void PeerDaemon::heartbeat_tick() {
  if (!running_ || state_ != PeerState::Operation) return;
  if (beat_seq_ > last_acked_) {
    ++misses_;
  } else {
    misses_ = 0;
  }
  if (misses_ >= config_.heartbeat_misses) {
    spdlog::info("{}: {} heartbeats unanswered", config_.name, misses_);
    fire({PeerEventKind::HeartbeatAckMissed});
    return;
  }
  ++beat_seq_;
  try {
    send_control(MessageType::Heartbeat, std::nullopt, {{"kind", "beat"}, {"n", beat_seq_}});
    ++stats_.heartbeats_sent;
  } catch (const Error&) {
    // Counted as a miss on the next tick.
  }
  std::weak_ptr<PeerDaemon> weak = shared_from_this();
  heartbeat_timer_ = host_.after(config_.heartbeat_interval, [weak] {
    if (auto self = weak.lock()) self->heartbeat_tick();
  });
}

void PeerDaemon::cleanup() {
  ++epoch_;
  heartbeat_timer_.cancel();
  pair_timer_.cancel();
  for (auto& [sid, s] : runners_) s.runner->stop();
  runners_.clear();
  if (pair_channel_) pair_channel_->close();
  pair_channel_.reset();
  if (control_) control_->close();
  control_.reset();
}

void PeerDaemon::on_accepted(net::LinkPtr link) {
  HandshakeOptions opts;
  opts.timeout = config_.handshake_timeout;
  const TrustStore& trust = trust_;
  opts.verify = [&trust](const RemoteIdentity& r) {
    if (r.purpose != "data") throw Error(Errc::Refused, "peers accept only protocol channels");
    pinned_in(trust)(r);
  };
  std::weak_ptr<PeerDaemon> weak = shared_from_this();
  SecureChannel::respond(host_, identity_, std::move(link), opts, [weak](SecureChannel::Ptr ch, std::optional<Error>) {
    if (!ch) return;
    auto self = weak.lock();
    if (!self) {
      ch->close();
      return;
    }
    const auto sid = ch->remote().session_id.value_or("");
    auto it = self->runners_.find(sid);
    if (it == self->runners_.end() || !it->second.runner->accept_channel(ch)) {
      spdlog::debug("{}: no session {} for incoming channel", self->config_.name, sid);
      ch->close();
    }
  });
}

void PeerDaemon::send_control(MessageType type, const std::optional<std::string>& sid, nlohmann::json body) {
  if (!control_ || !control_->is_open()) throw Error(Errc::ChannelClosed, "no control channel");
  control_->send(Message{type, "", sid, std::move(body), std::nullopt});
}

void PeerDaemon::abort_to_gateway(const std::string& sid, const Error& err) {
  ++stats_.aborts_sent;
  try {
    send_control(MessageType::SessionAbort, sid,
                 {{"code", std::string(to_string(err.code()))}, {"message", err.what()}});
  } catch (const Error&) {
  }
}

void PeerDaemon::on_control(Message m) {
  if (!running_) return;
  const auto sid = m.session_id.value_or("");
  try {
    switch (m.type) {
      case MessageType::Heartbeat: {
        const auto kind = m.body.value("kind", "");
        if (kind == "ack") {
          last_acked_ = std::max(last_acked_, m.body.value("n", std::uint64_t{0}));
          ++stats_.heartbeats_acked;
        } else if (kind == "echo") {
          ++stats_.echoes;
          auto payload = m.body.value("payload", nlohmann::json());
          net::Duration spent{0};
          if (m.body.value("via_adapter", false)) {
            const auto t0 = host_.now();
            payload = adapter_.adapter->echo(sid.empty() ? "echo" : sid, payload);
            spent = host_.now() - t0;
          }
          send_control(MessageType::Heartbeat, m.session_id,
                       {{"kind", "echo_reply"}, {"n", m.body.value("n", 0)}, {"payload", payload},
                        {"adapter_us", spent.count()}});
        }
        break;
      }
      case MessageType::SessionPrepare: {
        const auto phase = m.body.value("phase", "");
        if (phase == "prepare") {
          handle_prepare(m);
        } else if (phase == "start") {
          handle_start(sid);
        }
        break;
      }
      case MessageType::SessionAbort:
        drop_session(sid);
        break;
      case MessageType::SessionResult:
        if (m.body.value("kind", "") == "teardown") {
          stats_.last_teardown = m.body;
          drop_session(sid);
        }
        break;
      default:
        spdlog::warn("{}: unexpected {} on control channel", config_.name, to_string(m.type));
    }
  } catch (const Error& e) {
    spdlog::warn("{}: control message failed: {}", config_.name, e.what());
    if (!sid.empty()) {
      drop_session(sid);
      abort_to_gateway(sid, e);
    }
  }
}

void PeerDaemon::handle_prepare(const Message& m) {
  const auto sid = m.session_id.value_or("");
  auto plan = plan_from_json(m.body.at("plan"));
  if (plan.session_id != sid) throw Error(Errc::InvalidPlan, "prepare for a different session");
  const auto* me = plan.find(identity_.fingerprint());
  if (!me) throw Error(Errc::UnknownParticipant, "this peer is not a participant of " + sid);
  const auto data_type = m.body.at("data_type").get<std::string>();
  auto src = sources_.find(data_type);
  if (me->contributes && src == sources_.end()) {
    throw Error(Errc::CapabilityMissing, config_.name + " has no source for " + data_type);
  }
  // Pins for every other participant, so protocol channels need no TOFU.
  const auto bundle = bundle_from_json(m.body.at("bundle"));
  if (pin_bundle(trust_, bundle, unix_time_ms()) > 0) trust_.save();

  std::optional<FieldElement> input;
  if (me->contributes) input = src->second.fetch(sid);

  const auto t0 = host_.now();
  adapter_.adapter->prepare(plan, identity_.fingerprint());
  const auto spent = host_.now() - t0;

  SessionRunner::Options opts;
  opts.round_timeout = config_.round_timeout;
  opts.channels.handshake_timeout = config_.handshake_timeout;
  opts.channels.establish_timeout = config_.establish_timeout;
  auto it = runners_.find(sid);
  if (it != runners_.end()) it->second.runner->stop();
  runners_[sid] = Session{SessionRunner::create(host_, identity_, trust_, *adapter_.adapter, std::move(plan), input,
                                                opts),
                          spent};
  ++stats_.sessions_prepared;
  send_control(MessageType::SessionPrepare, sid, {{"phase", "ready"}, {"adapter_us", spent.count()}});
}

void PeerDaemon::handle_start(const std::string& sid) {
  auto it = runners_.find(sid);
  if (it == runners_.end()) throw Error(Errc::UnexpectedMessage, "start for unknown session " + sid);
  std::weak_ptr<PeerDaemon> weak = shared_from_this();
  std::weak_ptr<SessionRunner> weak_runner = it->second.runner;
  it->second.runner->start(
      [weak, sid, weak_runner](std::optional<FieldElement>) {
        auto self = weak.lock();
        auto runner = weak_runner.lock();
        if (!self || !runner) return;
        auto it = self->runners_.find(sid);
        if (it == self->runners_.end()) return;
        ++self->stats_.sessions_revealed;
        const auto total = it->second.adapter_prepare + runner->adapter_time();
        try {
          self->send_control(MessageType::SessionResult, sid, {{"kind", "revealed"}, {"adapter_us", total.count()}});
        } catch (const Error&) {
        }
      },
      [weak, sid](const Error& err) {
        auto self = weak.lock();
        if (!self) return;
        // Defer: the runner is still on the stack.
        self->host_.post([weak, sid, err] {
          if (auto self = weak.lock()) {
            self->drop_session(sid);
            self->abort_to_gateway(sid, err);
          }
        });
      });
}

void PeerDaemon::drop_session(const std::string& sid) {
  auto it = runners_.find(sid);
  if (it == runners_.end()) return;
  auto runner = it->second.runner;
  runners_.erase(it);
  runner->stop();
}

}  // namespace smcgw

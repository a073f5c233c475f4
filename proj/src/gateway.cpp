#include "smcgw/gateway.hpp"

#include <algorithm>
#include <numeric>

#include <spdlog/spdlog.h>

namespace smcgw {
namespace {

class BorrowedRandom final : public RandomSource {
 public:
  explicit BorrowedRandom(RandomSource& r) : r_(r) {}
  std::uint64_t next_u64() override { return r_.next_u64(); }

 private:
  RandomSource& r_;
};

nlohmann::json error_body(Errc code, const std::string& message) {
  return {{"ok", false}, {"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

double ms(net::Duration d) { return net::to_ms(d); }

}  // namespace

nlohmann::json timing_to_json(const std::vector<PeerTiming>& peers) {
  auto arr = nlohmann::json::array();
  PeerTiming max{"max"};
  for (const auto& p : peers) {
    arr.push_back({{"peer", p.peer}, {"t_flex_ms", p.flex_ms}, {"t_adapter_ms", p.adapter_ms}, {"t_total_ms", p.total_ms}});
    max.flex_ms = std::max(max.flex_ms, p.flex_ms);
    max.adapter_ms = std::max(max.adapter_ms, p.adapter_ms);
    max.total_ms = std::max(max.total_ms, p.total_ms);
  }
  return {{"peers", arr},
          {"max", {{"t_flex_ms", max.flex_ms}, {"t_adapter_ms", max.adapter_ms}, {"t_total_ms", max.total_ms}}}};
}

std::vector<PeerTiming> timing_from_json(const nlohmann::json& j) {
  std::vector<PeerTiming> out;
  for (const auto& p : j.at("peers")) {
    out.push_back({p.at("peer").get<std::string>(), p.at("t_flex_ms").get<double>(), p.at("t_adapter_ms").get<double>(),
                   p.at("t_total_ms").get<double>()});
  }
  return out;
}

nlohmann::json rational_json(std::uint64_t numerator, std::uint64_t denominator) {
  const auto g = std::gcd(numerator, denominator);
  const auto n = g ? numerator / g : numerator;
  const auto d = g ? denominator / g : denominator;
  return {{"numerator", n}, {"denominator", d}, {"value", d ? static_cast<double>(n) / static_cast<double>(d) : 0.0}};
}

GatewayDaemon::GatewayDaemon(net::Host& host, GatewayConfig config, Identity identity, TrustStore trust)
    : host_(host), config_(std::move(config)), identity_(std::move(identity)), trust_(std::move(trust)) {}

GatewayDaemon::Ptr GatewayDaemon::create(net::Host& host, GatewayConfig config, Identity identity) {
  TrustStore trust = config.trust_store ? TrustStore::load_or_empty(*config.trust_store) : TrustStore();
  return create(host, std::move(config), std::move(identity), std::move(trust));
}

GatewayDaemon::Ptr GatewayDaemon::create(net::Host& host, GatewayConfig config, Identity identity, TrustStore trust) {
  return Ptr(new GatewayDaemon(host, std::move(config), std::move(identity), std::move(trust)));
}

GatewayDaemon::~GatewayDaemon() { stop(); }

void GatewayDaemon::start() {
  if (running_) return;
  adapter_ = AdapterStack::create(config_.adapter, std::make_unique<BorrowedRandom>(host_.random()));
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  control_listener_ = host_.listen(config_.control, [weak](net::LinkPtr link) {
    if (auto self = weak.lock()) self->on_control_link(std::move(link));
  });
  client_listener_ = host_.listen(config_.client, [weak](net::LinkPtr link) {
    if (auto self = weak.lock()) self->on_client_link(std::move(link));
  });
  running_ = true;
  if (config_.announce) {
    announcer_ = Announcer::create(host_, announcement(), config_.discovery_group, config_.announce_period);
    announcer_->start();
  }
  monitor_tick();
}

void GatewayDaemon::stop() {
  if (!running_) return;
  running_ = false;
  if (announcer_) announcer_->stop();
  monitor_timer_.cancel();
  retry_timer_.cancel();
  if (attempt_) {
    attempt_->prepare_timer.cancel();
    attempt_->grace_timer.cancel();
    if (attempt_->runner) attempt_->runner->stop();
  }
  attempt_.reset();
  for (auto& [fp, e] : registry_.entries()) {
    if (e.control) e.control->close();
  }
  for (auto& c : clients_) c->close();
  clients_.clear();
  if (control_listener_) control_listener_->close();
  if (client_listener_) client_listener_->close();
  control_listener_.reset();
  client_listener_.reset();
  adapter_ = AdapterStack{};
}

net::Address GatewayDaemon::control_endpoint() const {
  return control_listener_ ? control_listener_->address() : config_.control;
}

net::Address GatewayDaemon::client_endpoint() const {
  return client_listener_ ? client_listener_->address() : config_.client;
}

GatewayAnnouncement GatewayDaemon::announcement() const {
  return GatewayAnnouncement{identity_.fingerprint(), identity_.name,      identity_.keys.public_key_hex(),
                             control_endpoint(),      config_.location,    config_.purpose,
                             {std::string(kProtocolShamirSum)}};
}

// --- channels --------------------------------------------------------------

void GatewayDaemon::on_control_link(net::LinkPtr link) {
  HandshakeOptions opts;
  opts.timeout = config_.handshake_timeout;
  auto* self_raw = this;
  opts.verify = [self_raw](const RemoteIdentity& r) {
    if (r.purpose == "pair") {
      if (self_raw->trust_.pin(r.name, r.fingerprint, r.public_key_hex, unix_time_ms()) ==
          TrustStore::PinResult::Pinned) {
        self_raw->trust_.save();
      }
    } else if (r.purpose == "control") {
      pinned_in(self_raw->trust_)(r);
      if (!self_raw->registry_.find(r.fingerprint)) throw Error(Errc::Refused, r.name + " has not paired");
    } else if (r.purpose == "data") {
      pinned_in(self_raw->trust_)(r);
    } else {
      throw Error(Errc::Refused, "purpose '" + r.purpose + "' not served here");
    }
  };
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  SecureChannel::respond(host_, identity_, std::move(link), opts, [weak](SecureChannel::Ptr ch, std::optional<Error>) {
    if (!ch) return;
    auto self = weak.lock();
    if (!self || !self->running_) {
      ch->close();
      return;
    }
    const auto& purpose = ch->remote().purpose;
    if (purpose == "pair") {
      self->on_pair_channel(ch);
    } else if (purpose == "control") {
      self->on_control_channel(ch);
    } else {
      const auto sid = ch->remote().session_id.value_or("");
      if (!self->attempt_ || self->attempt_->sid != sid || !self->attempt_->runner ||
          !self->attempt_->runner->accept_channel(ch)) {
        ch->close();
      }
    }
  });
}

void GatewayDaemon::on_pair_channel(const SecureChannel::Ptr& ch) {
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  std::weak_ptr<SecureChannel> weak_ch = ch;
  ch->start(
      [weak, weak_ch](Message m) {
        auto self = weak.lock();
        auto ch = weak_ch.lock();
        if (!self || !ch || m.type != MessageType::PairRequest) return;
        try {
          auto meta = metadata_from_json(m.body.at("metadata"));
          const auto& r = ch->remote();
          if (meta.fingerprint != r.fingerprint || meta.name != r.name || meta.public_key_hex != r.public_key_hex) {
            throw Error(Errc::MetadataRejected, "metadata does not match the authenticated identity");
          }
          if (meta.endpoint.host.empty() || meta.endpoint.host == "0.0.0.0") {
            throw Error(Errc::MetadataRejected, "metadata lacks a reachable endpoint");
          }
          const auto groups = self->registry_.register_peer(meta);
          spdlog::info("{}: paired {} into {}", self->identity_.name, meta.name, nlohmann::json(groups).dump());
          ch->send(Message{MessageType::PairAccept, "", std::nullopt,
                           {{"groups", groups}, {"gateway", self->identity_.name}}, std::nullopt});
        } catch (const Error& e) {
          ch->send(Message{MessageType::Error, "", std::nullopt,
                           {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}, std::nullopt});
        } catch (const nlohmann::json::exception& e) {
          ch->send(Message{MessageType::Error, "", std::nullopt,
                           {{"code", "MetadataRejected"}, {"message", e.what()}}, std::nullopt});
        }
      },
      [] {});
}

void GatewayDaemon::on_control_channel(const SecureChannel::Ptr& ch) {
  const auto fp = ch->remote().fingerprint;
  registry_.attach_control(fp, ch, host_.now());
  notify(fp);
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  std::weak_ptr<SecureChannel> weak_ch = ch;
  ch->start(
      [weak, fp](Message m) {
        if (auto self = weak.lock()) self->on_peer_message(fp, std::move(m));
      },
      [weak, fp, weak_ch] {
        auto self = weak.lock();
        if (!self || !self->running_) return;
        const auto* e = self->registry_.find(fp);
        // Only the current control channel counts.
        if (!e || !e->control || e->control != weak_ch.lock()) return;
        self->peer_lost(fp, "control channel closed");
      });
}

void GatewayDaemon::on_client_link(net::LinkPtr link) {
  HandshakeOptions opts;
  opts.timeout = config_.handshake_timeout;
  opts.verify = [](const RemoteIdentity& r) {
    if (r.purpose != "client") throw Error(Errc::Refused, "client endpoint serves only clients");
  };
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  SecureChannel::respond(host_, identity_, std::move(link), opts, [weak](SecureChannel::Ptr ch, std::optional<Error>) {
    if (!ch) return;
    auto self = weak.lock();
    if (!self || !self->running_) {
      ch->close();
      return;
    }
    std::erase_if(self->clients_, [](const auto& c) { return !c->is_open(); });
    self->clients_.push_back(ch);
    std::weak_ptr<SecureChannel> weak_ch = ch;
    ch->start(
        [weak, weak_ch](Message m) {
          auto self = weak.lock();
          if (!self || m.type != MessageType::ClientRequest) return;
          const auto id = m.body.value("id", nlohmann::json());
          self->submit(m.body, [weak_ch, id](nlohmann::json response) {
            auto ch = weak_ch.lock();
            if (!ch || !ch->is_open()) return;
            response["id"] = id;
            ch->send(Message{MessageType::ClientResponse, "", response.value("session_id", nlohmann::json()).is_string()
                                                                  ? std::optional<std::string>(response["session_id"])
                                                                  : std::nullopt,
                             response, std::nullopt});
          });
        },
        [] {});
  });
}

void GatewayDaemon::send_to(const std::string& fp, MessageType type, const std::optional<std::string>& sid,
                            nlohmann::json body) {
  const auto* e = registry_.find(fp);
  if (!e || !e->control || !e->control->is_open()) throw Error(Errc::ChannelClosed, "no control channel to " + fp);
  e->control->send(Message{type, "", sid, std::move(body), std::nullopt});
}

void GatewayDaemon::on_peer_message(const std::string& fp, Message m) {
  if (!running_) return;
  const auto sid = m.session_id.value_or("");
  switch (m.type) {
    case MessageType::Heartbeat: {
      const auto kind = m.body.value("kind", "");
      if (kind == "beat") {
        ++stats_.heartbeats;
        registry_.heartbeat(fp, host_.now());
        notify(fp);
        try {
          send_to(fp, MessageType::Heartbeat, std::nullopt, {{"kind", "ack"}, {"n", m.body.value("n", 0)}});
        } catch (const Error&) {
        }
      } else if (kind == "echo_reply") {
        echo_reply(fp, m.body);
      }
      break;
    }
    case MessageType::SessionPrepare:
      if (attempt_ && attempt_->sid == sid && m.body.value("phase", "") == "ready") on_ready(fp, m.body);
      break;
    case MessageType::SessionResult:
      if (attempt_ && attempt_->sid == sid && m.body.value("kind", "") == "revealed") on_revealed(fp, m.body);
      break;
    case MessageType::SessionAbort:
      if (attempt_ && attempt_->sid == sid && attempt_->peers.count(fp)) {
        const auto code = errc_from_string(m.body.value("code", "")).value_or(Errc::SessionAborted);
        const auto* e = registry_.find(fp);
        attempt_failed(Error(code, (e ? e->meta.name : fp) + ": " + m.body.value("message", std::string("aborted"))));
      }
      break;
    default:
      spdlog::warn("{}: unexpected {} from a peer", identity_.name, to_string(m.type));
  }
}

void GatewayDaemon::peer_lost(const std::string& fp, const std::string& why) {
  auto ch = registry_.unlist(fp);
  if (ch) ch->close();
  notify(fp);
  const auto* e = registry_.find(fp);
  const std::string name = e ? e->meta.name : fp;
  spdlog::info("{}: {} unlisted ({})", identity_.name, name, why);
  if (attempt_ && !attempt_->over && attempt_->peers.count(fp) && !attempt_->result) {
    attempt_failed(Error(Errc::ChannelClosed, name + " unlisted: " + why));
  }
  echo_waiting_.erase(fp);
}

void GatewayDaemon::monitor_tick() {
  if (!running_) return;
  auto policy = config_.liveness;
  policy.interval = config_.heartbeat_interval;
  for (auto& [fp, ch] : registry_.sweep(host_.now(), policy)) {
    if (ch) ch->close();
    peer_lost(fp, "heartbeats missing");
  }
  for (const auto& [fp, e] : registry_.entries()) notify(fp);
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  monitor_timer_ = host_.after(config_.liveness.window / 10, [weak] {
    if (auto self = weak.lock()) self->monitor_tick();
  });
}

void GatewayDaemon::notify(const std::string& fp) {
  const auto* e = registry_.find(fp);
  if (!e) return;
  auto it = last_liveness_.find(fp);
  if (it != last_liveness_.end() && it->second == e->liveness) return;
  last_liveness_[fp] = e->liveness;
  if (liveness_observer_) liveness_observer_(fp, e->liveness);
}

// --- client API ------------------------------------------------------------

void GatewayDaemon::submit(nlohmann::json request, Reply reply) {
  ++stats_.requests;
  auto counted = [this, reply = std::move(reply)](nlohmann::json r) {
    ++stats_.responses;
    reply(std::move(r));
  };
  const auto op = request.value("operation", "");
  if (op == "list_metadata") {
    auto r = registry_.catalog();
    r["ok"] = true;
    counted(std::move(r));
    return;
  }
  if (op == "echo") {
    start_echo(std::move(request), std::move(counted));
    return;
  }
  auto job = std::make_unique<Job>();
  job->request = request;
  job->reply = std::move(counted);
  try {
    job->op = operation_from_string(op);
    job->group = request.at("group").get<std::string>();
    job->data_type = request.at("data_type").get<std::string>();
  } catch (const Error& e) {
    job->reply(error_body(e.code(), e.what()));
    return;
  } catch (const nlohmann::json::exception& e) {
    job->reply(error_body(Errc::MalformedMessage, std::string("request needs group, operation, data_type: ") + e.what()));
    return;
  }
  queue_.push_back(std::move(job));
  pump();
}

void GatewayDaemon::pump() {
  if (job_ || queue_.empty() || !running_) return;
  job_ = std::move(queue_.front());
  queue_.pop_front();
  begin_job();
}

void GatewayDaemon::begin_job() {
  auto& job = *job_;
  if (!registry_.has_group(job.group)) {
    finish(error_body(Errc::UnknownGroup, "no group '" + job.group + "'"));
    return;
  }
  const auto slash = job.group.find('/');
  if (slash == std::string::npos || job.group.substr(slash + 1) != job.data_type) {
    finish(error_body(Errc::UnknownGroup, "group '" + job.group + "' does not carry " + job.data_type));
    return;
  }
  for (const auto& m : registry_.members(job.group)) job.peers.push_back(m.fingerprint);
  if (job.peers.size() < config_.min_group) {
    finish(error_body(Errc::GroupTooSmall, "group '" + job.group + "' has " + std::to_string(job.peers.size()) +
                                               " active peers, need " + std::to_string(config_.min_group)));
    return;
  }
  job.base_id = identity_.name + "-" + std::to_string(next_session_++);
  run_attempt();
}

void GatewayDaemon::run_attempt() {
  auto& job = *job_;
  ++job.attempt;
  ++stats_.attempts;
  // Only peers still Active take part; the set never grows.
  std::erase_if(job.peers, [&](const std::string& fp) { return !registry_.is_active(fp); });

  auto att = std::make_unique<Attempt>();
  att->sid = job.base_id + "." + std::to_string(job.attempt);
  try {
    if (job.peers.size() < config_.min_group) {
      throw Error(Errc::GroupTooSmall, std::to_string(job.peers.size()) + " peers left, need " +
                                           std::to_string(config_.min_group));
    }
    SessionDescriptor d;
    d.session_id = att->sid;
    d.group = job.group;
    d.operation = job.op;
    d.data_type = job.data_type;
    d.threshold = config_.threshold;
    d.channel_wait = config_.channel_wait;
    d.min_contributors = config_.min_group;
    d.attempt = job.attempt;
    d.retry_budget = config_.retry_budget;
    for (const auto& fp : job.peers) {
      const auto& meta = registry_.find(fp)->meta;
      d.peers.push_back(Participant{fp, meta.name, meta.endpoint, 0, true});
    }
    d.gateway = Participant{identity_.fingerprint(), identity_.name, control_endpoint(), 0, false};
    att->plan = plan_session(d);

    std::vector<std::string> fps;
    for (const auto& p : att->plan.participants) fps.push_back(p.fingerprint);
    const auto bundles = registry_.distribute_group_certs(
        fps, TrustBundleEntry{identity_.name, identity_.fingerprint(), identity_.keys.public_key_hex()});

    adapter_.adapter->prepare(att->plan, identity_.fingerprint());
    SessionRunner::Options ro;
    ro.round_timeout = config_.round_timeout;
    ro.channels.handshake_timeout = config_.handshake_timeout;
    ro.channels.establish_timeout = config_.establish_timeout;
    att->runner = SessionRunner::create(host_, identity_, trust_, *adapter_.adapter, att->plan, std::nullopt, ro);

    const auto plan_json = plan_to_json(att->plan);
    att->peers.insert(job.peers.begin(), job.peers.end());
    attempt_ = std::move(att);
    for (const auto& fp : job.peers) {
      attempt_->prepare_sent[fp] = host_.now();
      send_to(fp, MessageType::SessionPrepare, attempt_->sid,
              {{"phase", "prepare"},
               {"plan", plan_json},
               {"bundle", bundle_to_json(bundles.at(fp))},
               {"data_type", job.data_type},
               {"operation", to_string(job.op)},
               {"attempt", job.attempt}});
    }
  } catch (const Error& e) {
    if (!attempt_) attempt_ = std::move(att);
    attempt_failed(e);
    return;
  }
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  const auto sid = attempt_->sid;
  attempt_->prepare_timer = host_.after(config_.prepare_timeout, [weak, sid] {
    auto self = weak.lock();
    if (!self || !self->attempt_ || self->attempt_->sid != sid || self->attempt_->started) return;
    std::string missing;
    for (const auto& fp : self->attempt_->peers) {
      if (self->attempt_->ready_rtt.count(fp)) continue;
      if (!missing.empty()) missing += ", ";
      missing += self->registry_.find(fp)->meta.name;
    }
    self->attempt_failed(Error(Errc::PrepareTimeout, "no ready from " + missing));
  });
}

void GatewayDaemon::on_ready(const std::string& fp, const nlohmann::json& body) {
  auto& att = *attempt_;
  if (att.over || att.started || !att.peers.count(fp) || att.ready_rtt.count(fp)) return;
  att.ready_rtt[fp] = host_.now() - att.prepare_sent.at(fp);
  att.ready_adapter[fp] = net::Duration(body.value("adapter_us", std::int64_t{0}));
  if (att.ready_rtt.size() < att.peers.size()) return;

  att.prepare_timer.cancel();
  att.started = true;
  try {
    for (const auto& p : att.peers) send_to(p, MessageType::SessionPrepare, att.sid, {{"phase", "start"}});
  } catch (const Error& e) {
    attempt_failed(e);
    return;
  }
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  const auto sid = att.sid;
  att.runner->start(
      [weak, sid](std::optional<FieldElement> result) {
        auto self = weak.lock();
        if (!self || !self->attempt_ || self->attempt_->sid != sid || self->attempt_->over) return;
        self->attempt_->result = result;
        self->attempt_->grace_timer = self->host_.after(self->config_.completion_grace, [weak, sid] {
          auto self = weak.lock();
          if (self && self->attempt_ && self->attempt_->sid == sid && !self->attempt_->over) self->succeed();
        });
        self->check_complete();
      },
      [weak, sid](const Error& err) {
        auto self = weak.lock();
        if (!self) return;
        self->host_.post([weak, sid, err] {
          auto self = weak.lock();
          if (self && self->attempt_ && self->attempt_->sid == sid) self->attempt_failed(err);
        });
      });
}

void GatewayDaemon::on_revealed(const std::string& fp, const nlohmann::json& body) {
  auto& att = *attempt_;
  if (att.over || !att.peers.count(fp) || att.revealed.count(fp)) return;
  att.revealed[fp] = {host_.now() - att.prepare_sent.at(fp), net::Duration(body.value("adapter_us", std::int64_t{0}))};
  check_complete();
}

void GatewayDaemon::check_complete() {
  auto& att = *attempt_;
  if (att.over || !att.result || att.revealed.size() < att.peers.size()) return;
  succeed();
}

void GatewayDaemon::succeed() {
  auto& att = *attempt_;
  auto& job = *job_;
  att.over = true;
  att.grace_timer.cancel();
  const auto sum = att.result->value();
  const auto count = att.peers.size();

  std::vector<PeerTiming> timings;
  std::vector<std::string> names;
  for (const auto& fp : att.peers) {
    const auto& name = registry_.find(fp)->meta.name;
    names.push_back(name);
    auto it = att.revealed.find(fp);
    if (it == att.revealed.end()) continue;
    const double flex = std::max(0.0, ms(att.ready_rtt.at(fp)) - ms(att.ready_adapter.at(fp)));
    timings.push_back({name, flex, ms(it->second.second), ms(it->second.first)});
  }
  std::sort(names.begin(), names.end());
  std::sort(timings.begin(), timings.end(), [](const auto& a, const auto& b) { return a.peer < b.peer; });

  nlohmann::json result = job.op == Operation::Sum ? nlohmann::json(sum) : rational_json(sum, count);
  for (const auto& fp : att.peers) {
    try {
      send_to(fp, MessageType::SessionResult, att.sid,
              {{"kind", "teardown"}, {"operation", to_string(job.op)}, {"result", result}, {"contributors", count}});
    } catch (const Error&) {
    }
  }
  att.runner->stop();
  ++stats_.sessions_ok;
  finish({{"ok", true},
          {"session_id", att.sid},
          {"attempts", job.attempt},
          {"group", job.group},
          {"operation", to_string(job.op)},
          {"data_type", job.data_type},
          {"count", count},
          {"result", result},
          {"participants", names},
          {"failures", job.failures},
          {"timing", timing_to_json(timings)}});
}

void GatewayDaemon::attempt_failed(const Error& err) {
  if (!attempt_ || attempt_->over) return;
  auto& att = *attempt_;
  auto& job = *job_;
  att.over = true;
  att.prepare_timer.cancel();
  att.grace_timer.cancel();
  if (att.runner) att.runner->stop();
  for (const auto& fp : att.peers) {
    try {
      send_to(fp, MessageType::SessionAbort, att.sid,
              {{"code", std::string(to_string(err.code()))}, {"message", err.what()}});
    } catch (const Error&) {
    }
  }
  spdlog::info("{}: attempt {} of {} failed: {}", identity_.name, job.attempt, job.base_id, err.what());
  job.failures.push_back(
      {{"attempt", job.attempt}, {"code", std::string(to_string(err.code()))}, {"message", err.what()}});

  // A group that was too small before the first attempt is a resolve error.
  if (job.attempt == 1 && err.code() == Errc::GroupTooSmall && att.prepare_sent.empty()) {
    finish(error_body(Errc::GroupTooSmall, err.what()));
    return;
  }
  if (job.attempt >= config_.retry_budget || err.code() == Errc::GroupTooSmall) {
    ++stats_.sessions_failed;
    auto body = error_body(Errc::SessionFailed, "gave up after " + std::to_string(job.attempt) +
                                                    " attempt(s); last error: " + err.what());
    body["session_id"] = att.sid;
    body["attempts"] = job.attempt;
    body["failures"] = job.failures;
    finish(std::move(body));
    return;
  }
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  // Give liveness monitoring time to notice vanished peers before re-planning.
  retry_timer_ = host_.after(config_.recovery_delay, [weak] {
    auto self = weak.lock();
    if (!self || !self->job_ || !self->running_) return;
    self->attempt_.reset();
    self->run_attempt();
  });
}

void GatewayDaemon::finish(nlohmann::json response) {
  if (!job_) return;
  auto job = std::move(job_);
  if (attempt_ && attempt_->runner) attempt_->runner->stop();
  attempt_.reset();
  if (!job->answered) {
    job->answered = true;
    job->reply(std::move(response));
  }
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  host_.post([weak] {
    if (auto self = weak.lock()) self->pump();
  });
}

// --- echo ------------------------------------------------------------------

void GatewayDaemon::start_echo(nlohmann::json request, Reply reply) {
  auto batch = std::make_shared<EchoBatch>();
  batch->reply = std::move(reply);
  batch->count = request.value("count", 10);
  batch->via_adapter = request.value("via_adapter", false);
  batch->payload = request.value("payload", nlohmann::json("ping"));
  std::vector<std::string> targets;
  for (const auto& [fp, e] : registry_.entries()) {
    if (e.liveness == Liveness::Active && e.control && !echo_waiting_.count(fp)) targets.push_back(fp);
  }
  if (targets.empty() || batch->count < 1) {
    batch->answered = true;
    batch->reply(error_body(Errc::GroupTooSmall, "no active peers to echo"));
    return;
  }
  std::weak_ptr<GatewayDaemon> weak = shared_from_this();
  std::weak_ptr<EchoBatch> weak_batch = batch;
  batch->timeout = host_.after(config_.round_timeout, [weak, weak_batch] {
    auto self = weak.lock();
    auto b = weak_batch.lock();
    if (self && b) self->echo_finish(b);
  });
  for (const auto& fp : targets) {
    batch->done[fp] = 0;
    batch->adapter[fp] = {};
    batch->began[fp] = host_.now();
    echo_next(batch, fp);
  }
}

void GatewayDaemon::echo_next(const std::shared_ptr<EchoBatch>& batch, const std::string& fp) {
  const auto n = next_echo_++;
  echo_waiting_[fp] = {batch, n};
  try {
    send_to(fp, MessageType::Heartbeat, std::nullopt,
            {{"kind", "echo"}, {"n", n}, {"payload", batch->payload}, {"via_adapter", batch->via_adapter}});
  } catch (const Error&) {
    echo_waiting_.erase(fp);
  }
}

void GatewayDaemon::echo_reply(const std::string& fp, const nlohmann::json& body) {
  auto it = echo_waiting_.find(fp);
  if (it == echo_waiting_.end() || body.value("n", std::uint64_t{0}) != it->second.second) return;
  auto batch = it->second.first;
  echo_waiting_.erase(it);
  if (batch->answered) return;
  if (body.value("payload", nlohmann::json()) != batch->payload) {
    spdlog::warn("{}: echo payload from {} differs", identity_.name, fp);
  }
  batch->adapter[fp] += net::Duration(body.value("adapter_us", std::int64_t{0}));
  if (++batch->done[fp] < batch->count) {
    echo_next(batch, fp);
    return;
  }
  batch->finished[fp] = host_.now();
  if (batch->finished.size() == batch->done.size()) echo_finish(batch);
}

void GatewayDaemon::echo_finish(const std::shared_ptr<EchoBatch>& batch) {
  if (batch->answered) return;
  batch->answered = true;
  batch->timeout.cancel();
  std::vector<PeerTiming> timings;
  nlohmann::json incomplete = nlohmann::json::array();
  for (const auto& [fp, began] : batch->began) {
    const auto* e = registry_.find(fp);
    const std::string name = e ? e->meta.name : fp;
    auto it = batch->finished.find(fp);
    if (it == batch->finished.end()) {
      incomplete.push_back(name);
      echo_waiting_.erase(fp);
      continue;
    }
    const double total = ms(it->second - began);
    const double adapter = ms(batch->adapter[fp]);
    timings.push_back({name, std::max(0.0, total - adapter), adapter, total});
  }
  std::sort(timings.begin(), timings.end(), [](const auto& a, const auto& b) { return a.peer < b.peer; });
  batch->reply({{"ok", incomplete.empty()},
                {"operation", "echo"},
                {"count", batch->count},
                {"via_adapter", batch->via_adapter},
                {"incomplete", incomplete},
                {"timing", timing_to_json(timings)}});
}

}  // namespace smcgw

#include "smcgw/session.hpp"

#include <spdlog/spdlog.h>

namespace smcgw {

ChannelSet::ChannelSet(net::Host& host, const Identity& self, const TrustStore& trust, RoundPlan plan, Options options)
    : host_(host), self_(self), trust_(trust), plan_(std::move(plan)), options_(options) {}

ChannelSet::Ptr ChannelSet::create(net::Host& host, const Identity& self, const TrustStore& trust, RoundPlan plan,
                                   Options options) {
  return Ptr(new ChannelSet(host, self, trust, std::move(plan), options));
}

void ChannelSet::establish(ReadyHandler on_ready, MessageHandler on_message, LostHandler on_lost) {
  on_ready_ = std::move(on_ready);
  on_message_ = std::move(on_message);
  on_lost_ = std::move(on_lost);
  establishing_ = true;
  const auto& me = plan_.at(self_.fingerprint());
  for (const auto& p : plan_.participants) {
    if (p.index > me.index) connect_to(p);
  }
  // Channels accepted before establish() get their handlers now.
  auto accepted = channels_;
  for (const auto& [fp, ch] : accepted) adopt(fp, ch);

  std::weak_ptr<ChannelSet> weak = shared_from_this();
  wait_timer_ = host_.after(plan_.channel_wait, [weak] {
    if (auto self = weak.lock()) {
      self->waiting_ = false;
      self->check();
    }
  });
  deadline_ = host_.after(plan_.channel_wait + options_.establish_timeout, [weak] {
    auto self = weak.lock();
    if (!self || self->closed_ || !self->on_ready_) return;
    std::string names;
    for (const auto& fp : self->missing()) {
      if (!names.empty()) names += ", ";
      names += self->plan_.at(fp).name;
    }
    auto cb = std::move(self->on_ready_);
    self->on_ready_ = nullptr;
    cb(Error(Errc::ChannelEstablishmentFailed, "no channel to " + names));
  });
}

void ChannelSet::connect_to(const Participant& p) {
  HandshakeOptions opts;
  opts.purpose = "data";
  opts.session_id = plan_.session_id;
  opts.expected_fingerprint = p.fingerprint;
  opts.verify = pinned_in(trust_);
  opts.timeout = options_.handshake_timeout;
  std::weak_ptr<ChannelSet> weak = shared_from_this();
  const auto fp = p.fingerprint;
  SecureChannel::open(host_, self_, p.endpoint, opts, [weak, fp](SecureChannel::Ptr ch, std::optional<Error> err) {
    auto self = weak.lock();
    if (!self || self->closed_) {
      if (ch) ch->close();
      return;
    }
    if (err) {
      // The other side may not be listening yet or briefly unreachable.
      if (!self->on_ready_ || err->code() == Errc::FingerprintMismatch) {
        spdlog::warn("{}: data channel to {} failed: {}", self->host_.name(), self->plan_.at(fp).name, err->what());
        return;
      }
      self->retries_.push_back(self->host_.after(kConnectRetry, [weak, fp] {
        if (auto s = weak.lock(); s && !s->closed_ && s->on_ready_) s->connect_to(s->plan_.at(fp));
      }));
      return;
    }
    self->adopt(fp, ch);
  });
}

bool ChannelSet::accept(const SecureChannel::Ptr& channel) {
  if (closed_) return false;
  const auto& r = channel->remote();
  if (r.session_id != plan_.session_id) return false;
  const auto* p = plan_.find(r.fingerprint);
  const auto& me = plan_.at(self_.fingerprint());
  if (!p || p->index >= me.index) return false;
  adopt(r.fingerprint, channel);
  return true;
}

void ChannelSet::adopt(const std::string& fingerprint, const SecureChannel::Ptr& channel) {
  auto& slot = channels_[fingerprint];
  if (slot && slot != channel) slot->close();
  slot = channel;
  if (!establishing_) return;
  std::weak_ptr<ChannelSet> weak = shared_from_this();
  std::weak_ptr<SecureChannel> weak_ch = channel;
  channel->start(
      [weak, fingerprint](Message m) {
        if (auto self = weak.lock(); self && !self->closed_ && self->on_message_) {
          self->on_message_(fingerprint, std::move(m));
        }
      },
      [weak, fingerprint, weak_ch] {
        auto self = weak.lock();
        if (!self || self->closed_) return;
        auto it = self->channels_.find(fingerprint);
        if (it != self->channels_.end() && it->second == weak_ch.lock()) self->channels_.erase(it);
        if (self->on_lost_) self->on_lost_(fingerprint);
      });
  check();
}

std::vector<std::string> ChannelSet::missing() const {
  std::vector<std::string> out;
  for (const auto& p : plan_.participants) {
    if (p.fingerprint == self_.fingerprint()) continue;
    auto it = channels_.find(p.fingerprint);
    if (it == channels_.end() || !it->second->is_open()) out.push_back(p.fingerprint);
  }
  return out;
}

void ChannelSet::check() {
  if (waiting_ || closed_ || !on_ready_ || !complete()) return;
  deadline_.cancel();
  auto cb = std::move(on_ready_);
  on_ready_ = nullptr;
  cb(std::nullopt);
}

void ChannelSet::send(const std::string& to, Message msg) {
  auto it = channels_.find(to);
  if (it == channels_.end()) throw Error(Errc::ChannelClosed, "no channel to " + plan_.at(to).name);
  it->second->send(std::move(msg));
}

void ChannelSet::close() {
  if (closed_) return;
  closed_ = true;
  wait_timer_.cancel();
  deadline_.cancel();
  for (auto& t : retries_) t.cancel();
  for (auto& [fp, ch] : channels_) ch->close();
  channels_.clear();
  on_ready_ = nullptr;
  on_message_ = nullptr;
  on_lost_ = nullptr;
}

// ---------------------------------------------------------------------------

SessionRunner::SessionRunner(net::Host& host, const Identity& self, const TrustStore& trust, Adapter& adapter,
                             RoundPlan plan, std::optional<FieldElement> input, Options options)
    : host_(host),
      self_(self),
      adapter_(adapter),
      plan_(plan),
      input_(input),
      options_(options),
      channels_(ChannelSet::create(host, self, trust, std::move(plan), options.channels)) {}

SessionRunner::Ptr SessionRunner::create(net::Host& host, const Identity& self, const TrustStore& trust,
                                         Adapter& adapter, RoundPlan plan, std::optional<FieldElement> input,
                                         Options options) {
  return Ptr(new SessionRunner(host, self, trust, adapter, std::move(plan), input, options));
}

void SessionRunner::start(DoneHandler on_done, FailHandler on_fail) {
  if (started_) return;
  started_ = true;
  on_done_ = std::move(on_done);
  on_fail_ = std::move(on_fail);
  std::weak_ptr<SessionRunner> weak = shared_from_this();
  channels_->establish(
      [weak](std::optional<Error> err) {
        if (auto self = weak.lock()) self->on_channels(std::move(err));
      },
      [weak](const std::string& from, Message m) {
        auto self = weak.lock();
        if (!self || self->stopped_ || self->failed_) return;
        if (m.type != MessageType::RoundMessage || m.session_id != self->plan_.session_id) {
          spdlog::warn("{}: unexpected {} on data channel", self->host_.name(), to_string(m.type));
          return;
        }
        try {
          self->execute(round_input_from(from, m.body));
        } catch (const Error& e) {
          self->fail(e);
        }
      },
      [weak](const std::string& fp) {
        auto self = weak.lock();
        if (!self || self->stopped_ || self->finished_ || self->failed_) return;
        self->fail(Error(Errc::ChannelClosed, "data channel to " + self->plan_.at(fp).name + " closed"));
      });
}

bool SessionRunner::accept_channel(const SecureChannel::Ptr& channel) {
  if (stopped_) return false;
  return channels_->accept(channel);
}

void SessionRunner::on_channels(std::optional<Error> err) {
  if (stopped_ || failed_) return;
  if (err) {
    fail(*err);
    return;
  }
  try {
    enter(RoundKind::Distribute);
    execute(ChannelsReady{});
    if (input_ && plan_.at(self_.fingerprint()).contributes) execute(LocalInput{*input_});
  } catch (const Error& e) {
    fail(e);
  }
}

void SessionRunner::execute(const EngineEvent& ev) {
  if (stopped_ || failed_) return;
  const auto t0 = host_.now();
  const auto reply = adapter_.execute(plan_.session_id, ev);
  adapter_time_ += host_.now() - t0;
  for (auto r : reply.entered) enter(r);
  for (const auto& o : reply.outbound) {
    if (o.to == self_.fingerprint()) {
      std::weak_ptr<SessionRunner> weak = shared_from_this();
      host_.post([weak, in = RoundInput{o.to, o.round, o.share}] {
        auto self = weak.lock();
        if (!self) return;
        try {
          self->execute(in);
        } catch (const Error& e) {
          self->fail(e);
        }
      });
    } else {
      channels_->send(o.to, Message{MessageType::RoundMessage, self_.fingerprint(), plan_.session_id, round_body(o),
                                    std::nullopt});
    }
  }
  current_ = reply.current;
  if (current_ == RoundKind::Done && !finished_) {
    finished_ = true;
    round_timer_.cancel();
    if (on_done_) on_done_(reply.result);
  }
}

void SessionRunner::enter(RoundKind round) {
  current_ = round;
  if (host_.tracing()) {
    net::TraceEvent ev;
    ev.kind = net::TraceKind::RoundEntered;
    ev.host = host_.name();
    ev.session_id = plan_.session_id;
    ev.round = static_cast<int>(round);
    host_.trace(ev);
  }
  round_timer_.cancel();
  if (round == RoundKind::Done) return;
  std::weak_ptr<SessionRunner> weak = shared_from_this();
  round_timer_ = host_.after(options_.round_timeout, [weak, round] {
    auto self = weak.lock();
    if (!self || self->finished_ || self->stopped_) return;
    self->fail(Error(Errc::RoundTimeout, std::string("round ") + std::string(to_string(round)) + " timed out"));
  });
}

void SessionRunner::fail(const Error& err) {
  if (failed_ || stopped_ || finished_) return;
  failed_ = true;
  round_timer_.cancel();
  spdlog::info("{}: session {} failed: {}", host_.name(), plan_.session_id, err.what());
  if (on_fail_) on_fail_(err);
}

void SessionRunner::stop() {
  if (stopped_) return;
  stopped_ = true;
  round_timer_.cancel();
  channels_->close();
  on_done_ = nullptr;
  on_fail_ = nullptr;
  try {
    adapter_.abort(plan_.session_id);
  } catch (const Error& e) {
    spdlog::debug("{}: abort of {} failed: {}", host_.name(), plan_.session_id, e.what());
  }
}

}  // namespace smcgw

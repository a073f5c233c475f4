#include "smcgw/net/sim_network.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace smcgw::net {
namespace {

std::pair<std::string, std::string> link_key(const std::string& a, const std::string& b) {
  return a < b ? std::pair{a, b} : std::pair{b, a};
}

double unit_interval(RandomSource& rng) { return static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53; }

class SimListener final : public Listener {
 public:
  SimListener(SimHost& host, std::uint16_t port, std::uint64_t incarnation)
      : host_(host), port_(port), incarnation_(incarnation) {}
  Address address() const override { return {host_.name(), port_}; }
  void close() override;

 private:
  SimHost& host_;
  std::uint16_t port_;
  std::uint64_t incarnation_;
};

class SimDatagram final : public DatagramSocket {
 public:
  SimDatagram(SimHost& host, std::uint16_t port, std::uint64_t incarnation)
      : host_(host), port_(port), incarnation_(incarnation) {}
  Address address() const override { return {host_.name(), port_}; }
  void close() override;

 private:
  SimHost& host_;
  std::uint16_t port_;
  std::uint64_t incarnation_;
};

}  // namespace

// Closing needs private access; routed through these helpers.
struct SimSocketAccess {
  static void unlisten(SimHost& h, std::uint16_t port, std::uint64_t inc) {
    if (h.incarnation() == inc) h.listeners_.erase(port);
  }
  static void unbind(SimHost& h, std::uint16_t port, std::uint64_t inc) {
    if (h.incarnation() == inc) h.datagrams_.erase(port);
  }
};

namespace {
void SimListener::close() { SimSocketAccess::unlisten(host_, port_, incarnation_); }
void SimDatagram::close() { SimSocketAccess::unbind(host_, port_, incarnation_); }
}  // namespace

// ---------------------------------------------------------------- SimHost

SimHost::SimHost(SimWorld& world, std::string name, std::uint64_t seed)
    : world_(world), name_(std::move(name)), rng_(seed) {}

Duration SimHost::now() const { return world_.now(); }

TimerHandle SimHost::after(Duration delay, std::function<void()> fn) {
  auto flag = std::make_shared<bool>(false);
  const auto inc = incarnation_;
  world_.schedule(world_.now() + std::max(delay, Duration{0}), [this, inc, flag, fn = std::move(fn)] {
    if (*flag || !alive_ || incarnation_ != inc) return;
    *flag = true;
    fn();
  });
  return TimerHandle(flag);
}

void SimHost::post(std::function<void()> fn) { after(Duration{0}, std::move(fn)); }

ListenerPtr SimHost::listen(const Address& bind, AcceptHandler on_accept) {
  if (!alive_) throw Error(Errc::SocketUnavailable, name_ + " is down");
  if (!bind.host.empty() && bind.host != name_ && bind.host != "0.0.0.0") {
    throw Error(Errc::SocketUnavailable, name_ + " cannot bind " + bind.to_string());
  }
  std::uint16_t port = bind.port;
  if (port == 0) {
    while (listeners_.count(next_ephemeral_)) ++next_ephemeral_;
    port = next_ephemeral_++;
  }
  if (listeners_.count(port)) throw Error(Errc::SocketUnavailable, name_ + ":" + std::to_string(port) + " in use");
  listeners_[port] = std::move(on_accept);
  return std::make_shared<SimListener>(*this, port, incarnation_);
}

void SimHost::connect(const Address& target, Duration timeout, ConnectHandler on_done) {
  const auto inc = incarnation_;
  auto finish = [this, inc, on_done](Duration at, LinkPtr link, std::optional<Error> err) {
    world_.schedule(at, [this, inc, on_done, link, err] {
      if (!alive_ || incarnation_ != inc) return;
      on_done(link, err);
    });
  };
  const Duration lat = world_.sample_latency();
  if (!alive_) return;
  if (!world_.has_host(target.host)) {
    finish(world_.now() + lat * 2, nullptr, Error(Errc::Refused, "no route to " + target.to_string()));
    return;
  }
  const Duration arrive = world_.now() + lat;
  world_.schedule(arrive, [this, inc, target, timeout, lat, finish] {
    if (!alive_ || incarnation_ != inc) return;
    SimHost& remote = world_.host(target.host);
    const auto start = world_.now() - lat;
    if (!remote.alive_ || world_.link_dropped(name_, remote.name_)) {
      finish(std::max(start + timeout, world_.now()), nullptr,
             Error(Errc::Refused, "connect to " + target.to_string() + " timed out"));
      return;
    }
    auto it = remote.listeners_.find(target.port);
    if (it == remote.listeners_.end()) {
      finish(world_.now() + lat, nullptr, Error(Errc::Refused, "connection refused by " + target.to_string()));
      return;
    }
    const auto id = world_.next_link_++;
    auto mine = std::make_shared<SimLink>(world_, *this, remote.name_, id);
    auto theirs = std::make_shared<SimLink>(world_, remote, name_, id);
    mine->peer_ = theirs;
    theirs->peer_ = mine;
    links_.push_back(mine);
    remote.links_.push_back(theirs);
    auto accept = it->second;
    accept(theirs);
    finish(world_.now() + lat, mine, std::nullopt);
  });
}

DatagramPtr SimHost::open_datagram(const Address& bind, DatagramHandler on_datagram) {
  if (!alive_) throw Error(Errc::SocketUnavailable, name_ + " is down");
  if (datagrams_.count(bind.port)) {
    throw Error(Errc::SocketUnavailable, name_ + " udp:" + std::to_string(bind.port) + " in use");
  }
  datagrams_[bind.port] = std::move(on_datagram);
  return std::make_shared<SimDatagram>(*this, bind.port, incarnation_);
}

void SimHost::send_datagram(const Address& target, std::string payload) {
  if (!alive_) return;
  std::vector<SimHost*> receivers;
  if (world_.has_host(target.host)) {
    receivers.push_back(&world_.host(target.host));
  } else {
    // Group address: every host bound to the port hears it.
    for (auto& [n, h] : world_.hosts_) {
      if (h->datagrams_.count(target.port)) receivers.push_back(h.get());
    }
  }
  const Duration departed = world_.depart(*this);
  for (SimHost* r : receivers) {
    if (world_.link_dropped(name_, r->name_)) continue;
    const Duration at = departed + world_.sample_latency();
    const auto inc = r->incarnation_;
    world_.schedule(at, [this, r, inc, port = target.port, payload] {
      if (!r->alive_ || r->incarnation_ != inc || world_.link_dropped(name_, r->name_)) return;
      auto it = r->datagrams_.find(port);
      if (it == r->datagrams_.end()) return;
      if (world_.recording_) world_.transcript_.push_back({world_.now().count(), name_, r->name_, 0, payload});
      auto handler = it->second;
      handler(payload, Address{name_, 0});
    });
  }
}

void SimHost::kill() {
  if (!alive_) return;
  alive_ = false;
  ++incarnation_;
  listeners_.clear();
  datagrams_.clear();
  for (auto& w : links_) {
    if (auto l = w.lock()) l->silence();
  }
  links_.clear();
}

void SimHost::restart() {
  if (alive_) return;
  alive_ = true;
  egress_free_ = world_.now();
}

bool SimHost::intercepts_traces() const { return world_.armed_; }

void SimHost::on_trace(const TraceEvent& ev) {
  if (ev.kind == TraceKind::RoundEntered && world_.armed_) world_.on_round(name_, ev.round);
}

// ---------------------------------------------------------------- SimLink

SimLink::SimLink(SimWorld& world, SimHost& owner, std::string remote, std::uint64_t id)
    : world_(world), owner_(owner), owner_incarnation_(owner.incarnation()), remote_(std::move(remote)), id_(id) {}

void SimLink::start(FrameHandler on_frame, CloseHandler on_close) {
  on_frame_ = std::move(on_frame);
  on_close_ = std::move(on_close);
  started_ = true;
  auto self = shared_from_this();
  world_.schedule(world_.now(), [self] {
    if (self->owner_.incarnation() != self->owner_incarnation_) return;
    self->pump();
    if (self->remote_closed_ && !self->closed_notified_) {
      self->closed_notified_ = true;
      if (self->on_close_) self->on_close_();
      self->release();
    }
  });
}

void SimLink::send(std::string frame) {
  if (!open_ || !owner_.alive() || owner_.incarnation() != owner_incarnation_) return;
  world_.transmit(*this, std::move(frame));
}

void SimLink::close() {
  if (!open_) return;
  open_ = false;
  closed_notified_ = true;
  release();
  auto peer = peer_.lock();
  if (!peer || !owner_.alive()) return;
  // The FIN follows any data still in flight.
  const Duration at = std::max(world_.now() + world_.sample_latency(), last_arrival_);
  world_.schedule(at, [peer, this_owner = owner_.name(), w = &world_] {
    if (w->link_dropped(this_owner, peer->owner_.name())) return;
    peer->remote_closed();
  });
}

void SimLink::deliver(const std::string& bytes) {
  if (!open_) return;
  reader_.feed(bytes);
  if (started_) pump();
}

void SimLink::pump() {
  try {
    while (open_) {
      auto payload = reader_.next();
      if (!payload) break;
      on_frame_(std::move(*payload));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}: link to {} failed: {}", owner_.name(), remote_, e.what());
    close();
  }
}

void SimLink::remote_closed() {
  if (!open_ || owner_.incarnation() != owner_incarnation_ || !owner_.alive()) return;
  open_ = false;
  remote_closed_ = true;
  if (started_ && !closed_notified_) {
    closed_notified_ = true;
    if (on_close_) on_close_();
    release();
  }
}

void SimLink::silence() {
  open_ = false;
  closed_notified_ = true;
  release();
}

void SimLink::release() {
  // Handlers usually capture their owner; drop them once the link is done.
  world_.schedule(world_.now(), [self = shared_from_this()] {
    self->on_frame_ = nullptr;
    self->on_close_ = nullptr;
  });
}

// ---------------------------------------------------------------- SimWorld

SimWorld::SimWorld(std::uint64_t seed, FaultPlan plan)
    : seed_(seed), plan_(std::move(plan)), rng_(mix_seed(seed, 0x6e6574)) {}

SimWorld::~SimWorld() {
  while (!queue_.empty()) queue_.pop();
}

SimHost& SimWorld::add_host(const std::string& name) {
  if (hosts_.count(name)) throw Error(Errc::ScenarioSetupFailed, "duplicate host " + name);
  auto h = std::make_unique<SimHost>(*this, name, hash_seed(seed_, name));
  auto& ref = *h;
  hosts_.emplace(name, std::move(h));
  return ref;
}

SimHost& SimWorld::host(const std::string& name) {
  auto it = hosts_.find(name);
  if (it == hosts_.end()) throw Error(Errc::ScenarioSetupFailed, "unknown host " + name);
  return *it->second;
}

void SimWorld::schedule(Duration at, std::function<void()> fn) {
  queue_.push(Event{std::max(at, now_), next_seq_++, std::move(fn)});
}

Duration SimWorld::sample_latency() {
  if (plan_.latency.kind == LatencySpec::Kind::Fixed) return from_ms(plan_.latency.fixed_ms);
  return from_ms(plan_.latency.min_ms + unit_interval(rng_) * (plan_.latency.max_ms - plan_.latency.min_ms));
}

Duration SimWorld::depart(SimHost& from) {
  const Duration start = std::max(now_, from.egress_free_);
  from.egress_free_ = start + from_ms(plan_.egress_ms_per_frame);
  return from.egress_free_;
}

void SimWorld::transmit(SimLink& from, std::string bytes) {
  const std::string src = from.owner_.name();
  if (link_dropped(src, from.remote_)) return;
  Duration at = depart(from.owner_) + sample_latency();
  if (armed_ && plan_.reorder) at += from_ms(unit_interval(rng_) * plan_.reorder_jitter_ms);
  // Streams stay FIFO; jitter only reshuffles frames across links.
  at = std::max(at, from.last_arrival_);
  from.last_arrival_ = at;
  const int copies = (armed_ && plan_.duplicate && unit_interval(rng_) < plan_.duplicate_probability) ? 2 : 1;
  std::weak_ptr<SimLink> target = from.peer_;
  for (int c = 0; c < copies; ++c) {
    schedule(at, [this, target, src, bytes, id = from.id_] {
      auto peer = target.lock();
      if (!peer) return;
      if (link_dropped(src, peer->owner_.name())) return;
      if (!peer->owner_.alive() || peer->owner_.incarnation() != peer->owner_incarnation_) return;
      if (recording_) transcript_.push_back({now_.count(), src, peer->owner_.name(), id, bytes});
      peer->deliver(bytes);
    });
  }
}

void SimWorld::arm_faults(const FaultPlan& plan) {
  plan_ = plan;
  arm_faults();
}

void SimWorld::arm_faults() {
  armed_ = true;
  round_kill_fired_.assign(plan_.kills.size(), false);
  round_drop_fired_.assign(plan_.drop_links.size(), false);
  round_reset_fired_.assign(plan_.reset_links.size(), false);
  const Duration base = now_;
  for (const auto& k : plan_.kills) {
    if (k.at_ms) schedule(base + from_ms(*k.at_ms), [this, name = k.peer] { kill(name); });
  }
  for (const auto& d : plan_.drop_links) {
    if (d.at_ms) schedule(base + from_ms(*d.at_ms), [this, d] { drop_link(d.a, d.b); });
  }
  for (const auto& r : plan_.reset_links) {
    if (r.at_ms) schedule(base + from_ms(*r.at_ms), [this, r] { reset_link(r.a, r.b); });
  }
}

void SimWorld::on_round(const std::string& host, int round) {
  for (std::size_t i = 0; i < plan_.kills.size(); ++i) {
    const auto& k = plan_.kills[i];
    if (!round_kill_fired_[i] && k.round == round && k.peer == host) {
      round_kill_fired_[i] = true;
      spdlog::debug("sim: killing {} on entering round {}", host, round);
      kill(host);
    }
  }
  for (std::size_t i = 0; i < plan_.drop_links.size(); ++i) {
    const auto& d = plan_.drop_links[i];
    if (!round_drop_fired_[i] && d.round == round && (d.a == host || d.b == host)) {
      round_drop_fired_[i] = true;
      drop_link(d.a, d.b);
    }
  }
  for (std::size_t i = 0; i < plan_.reset_links.size(); ++i) {
    const auto& r = plan_.reset_links[i];
    if (!round_reset_fired_[i] && r.round == round && (r.a == host || r.b == host)) {
      round_reset_fired_[i] = true;
      // Deferred so the host finishes its current handler first.
      schedule(now_, [this, r] { reset_link(r.a, r.b); });
    }
  }
}

void SimWorld::kill(const std::string& name) {
  if (has_host(name)) host(name).kill();
}

void SimWorld::restart(const std::string& name) {
  if (has_host(name)) host(name).restart();
}

void SimWorld::drop_link(const std::string& a, const std::string& b) { dropped_.insert(link_key(a, b)); }

bool SimWorld::link_dropped(const std::string& a, const std::string& b) const {
  return !dropped_.empty() && dropped_.count(link_key(a, b)) != 0;
}

void SimWorld::reset_link(const std::string& a, const std::string& b) {
  if (!has_host(a) || !has_host(b)) return;
  std::vector<std::shared_ptr<SimLink>> victims;
  for (auto* h : {&host(a), &host(b)}) {
    const std::string other = h->name() == a ? b : a;
    for (auto& w : h->links_) {
      if (auto l = w.lock(); l && l->open_ && l->remote_ == other) victims.push_back(l);
    }
  }
  for (auto& l : victims) l->remote_closed();
}

bool SimWorld::run_until(const std::function<bool()>& done, Duration limit) {
  const Duration deadline = now_ + limit;
  while (!done()) {
    if (queue_.empty() || queue_.top().at > deadline) {
      now_ = std::max(now_, deadline);
      return false;
    }
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    now_ = ev.at;
    ++processed_;
    ev.fn();
  }
  return true;
}

void SimWorld::run_for(Duration d) { run_until([] { return false; }, d); }

void SimWorld::run_until_idle(Duration limit) {
  run_until([this] { return queue_.empty(); }, limit);
}

}  // namespace smcgw::net

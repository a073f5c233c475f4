#pragma once

#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "smcgw/net/fault_plan.hpp"
#include "smcgw/net/host.hpp"

namespace smcgw::net {

class SimWorld;
class SimLink;
struct SimSocketAccess;

/// A node inside a SimWorld. Its clock is the world clock.
class SimHost final : public Host {
 public:
  SimHost(SimWorld& world, std::string name, std::uint64_t seed);

  const std::string& name() const override { return name_; }
  Duration now() const override;
  TimerHandle after(Duration delay, std::function<void()> fn) override;
  void post(std::function<void()> fn) override;
  ListenerPtr listen(const Address& bind, AcceptHandler on_accept) override;
  void connect(const Address& target, Duration timeout, ConnectHandler on_done) override;
  DatagramPtr open_datagram(const Address& bind, DatagramHandler on_datagram) override;
  void send_datagram(const Address& target, std::string payload) override;
  RandomSource& random() override { return rng_; }

  bool alive() const { return alive_; }
  std::uint64_t incarnation() const { return incarnation_; }
  /// Silences the host: pending timers are dropped, links go quiet without
  /// notifying the remote side, sockets are unbound.
  void kill();
  /// Brings a killed host back with no sockets and no timers.
  void restart();

 protected:
  bool intercepts_traces() const override;
  void on_trace(const TraceEvent& ev) override;

 private:
  friend class SimWorld;
  friend class SimLink;
  friend struct SimSocketAccess;

  SimWorld& world_;
  std::string name_;
  SeededRandom rng_;
  bool alive_ = true;
  std::uint64_t incarnation_ = 0;
  Duration egress_free_{0};
  std::map<std::uint16_t, AcceptHandler> listeners_;
  std::map<std::uint16_t, DatagramHandler> datagrams_;
  std::vector<std::weak_ptr<SimLink>> links_;
  std::uint16_t next_ephemeral_ = 40000;
};

/// One end of a simulated stream connection.
class SimLink final : public Link, public std::enable_shared_from_this<SimLink> {
 public:
  SimLink(SimWorld& world, SimHost& owner, std::string remote, std::uint64_t id);

  void start(FrameHandler on_frame, CloseHandler on_close) override;
  void send(std::string frame) override;
  void close() override;
  bool is_open() const override { return open_; }
  std::string remote_host() const override { return remote_; }

 private:
  friend class SimWorld;
  friend class SimHost;

  void deliver(const std::string& bytes);
  void remote_closed();
  /// Closes without notifying the remote end (host died).
  void silence();
  void release();
  void pump();

  SimWorld& world_;
  SimHost& owner_;
  std::uint64_t owner_incarnation_;
  std::string remote_;
  std::uint64_t id_;
  std::weak_ptr<SimLink> peer_;
  bool open_ = true;
  bool started_ = false;
  bool closed_notified_ = false;
  bool remote_closed_ = false;
  Duration last_arrival_{0};
  FrameReader reader_;
  FrameHandler on_frame_;
  CloseHandler on_close_;
};

/// Record of one frame or datagram delivery, used to compare runs.
struct Delivery {
  std::int64_t at_us = 0;
  std::string from;
  std::string to;
  std::uint64_t link = 0;
  std::string bytes;

  friend bool operator==(const Delivery&, const Delivery&) = default;
};

/// Deterministic discrete-event network. All hosts share one logical clock;
/// events at equal times run in scheduling order.
class SimWorld {
 public:
  explicit SimWorld(std::uint64_t seed, FaultPlan plan = {});
  ~SimWorld();
  SimWorld(const SimWorld&) = delete;
  SimWorld& operator=(const SimWorld&) = delete;

  SimHost& add_host(const std::string& name);
  SimHost& host(const std::string& name);
  bool has_host(const std::string& name) const { return hosts_.count(name) != 0; }

  Duration now() const { return now_; }

  /// Activates the fault triggers of the plan; at_ms offsets count from
  /// this call.
  void arm_faults();
  void arm_faults(const FaultPlan& plan);
  const FaultPlan& plan() const { return plan_; }

  /// Runs events until the predicate holds, the queue drains or simulated
  /// time passes `limit`. Returns whether the predicate held.
  bool run_until(const std::function<bool()>& done, Duration limit);
  void run_for(Duration d);
  /// Runs until no events are left. Only terminates for finite workloads.
  void run_until_idle(Duration limit);
  bool idle() const { return queue_.empty(); }
  std::uint64_t events_processed() const { return processed_; }

  void record_transcript(bool on) { recording_ = on; }
  const std::vector<Delivery>& transcript() const { return transcript_; }

  void kill(const std::string& name);
  void restart(const std::string& name);
  void reset_link(const std::string& a, const std::string& b);
  void drop_link(const std::string& a, const std::string& b);
  bool link_dropped(const std::string& a, const std::string& b) const;

 private:
  friend class SimHost;
  friend class SimLink;

  struct Event {
    Duration at;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };

  void schedule(Duration at, std::function<void()> fn);
  Duration sample_latency();
  /// Time the bytes leave `from` (egress serialisation included).
  Duration depart(SimHost& from);
  void transmit(SimLink& from, std::string bytes);
  void on_round(const std::string& host, int round);

  std::uint64_t seed_;
  FaultPlan plan_;
  SeededRandom rng_;
  Duration now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_link_ = 1;
  std::uint64_t processed_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<std::string, std::unique_ptr<SimHost>> hosts_;
  std::set<std::pair<std::string, std::string>> dropped_;
  bool armed_ = false;
  std::vector<bool> round_kill_fired_;
  std::vector<bool> round_drop_fired_;
  std::vector<bool> round_reset_fired_;
  bool recording_ = false;
  std::vector<Delivery> transcript_;
};

}  // namespace smcgw::net

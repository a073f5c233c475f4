#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "smcgw/error.hpp"
#include "smcgw/frame.hpp"
#include "smcgw/random.hpp"

namespace smcgw::net {

/// Host clocks count microseconds from an arbitrary per-host epoch. Only
/// differences are meaningful.
using Duration = std::chrono::microseconds;

inline double to_ms(Duration d) { return static_cast<double>(d.count()) / 1000.0; }
inline Duration from_ms(double ms) { return Duration(static_cast<std::int64_t>(ms * 1000.0)); }

struct Address {
  std::string host;
  std::uint16_t port = 0;

  std::string to_string() const;
  /// Parses "host:port".
  static Address parse(std::string_view text);
  bool is_loopback() const;
  bool is_multicast() const;

  friend bool operator==(const Address&, const Address&) = default;
  friend auto operator<=>(const Address&, const Address&) = default;
};

class TimerHandle {
 public:
  TimerHandle() = default;
  explicit TimerHandle(std::shared_ptr<bool> cancelled) : cancelled_(std::move(cancelled)) {}

  void cancel() {
    if (cancelled_) *cancelled_ = true;
  }
  bool pending() const { return cancelled_ && !*cancelled_; }

 private:
  std::shared_ptr<bool> cancelled_;
};

/// Bidirectional pipe of frames. Handlers run on the owning host's thread.
class Link {
 public:
  using FrameHandler = std::function<void(std::string payload)>;
  using CloseHandler = std::function<void()>;

  virtual ~Link() = default;
  /// Starts delivery. Frames that arrived earlier are delivered first.
  virtual void start(FrameHandler on_frame, CloseHandler on_close) = 0;
  /// Sends one encoded frame (length prefix included).
  virtual void send(std::string frame) = 0;
  virtual void close() = 0;
  virtual bool is_open() const = 0;
  virtual std::string remote_host() const = 0;
};
using LinkPtr = std::shared_ptr<Link>;

class Listener {
 public:
  virtual ~Listener() = default;
  virtual Address address() const = 0;
  virtual void close() = 0;
};
using ListenerPtr = std::shared_ptr<Listener>;

class DatagramSocket {
 public:
  virtual ~DatagramSocket() = default;
  virtual Address address() const = 0;
  virtual void close() = 0;
};
using DatagramPtr = std::shared_ptr<DatagramSocket>;

enum class TraceKind { MessageSent, MessageReceived, RoundEntered };

/// Observation hook. Message events carry the plaintext envelope as seen by
/// the application, before sealing or after opening.
struct TraceEvent {
  TraceKind kind = TraceKind::MessageSent;
  std::string host;
  std::string remote;
  std::optional<Message> message;
  std::string session_id;
  int round = -1;
};

/// Execution context of one node: a single logical thread with a clock,
/// timers, stream connections, datagrams and a randomness source.
class Host {
 public:
  using AcceptHandler = std::function<void(LinkPtr)>;
  using ConnectHandler = std::function<void(LinkPtr, std::optional<Error>)>;
  using DatagramHandler = std::function<void(std::string payload, Address from)>;
  using Tracer = std::function<void(const TraceEvent&)>;

  virtual ~Host() = default;

  virtual const std::string& name() const = 0;
  virtual Duration now() const = 0;
  virtual TimerHandle after(Duration delay, std::function<void()> fn) = 0;
  virtual void post(std::function<void()> fn) = 0;

  /// Throws SocketUnavailable if the address cannot be bound. Port 0 picks
  /// a free port; the listener reports the actual one.
  virtual ListenerPtr listen(const Address& bind, AcceptHandler on_accept) = 0;
  /// Completes with a link or with Refused (including connect timeout).
  virtual void connect(const Address& target, Duration timeout, ConnectHandler on_done) = 0;

  virtual DatagramPtr open_datagram(const Address& bind, DatagramHandler on_datagram) = 0;
  virtual void send_datagram(const Address& target, std::string payload) = 0;

  virtual RandomSource& random() = 0;

  void set_tracer(Tracer tracer) { tracer_ = std::move(tracer); }
  bool tracing() const { return static_cast<bool>(tracer_) || intercepts_traces(); }
  void trace(const TraceEvent& ev) {
    on_trace(ev);
    if (tracer_) tracer_(ev);
  }

 protected:
  virtual bool intercepts_traces() const { return false; }
  virtual void on_trace(const TraceEvent&) {}

 private:
  Tracer tracer_;
};

}  // namespace smcgw::net

#include "smcgw/net/asio_host.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <deque>

#include <boost/asio/connect.hpp>
#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/multicast.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/ip/udp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/write.hpp>

namespace smcgw::net {
namespace asio = boost::asio;
using asio::ip::tcp;
using asio::ip::udp;

namespace {

asio::ip::address resolve_host(const std::string& host) {
  if (host.empty() || host == "0.0.0.0" || host == "*") return asio::ip::address_v4::any();
  if (host == "localhost") return asio::ip::address_v4::loopback();
  boost::system::error_code ec;
  auto addr = asio::ip::make_address(host, ec);
  if (ec) throw Error(Errc::SocketUnavailable, "cannot parse address '" + host + "'");
  return addr;
}

template <class F>
void guarded(const std::string& host, const char* what, F&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    spdlog::error("{}: unhandled error in {}: {}", host, what, e.what());
  }
}

class AsioLink final : public Link, public std::enable_shared_from_this<AsioLink> {
 public:
  AsioLink(std::string host, tcp::socket socket) : host_(std::move(host)), socket_(std::move(socket)) {
    boost::system::error_code ec;
    socket_.set_option(tcp::no_delay(true), ec);
    auto ep = socket_.remote_endpoint(ec);
    remote_ = ec ? "?" : ep.address().to_string() + ":" + std::to_string(ep.port());
  }

  void start(FrameHandler on_frame, CloseHandler on_close) override {
    asio::dispatch(socket_.get_executor(), [self = shared_from_this(), on_frame = std::move(on_frame),
                                            on_close = std::move(on_close)]() mutable {
      self->on_frame_ = std::move(on_frame);
      self->on_close_ = std::move(on_close);
      self->read();
    });
  }

  void send(std::string frame) override {
    asio::dispatch(socket_.get_executor(), [self = shared_from_this(), frame = std::move(frame)]() mutable {
      if (!self->open_) return;
      self->queue_.push_back(std::move(frame));
      if (self->queue_.size() == 1) self->write();
    });
  }

  void close() override {
    asio::dispatch(socket_.get_executor(), [self = shared_from_this()] { self->shut(false); });
  }

  bool is_open() const override { return open_; }
  std::string remote_host() const override { return remote_; }

 private:
  void read() {
    socket_.async_read_some(asio::buffer(buf_), [self = shared_from_this()](boost::system::error_code ec,
                                                                             std::size_t n) {
      if (!self->open_) return;
      if (ec) {
        self->shut(true);
        return;
      }
      try {
        self->reader_.feed(std::string_view(self->buf_.data(), n));
        while (self->open_) {
          auto payload = self->reader_.next();
          if (!payload) break;
          self->on_frame_(std::move(*payload));
        }
      } catch (const std::exception& e) {
        spdlog::error("{}: link to {} failed: {}", self->host_, self->remote_, e.what());
        self->shut(true);
        return;
      }
      if (self->open_) self->read();
    });
  }

  void write() {
    asio::async_write(socket_, asio::buffer(queue_.front()),
                      [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
                        if (!self->open_) return;
                        if (ec) {
                          self->shut(true);
                          return;
                        }
                        self->queue_.pop_front();
                        if (!self->queue_.empty()) self->write();
                      });
  }

  void shut(bool notify) {
    if (!open_) return;
    open_ = false;
    boost::system::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
    queue_.clear();
    if (notify && on_close_) guarded(host_, "close handler", on_close_);
    // Handlers often capture their owner; release them once nothing can run.
    asio::post(socket_.get_executor(), [self = shared_from_this()] {
      self->on_frame_ = nullptr;
      self->on_close_ = nullptr;
    });
  }

  std::string host_;
  tcp::socket socket_;
  std::string remote_;
  bool open_ = true;
  std::array<char, 65536> buf_{};
  FrameReader reader_;
  std::deque<std::string> queue_;
  FrameHandler on_frame_;
  CloseHandler on_close_;
};

class AsioListener final : public Listener, public std::enable_shared_from_this<AsioListener> {
 public:
  AsioListener(std::string host, asio::io_context& io, const tcp::endpoint& ep, Host::AcceptHandler on_accept)
      : host_(std::move(host)), acceptor_(io), on_accept_(std::move(on_accept)) {
    boost::system::error_code ec;
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(tcp::acceptor::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
      throw Error(Errc::SocketUnavailable,
                  "cannot listen on " + ep.address().to_string() + ":" + std::to_string(ep.port()) + ": " +
                      ec.message());
    }
    auto local = acceptor_.local_endpoint();
    address_ = {local.address().to_string(), local.port()};
  }

  void accept() {
    acceptor_.async_accept([self = shared_from_this()](boost::system::error_code ec, tcp::socket socket) {
      if (!self->acceptor_.is_open()) return;
      if (!ec) {
        auto link = std::make_shared<AsioLink>(self->host_, std::move(socket));
        guarded(self->host_, "accept handler", [&] { self->on_accept_(link); });
      }
      self->accept();
    });
  }

  Address address() const override { return address_; }
  void close() override {
    asio::dispatch(acceptor_.get_executor(), [self = shared_from_this()] {
      boost::system::error_code ec;
      self->acceptor_.close(ec);
    });
  }

 private:
  std::string host_;
  tcp::acceptor acceptor_;
  Host::AcceptHandler on_accept_;
  Address address_;
};

class AsioDatagram final : public DatagramSocket, public std::enable_shared_from_this<AsioDatagram> {
 public:
  AsioDatagram(std::string host, asio::io_context& io, const Address& bind, const std::string& iface,
               Host::DatagramHandler handler)
      : host_(std::move(host)), socket_(io), handler_(std::move(handler)) {
    const auto addr = resolve_host(bind.host);
    boost::system::error_code ec;
    socket_.open(udp::v4(), ec);
    if (!ec) socket_.set_option(udp::socket::reuse_address(true), ec);
#ifdef SO_REUSEPORT
    if (!ec) {
      int one = 1;
      ::setsockopt(socket_.native_handle(), SOL_SOCKET, SO_REUSEPORT, &one, sizeof(one));
    }
#endif
    if (addr.is_multicast()) {
      if (!ec) socket_.bind(udp::endpoint(addr, bind.port), ec);
      if (!ec) {
        socket_.set_option(asio::ip::multicast::join_group(addr.to_v4(), resolve_host(iface).to_v4()), ec);
      }
    } else if (!ec) {
      socket_.bind(udp::endpoint(addr, bind.port), ec);
    }
    if (ec) throw Error(Errc::SocketUnavailable, "cannot bind udp " + bind.to_string() + ": " + ec.message());
    address_ = {bind.host, socket_.local_endpoint().port()};
  }

  void receive() {
    socket_.async_receive_from(asio::buffer(buf_), from_,
                               [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
                                 if (!self->socket_.is_open()) return;
                                 if (!ec) {
                                   guarded(self->host_, "datagram handler", [&] {
                                     self->handler_(std::string(self->buf_.data(), n),
                                                    Address{self->from_.address().to_string(), self->from_.port()});
                                   });
                                 }
                                 self->receive();
                               });
  }

  Address address() const override { return address_; }
  void close() override {
    asio::dispatch(socket_.get_executor(), [self = shared_from_this()] {
      boost::system::error_code ec;
      self->socket_.close(ec);
    });
  }

 private:
  std::string host_;
  udp::socket socket_;
  Host::DatagramHandler handler_;
  Address address_;
  udp::endpoint from_;
  std::array<char, 65536> buf_{};
};

}  // namespace

struct AsioHost::SendSocket {
  explicit SendSocket(asio::io_context& io, const std::string& iface) : socket(io) {
    boost::system::error_code ec;
    socket.open(udp::v4(), ec);
    if (ec) return;
    socket.set_option(asio::ip::multicast::outbound_interface(resolve_host(iface).to_v4()), ec);
    socket.set_option(asio::ip::multicast::enable_loopback(true), ec);
    socket.set_option(asio::ip::multicast::hops(1), ec);
  }
  udp::socket socket;
};

AsioHost::AsioHost(std::string name, AsioOptions options)
    : name_(std::move(name)),
      options_(std::move(options)),
      work_(asio::make_work_guard(io_)),
      epoch_(std::chrono::steady_clock::now()) {
  if (options_.seed) {
    rng_ = std::make_unique<SeededRandom>(*options_.seed);
  } else {
    rng_ = std::make_unique<SystemRandom>();
  }
}

AsioHost::~AsioHost() {
  stop();
  sender_.reset();
}

Duration AsioHost::now() const {
  return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - epoch_);
}

TimerHandle AsioHost::after(Duration delay, std::function<void()> fn) {
  auto flag = std::make_shared<bool>(false);
  auto timer = std::make_shared<asio::steady_timer>(io_, delay);
  timer->async_wait([this, timer, flag, fn = std::move(fn)](boost::system::error_code ec) {
    if (ec || *flag) return;
    *flag = true;
    guarded(name_, "timer", fn);
  });
  return TimerHandle(flag);
}

void AsioHost::post(std::function<void()> fn) {
  asio::post(io_, [this, fn = std::move(fn)] { guarded(name_, "posted task", fn); });
}

ListenerPtr AsioHost::listen(const Address& bind, AcceptHandler on_accept) {
  auto l = std::make_shared<AsioListener>(name_, io_, tcp::endpoint(resolve_host(bind.host), bind.port),
                                          std::move(on_accept));
  l->accept();
  return l;
}

void AsioHost::connect(const Address& target, Duration timeout, ConnectHandler on_done) {
  asio::ip::address addr;
  try {
    addr = resolve_host(target.host == "0.0.0.0" ? "127.0.0.1" : target.host);
  } catch (const Error& e) {
    post([on_done, e] { on_done(nullptr, Error(Errc::Refused, e.what())); });
    return;
  }
  auto socket = std::make_shared<tcp::socket>(io_);
  auto timer = std::make_shared<asio::steady_timer>(io_, timeout);
  auto done = std::make_shared<bool>(false);
  timer->async_wait([socket, done](boost::system::error_code ec) {
    if (ec || *done) return;
    boost::system::error_code ignored;
    socket->close(ignored);
  });
  socket->async_connect(tcp::endpoint(addr, target.port),
                        [this, socket, timer, done, on_done, target](boost::system::error_code ec) {
                          *done = true;
                          timer->cancel();
                          if (ec) {
                            guarded(name_, "connect handler", [&] {
                              on_done(nullptr,
                                      Error(Errc::Refused, "connect " + target.to_string() + ": " + ec.message()));
                            });
                            return;
                          }
                          auto link = std::make_shared<AsioLink>(name_, std::move(*socket));
                          guarded(name_, "connect handler", [&] { on_done(link, std::nullopt); });
                        });
}

DatagramPtr AsioHost::open_datagram(const Address& bind, DatagramHandler on_datagram) {
  auto d = std::make_shared<AsioDatagram>(name_, io_, bind, options_.multicast_interface, std::move(on_datagram));
  d->receive();
  return d;
}

void AsioHost::send_datagram(const Address& target, std::string payload) {
  if (!sender_) sender_ = std::make_unique<SendSocket>(io_, options_.multicast_interface);
  auto data = std::make_shared<std::string>(std::move(payload));
  boost::system::error_code ec;
  const auto addr = asio::ip::make_address(target.host == "localhost" ? "127.0.0.1" : target.host, ec);
  if (ec) {
    spdlog::warn("{}: bad datagram target {}", name_, target.to_string());
    return;
  }
  sender_->socket.async_send_to(asio::buffer(*data), udp::endpoint(addr, target.port),
                                [this, data](boost::system::error_code ec, std::size_t) {
                                  if (ec) spdlog::debug("{}: datagram send failed: {}", name_, ec.message());
                                });
}

void AsioHost::start() {
  if (thread_.joinable()) return;
  std::promise<void> ready;
  auto fut = ready.get_future();
  thread_ = std::thread([this, &ready] {
    io_thread_id_ = std::this_thread::get_id();
    ready.set_value();
    io_.run();
  });
  fut.wait();
}

void AsioHost::run() {
  io_thread_id_ = std::this_thread::get_id();
  io_.run();
}

void AsioHost::stop() {
  work_.reset();
  io_.stop();
  if (thread_.joinable() && std::this_thread::get_id() != thread_.get_id()) thread_.join();
}

}  // namespace smcgw::net

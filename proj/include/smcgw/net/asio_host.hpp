#pragma once

#include <future>
#include <memory>
#include <thread>
#include <type_traits>

#include <boost/asio/executor_work_guard.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/post.hpp>

#include "smcgw/net/host.hpp"

namespace smcgw::net {

struct AsioOptions {
  /// Interface used to join and send to multicast groups.
  std::string multicast_interface = "127.0.0.1";
  /// Seeds the host's randomness; absent means the system CSPRNG.
  std::optional<std::uint64_t> seed;
};

/// Host backed by real sockets. One io_context per host; every handler of
/// this host runs on its io thread.
class AsioHost final : public Host {
 public:
  AsioHost(std::string name, AsioOptions options = {});
  ~AsioHost() override;
  AsioHost(const AsioHost&) = delete;
  AsioHost& operator=(const AsioHost&) = delete;

  const std::string& name() const override { return name_; }
  Duration now() const override;
  TimerHandle after(Duration delay, std::function<void()> fn) override;
  void post(std::function<void()> fn) override;
  ListenerPtr listen(const Address& bind, AcceptHandler on_accept) override;
  void connect(const Address& target, Duration timeout, ConnectHandler on_done) override;
  DatagramPtr open_datagram(const Address& bind, DatagramHandler on_datagram) override;
  void send_datagram(const Address& target, std::string payload) override;
  RandomSource& random() override { return *rng_; }

  /// Runs the io loop on a background thread.
  void start();
  /// Runs the io loop on the calling thread until stop().
  void run();
  void stop();
  bool in_io_thread() const { return std::this_thread::get_id() == io_thread_id_; }

  /// Runs `fn` on the io thread and waits for its result.
  template <class F>
  auto invoke(F&& fn) -> std::invoke_result_t<F> {
    using R = std::invoke_result_t<F>;
    if (in_io_thread()) return fn();
    std::packaged_task<R()> task(std::forward<F>(fn));
    auto fut = task.get_future();
    boost::asio::post(io_, [&task] { task(); });
    return fut.get();
  }

  boost::asio::io_context& io() { return io_; }

 private:
  std::string name_;
  AsioOptions options_;
  boost::asio::io_context io_;
  boost::asio::executor_work_guard<boost::asio::io_context::executor_type> work_;
  std::unique_ptr<RandomSource> rng_;
  std::chrono::steady_clock::time_point epoch_;
  std::thread thread_;
  std::thread::id io_thread_id_;
  struct SendSocket;
  std::unique_ptr<SendSocket> sender_;
};

}  // namespace smcgw::net

#include "smcgw/adapter.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <deque>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/read.hpp>
#include <boost/asio/write.hpp>

namespace smcgw {
namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::ConfigError;  // sentinel: nothing thrown
}

RoundPlan small_plan(const std::string& sid) {
  SessionDescriptor d;
  d.session_id = sid;
  for (int i = 1; i <= 3; ++i) {
    d.peers.push_back(Participant{"fp0" + std::to_string(i), "p" + std::to_string(i), {"127.0.0.1", 1}, 0, true});
  }
  d.gateway = Participant{"fp00", "gw", {"127.0.0.1", 2}, 0, false};
  return plan_session(d);
}

class AdapterModes : public ::testing::TestWithParam<AdapterMode> {};

TEST_P(AdapterModes, EchoReturnsSamePayload) {
  auto stack = AdapterStack::create(GetParam(), std::make_unique<SeededRandom>(1));
  const nlohmann::json payloads[] = {nullptr, 7, "text", {{"nested", {1, 2, 3}}}, std::string(10000, 'x')};
  for (const auto& p : payloads) EXPECT_EQ(stack.adapter->echo("e", p), p);
}

TEST_P(AdapterModes, ExecuteWithoutPrepareIsProtocolError) {
  auto stack = AdapterStack::create(GetParam(), std::make_unique<SeededRandom>(1));
  EXPECT_EQ(code_of([&] { stack.adapter->execute("nope", ChannelsReady{}); }), Errc::AdapterProtocolError);
  EXPECT_EQ(code_of([&] { stack.adapter->invoke({{"cmd", "launch"}, {"session_id", "x"}}); }),
            Errc::AdapterProtocolError);
  EXPECT_EQ(code_of([&] { stack.adapter->invoke({{"session_id", "x"}}); }), Errc::AdapterProtocolError);
}

TEST_P(AdapterModes, EngineErrorsKeepTheirCode) {
  auto stack = AdapterStack::create(GetParam(), std::make_unique<SeededRandom>(1));
  const auto plan = small_plan("s1");
  stack.adapter->prepare(plan, plan.participants[0].fingerprint);
  const RoundInput stranger{"fp99", RoundKind::Distribute, Share{1, FieldElement(1)}};
  EXPECT_EQ(code_of([&] { stack.adapter->execute("s1", stranger); }), Errc::UnknownSender);
  stack.adapter->abort("s1");
  EXPECT_EQ(stack.service->open_sessions(), 0u);
  EXPECT_EQ(code_of([&] { stack.adapter->execute("s1", ChannelsReady{}); }), Errc::AdapterProtocolError);
}

// Four engines, each behind its own adapter, exchange messages in FIFO order.
TEST_P(AdapterModes, SumThroughAdapters) {
  const auto plan = small_plan("sum");
  std::map<std::string, AdapterStack> stacks;
  std::uint64_t seed = 10;
  for (const auto& p : plan.participants) {
    stacks.emplace(p.fingerprint, AdapterStack::create(GetParam(), std::make_unique<SeededRandom>(seed++)));
    stacks.at(p.fingerprint).adapter->prepare(plan, p.fingerprint);
  }
  std::deque<std::pair<std::string, RoundInput>> wire;
  std::optional<FieldElement> result;
  auto push = [&](const std::string& from, const StepReply& r) {
    for (const auto& o : r.outbound) wire.emplace_back(o.to, RoundInput{from, o.round, o.share});
    if (r.result) result = r.result;
  };
  const std::map<std::string, std::uint64_t> inputs = {{"fp01", 5}, {"fp02", 10}, {"fp03", 20}};
  for (const auto& p : plan.participants) {
    auto& a = *stacks.at(p.fingerprint).adapter;
    push(p.fingerprint, a.execute("sum", ChannelsReady{}));
    if (p.contributes) push(p.fingerprint, a.execute("sum", LocalInput{FieldElement(inputs.at(p.fingerprint))}));
  }
  while (!wire.empty()) {
    auto [to, in] = wire.front();
    wire.pop_front();
    push(to, stacks.at(to).adapter->execute("sum", in));
  }
  ASSERT_TRUE(result);
  EXPECT_EQ(result->value(), 35u);
}

INSTANTIATE_TEST_SUITE_P(Both, AdapterModes, ::testing::Values(AdapterMode::InProcess, AdapterMode::LoopbackSocket),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(SocketAdapter, UnreachablePort) {
  std::uint16_t port;
  {
    SmcService svc(1);
    AdapterServer server(svc);
    port = server.port();
  }
  SocketAdapter client(port);
  EXPECT_EQ(code_of([&] { client.echo("e", 1); }), Errc::AdapterUnreachable);
}

TEST(SocketAdapter, MalformedReplyIsProtocolError) {
  namespace asio = boost::asio;
  asio::io_context io;
  asio::ip::tcp::acceptor acc(io, {asio::ip::address_v4::loopback(), 0});
  const auto port = acc.local_endpoint().port();
  std::thread server([&] {
    auto s = acc.accept();
    char header[4];
    asio::read(s, asio::buffer(header));
    std::string body(read_frame_length(std::string_view(header, 4)), '\0');
    asio::read(s, asio::buffer(body));
    const std::string junk = encode_json_frame(nlohmann::json::array({1, 2}));
    asio::write(s, asio::buffer(junk));
    asio::read(s, asio::buffer(header));
    body.assign(read_frame_length(std::string_view(header, 4)), '\0');
    asio::read(s, asio::buffer(body));
    const std::string garbage = std::string("\0\0\0\3{x}", 7);
    asio::write(s, asio::buffer(garbage));
  });
  SocketAdapter client(port);
  EXPECT_EQ(code_of([&] { client.echo("e", 1); }), Errc::AdapterProtocolError);
  EXPECT_EQ(code_of([&] { client.echo("e", 2); }), Errc::AdapterProtocolError);
  server.join();
}

TEST(AdapterServer, BindsLoopbackOnly) {
  SmcService svc(1);
  AdapterServer server(svc);
  namespace asio = boost::asio;
  asio::io_context io;
  asio::ip::tcp::socket s(io);
  s.connect({asio::ip::address_v4::loopback(), server.port()});
  EXPECT_TRUE(s.local_endpoint().address().is_loopback());
  EXPECT_TRUE(s.remote_endpoint().address().is_loopback());
}

// Direction only: a loopback round trip costs more than a function call.
TEST(AdapterLatency, SocketSlowerThanInProcessMedian) {
  auto inproc = AdapterStack::create(AdapterMode::InProcess, std::make_unique<SeededRandom>(1));
  auto sock = AdapterStack::create(AdapterMode::LoopbackSocket, std::make_unique<SeededRandom>(1));
  auto median_us = [](Adapter& a) {
    std::vector<double> xs;
    for (int i = 0; i < 1000; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      a.echo("lat", i);
      xs.push_back(std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(xs.begin(), xs.begin() + xs.size() / 2, xs.end());
    return xs[xs.size() / 2];
  };
  const double a = median_us(*inproc.adapter);
  const double b = median_us(*sock.adapter);
  EXPECT_GT(b, a) << "inproc " << a << " us, socket " << b << " us";
}

}  // namespace
}  // namespace smcgw

#include "smcgw/net/sim_network.hpp"

#include <gtest/gtest.h>

namespace smcgw::net {
namespace {

using namespace std::chrono_literals;

std::string frame_of(int i) {
  Message m;
  m.type = MessageType::Heartbeat;
  m.sender = "x";
  m.body = {{"i", i}};
  return encode_frame(m);
}

int index_of(const std::string& payload) { return decode_payload(payload).body["i"].get<int>(); }

// Server "s" accepts and records everything; each client connects and sends
// `count` frames.
struct Star {
  SimWorld world;
  std::map<std::string, std::vector<int>> received;
  std::vector<LinkPtr> server_links;
  std::map<std::string, LinkPtr> clients;
  int closes = 0;

  explicit Star(std::uint64_t seed, FaultPlan plan = {}) : world(seed, std::move(plan)) {
    auto& s = world.add_host("s");
    s.listen({"s", 9000}, [this](LinkPtr l) {
      server_links.push_back(l);
      const auto from = l->remote_host();
      l->start([this, from](std::string p) { received[from].push_back(index_of(p)); }, [this] { ++closes; });
    });
  }

  void add_client(const std::string& name) {
    connect_client(world.add_host(name), name);
  }
  void connect_client(SimHost& h, const std::string& name) {
    h.connect({"s", 9000}, 1s, [this, name](LinkPtr l, std::optional<Error> err) {
      ASSERT_FALSE(err) << err->what();
      clients[name] = l;
      l->start([](std::string) {}, [] {});
    });
  }
};

TEST(SimNetwork, EmptyPlanDeliversExactlyOnceInOrder) {
  Star net(1);
  for (int c = 0; c < 4; ++c) net.add_client("c" + std::to_string(c));
  net.world.run_until([&] { return net.clients.size() == 4; }, 1s);
  ASSERT_EQ(net.clients.size(), 4u);
  for (int i = 0; i < 200; ++i) {
    for (auto& [n, l] : net.clients) l->send(frame_of(i));
  }
  net.world.run_until_idle(10s);
  ASSERT_EQ(net.received.size(), 4u);
  for (auto& [n, v] : net.received) {
    ASSERT_EQ(v.size(), 200u) << n;
    for (int i = 0; i < 200; ++i) EXPECT_EQ(v[i], i);
  }
}

TEST(SimNetwork, UniformLatencyStaysFifo) {
  FaultPlan plan;
  plan.latency.kind = LatencySpec::Kind::Uniform;
  plan.latency.min_ms = 0.1;
  plan.latency.max_ms = 5.0;
  plan.reorder = true;
  Star net(3, plan);
  net.world.arm_faults();
  net.add_client("a");
  net.world.run_until([&] { return net.clients.size() == 1; }, 1s);
  for (int i = 0; i < 100; ++i) net.clients["a"]->send(frame_of(i));
  net.world.run_until_idle(10s);
  auto v = net.received["a"];
  ASSERT_EQ(v.size(), 100u);
  EXPECT_TRUE(std::is_sorted(v.begin(), v.end()));
}

TEST(SimNetwork, DropLinkSilencesOnlyThatLink) {
  FaultPlan plan;
  plan.drop_links.push_back({"s", "b", 50.0, std::nullopt});
  Star net(2, plan);
  net.add_client("a");
  net.add_client("b");
  net.world.run_until([&] { return net.clients.size() == 2; }, 1s);
  net.world.arm_faults();
  // One frame every 10 ms for 100 ms.
  for (int i = 0; i < 10; ++i) {
    net.world.host("a").after(std::chrono::milliseconds(10 * i), [&, i] { net.clients["a"]->send(frame_of(i)); });
    net.world.host("b").after(std::chrono::milliseconds(10 * i), [&, i] { net.clients["b"]->send(frame_of(i)); });
  }
  net.world.run_until_idle(1s);
  EXPECT_EQ(net.received["a"].size(), 10u);
  // Frames sent at 0..40 ms arrive before the 50 ms cut.
  EXPECT_EQ(net.received["b"], (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_EQ(net.closes, 0);
}

TEST(SimNetwork, SameSeedSameTranscript) {
  auto run = [](std::uint64_t seed) {
    FaultPlan plan;
    plan.latency.kind = LatencySpec::Kind::Uniform;
    plan.latency.min_ms = 0.1;
    plan.latency.max_ms = 3.0;
    plan.duplicate = true;
    Star net(seed, plan);
    net.world.record_transcript(true);
    net.world.arm_faults();
    for (int c = 0; c < 5; ++c) net.add_client("c" + std::to_string(c));
    net.world.run_until([&] { return net.clients.size() == 5; }, 1s);
    for (int i = 0; i < 30; ++i) {
      for (auto& [n, l] : net.clients) l->send(frame_of(i));
    }
    net.world.run_until_idle(10s);
    return net.world.transcript();
  };
  const auto a = run(42);
  const auto b = run(42);
  const auto c = run(43);
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(SimNetwork, KilledHostGoesSilentWithoutClose) {
  Star net(5);
  net.add_client("a");
  net.world.run_until([&] { return net.clients.size() == 1; }, 1s);
  int fired = 0;
  net.world.host("a").after(100ms, [&] { ++fired; });
  net.world.kill("a");
  net.clients["a"]->send(frame_of(1));
  net.world.run_until_idle(1s);
  EXPECT_EQ(fired, 0);
  EXPECT_TRUE(net.received["a"].empty());
  EXPECT_EQ(net.closes, 0);
  // Frames towards the dead host vanish.
  net.server_links[0]->send(frame_of(2));
  net.world.run_until_idle(1s);

  net.world.restart("a");
  net.clients.clear();
  net.connect_client(net.world.host("a"), "a");
  net.world.run_until([&] { return net.clients.size() == 1; }, 1s);
  net.clients["a"]->send(frame_of(7));
  net.world.run_until_idle(1s);
  EXPECT_EQ(net.received["a"], std::vector<int>{7});
}

TEST(SimNetwork, ResetClosesBothEnds) {
  Star net(6);
  net.add_client("a");
  int client_closed = 0;
  net.world.host("a").connect({"s", 9000}, 1s, [&](LinkPtr l, std::optional<Error>) {
    net.clients["a2"] = l;
    l->start([](std::string) {}, [&] { ++client_closed; });
  });
  net.world.run_until([&] { return net.clients.size() == 2; }, 1s);
  net.world.reset_link("s", "a");
  net.world.run_until_idle(1s);
  EXPECT_EQ(client_closed, 1);
  EXPECT_EQ(net.closes, 2);
}

TEST(SimNetwork, LocalCloseNotifiesRemoteOnly) {
  Star net(7);
  net.add_client("a");
  net.world.run_until([&] { return net.clients.size() == 1; }, 1s);
  net.clients["a"]->send(frame_of(1));
  net.clients["a"]->close();
  net.world.run_until_idle(1s);
  EXPECT_EQ(net.received["a"], std::vector<int>{1});
  EXPECT_EQ(net.closes, 1);
}

TEST(SimNetwork, ConnectFailures) {
  SimWorld world(1);
  auto& a = world.add_host("a");
  world.add_host("b");
  std::optional<Errc> no_listener, no_host, dead;
  Duration dead_at{};
  a.connect({"b", 1}, 2s, [&](LinkPtr l, std::optional<Error> e) {
    EXPECT_FALSE(l);
    no_listener = e->code();
  });
  a.connect({"zz", 1}, 2s, [&](LinkPtr, std::optional<Error> e) { no_host = e->code(); });
  world.run_until_idle(5s);
  world.kill("b");
  a.connect({"b", 1}, 2s, [&](LinkPtr, std::optional<Error> e) {
    dead = e->code();
    dead_at = world.now();
  });
  const auto t0 = world.now();
  world.run_until_idle(5s);
  EXPECT_EQ(no_listener, Errc::Refused);
  EXPECT_EQ(no_host, Errc::Refused);
  EXPECT_EQ(dead, Errc::Refused);
  EXPECT_GE(dead_at - t0, 2s);
}

TEST(SimNetwork, TimersAndCancel) {
  SimWorld world(1);
  auto& a = world.add_host("a");
  std::vector<int> order;
  a.after(30ms, [&] { order.push_back(3); });
  a.after(10ms, [&] { order.push_back(1); });
  auto h = a.after(20ms, [&] { order.push_back(2); });
  a.after(10ms, [&] { order.push_back(11); });
  EXPECT_TRUE(h.pending());
  h.cancel();
  world.run_until_idle(1s);
  EXPECT_EQ(order, (std::vector<int>{1, 11, 3}));
  EXPECT_FALSE(h.pending());
}

TEST(SimNetwork, GroupDatagramsReachEveryBoundHost) {
  SimWorld world(1);
  auto& g = world.add_host("g");
  std::map<std::string, int> heard;
  for (auto name : {"p1", "p2", "p3"}) {
    auto& h = world.add_host(name);
    if (std::string(name) != "p3") {
      h.open_datagram({"0.0.0.0", 47000}, [&heard, name](std::string p, Address from) {
        EXPECT_EQ(p, "hello");
        EXPECT_EQ(from.host, "g");
        ++heard[name];
      });
    }
  }
  g.send_datagram({"239.255.42.99", 47000}, "hello");
  g.send_datagram({"p1", 47000}, "hello");
  world.run_until_idle(1s);
  EXPECT_EQ(heard["p1"], 2);
  EXPECT_EQ(heard["p2"], 1);
  EXPECT_EQ(heard.count("p3"), 0u);
}

TEST(SimNetwork, EgressSerialisesFramesPerHost) {
  FaultPlan plan;
  plan.latency.fixed_ms = 1.0;
  plan.egress_ms_per_frame = 0.5;
  SimWorld world(1, plan);
  auto& a = world.add_host("a");
  auto& b = world.add_host("b");
  std::vector<Duration> arrivals;
  b.open_datagram({"b", 1}, [&](std::string, Address) { arrivals.push_back(world.now()); });
  for (int i = 0; i < 4; ++i) a.send_datagram({"b", 1}, "x");
  world.run_until_idle(1s);
  ASSERT_EQ(arrivals.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(arrivals[i], from_ms(1.0 + 0.5 * (i + 1)));
}

TEST(SimNetwork, RoundTriggeredKill) {
  FaultPlan plan;
  plan.kills.push_back({"a", std::nullopt, 1});
  SimWorld world(1, plan);
  auto& a = world.add_host("a");
  world.arm_faults();
  TraceEvent ev;
  ev.kind = TraceKind::RoundEntered;
  ev.host = "a";
  ev.round = 0;
  a.trace(ev);
  EXPECT_TRUE(a.alive());
  ev.round = 1;
  a.trace(ev);
  EXPECT_FALSE(a.alive());
}

TEST(FaultPlanJson, ParsesAndRoundTrips) {
  const auto j = nlohmann::json::parse(R"({
    "latency": {"kind": "uniform", "min_ms": 0.1, "max_ms": 0.4},
    "drop_link_at": [{"a": "gw", "b": "peer3", "at_ms": 250}],
    "kill_peer_at": {"peer": "peer2", "round": "distribute"},
    "reset_link_at": [{"link": ["gw", "peer1"], "round": 2}],
    "duplicate": true
  })");
  const auto plan = FaultPlan::from_json(j);
  EXPECT_EQ(plan.latency.kind, LatencySpec::Kind::Uniform);
  ASSERT_EQ(plan.drop_links.size(), 1u);
  EXPECT_EQ(plan.drop_links[0].b, "peer3");
  EXPECT_EQ(plan.drop_links[0].at_ms, 250.0);
  ASSERT_EQ(plan.kills.size(), 1u);
  EXPECT_EQ(plan.kills[0].round, 0);
  EXPECT_EQ(plan.reset_links[0].round, 2);
  EXPECT_TRUE(plan.duplicate);
  EXPECT_TRUE(plan.has_faults());
  const auto again = FaultPlan::from_json(plan.to_json());
  EXPECT_EQ(again.to_json(), plan.to_json());
  EXPECT_THROW(FaultPlan::from_json(nlohmann::json::parse(R"({"kill_peer_at":[{"peer":"x"}]})")), Error);
  EXPECT_THROW(FaultPlan::from_json(nlohmann::json::parse(R"({"kill_peer_at":[{"peer":"x","round":"r9"}]})")),
               Error);
}

}  // namespace
}  // namespace smcgw::net

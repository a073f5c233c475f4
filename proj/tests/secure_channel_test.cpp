#include "smcgw/secure_channel.hpp"

#include <gtest/gtest.h>

#include "smcgw/net/sim_network.hpp"

namespace smcgw {
namespace {

using namespace std::chrono_literals;
using net::SimWorld;

Identity make_identity(const std::string& name, std::uint64_t seed) {
  SeededRandom rng(seed);
  return Identity{name, KeyPair::from_random(rng)};
}

struct Outcome {
  SecureChannel::Ptr channel;
  std::optional<Error> error;
  bool done = false;
};

// Responder on host "b" port 7000 with the given options.
struct Pair {
  SimWorld world{9};
  net::SimHost& a = world.add_host("a");
  net::SimHost& b = world.add_host("b");
  Identity ida = make_identity("alice", 1);
  Identity idb = make_identity("bob", 2);
  Outcome client, server;
  net::ListenerPtr listener;

  void serve(HandshakeOptions opts) {
    listener = b.listen({"b", 7000}, [this, opts](net::LinkPtr link) {
      SecureChannel::respond(b, idb, link, opts, [this](SecureChannel::Ptr ch, std::optional<Error> err) {
        server = {ch, err, true};
      });
    });
  }
  void dial(HandshakeOptions opts) {
    SecureChannel::open(a, ida, {"b", 7000}, opts, [this](SecureChannel::Ptr ch, std::optional<Error> err) {
      client = {ch, err, true};
    });
  }
  void settle() { world.run_until([&] { return client.done && server.done; }, 20s); }
};

TEST(SecureChannel, PinnedBothSidesEstablishes) {
  Pair p;
  TrustStore a_store, b_store;
  a_store.pin("bob", p.idb.fingerprint(), p.idb.keys.public_key_hex(), 0);
  b_store.pin("alice", p.ida.fingerprint(), p.ida.keys.public_key_hex(), 0);
  HandshakeOptions so;
  so.verify = pinned_in(b_store);
  p.serve(so);
  HandshakeOptions co;
  co.expected_fingerprint = p.idb.fingerprint();
  co.verify = pinned_in(a_store);
  co.purpose = "data";
  co.session_id = "s1";
  co.extra = {{"index", 3}};
  p.dial(co);
  p.settle();
  ASSERT_TRUE(p.client.channel) << (p.client.error ? p.client.error->what() : "");
  ASSERT_TRUE(p.server.channel);
  EXPECT_EQ(p.client.channel->remote().fingerprint, p.idb.fingerprint());
  EXPECT_EQ(p.server.channel->remote().fingerprint, p.ida.fingerprint());
  EXPECT_EQ(p.server.channel->remote().purpose, "data");
  EXPECT_EQ(p.server.channel->remote().session_id, "s1");
  EXPECT_EQ(p.server.channel->remote().extra["index"], 3);

  std::vector<Message> got;
  p.server.channel->start([&](Message m) { got.push_back(m); }, [] {});
  p.client.channel->start([](Message) {}, [] {});
  for (int i = 0; i < 5; ++i) {
    p.client.channel->send(Message{MessageType::RoundMessage, "", std::string("s1"), {{"i", i}}, std::nullopt});
  }
  p.world.run_until_idle(1s);
  ASSERT_EQ(got.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(got[i].body["i"], i);
    EXPECT_EQ(got[i].sender, p.ida.fingerprint());
    EXPECT_EQ(got[i].seq, static_cast<std::uint64_t>(i + 1));
  }
}

TEST(SecureChannel, PinnedFingerprintMismatchAborts) {
  Pair p;
  p.serve({});
  HandshakeOptions co;
  co.expected_fingerprint = make_identity("bob", 99).fingerprint();  // an impostor's key is pinned
  p.dial(co);
  p.settle();
  ASSERT_TRUE(p.client.error);
  EXPECT_EQ(p.client.error->code(), Errc::FingerprintMismatch);
  ASSERT_TRUE(p.server.error);
  EXPECT_FALSE(p.client.channel);
}

TEST(SecureChannel, ResponderRejectsChangedKey) {
  Pair p;
  TrustStore b_store;
  const auto old = make_identity("alice", 50);
  b_store.pin("alice", old.fingerprint(), old.keys.public_key_hex(), 0);
  HandshakeOptions so;
  so.verify = pinned_in(b_store);
  p.serve(so);
  p.dial({});
  p.settle();
  ASSERT_TRUE(p.client.error);
  EXPECT_EQ(p.client.error->code(), Errc::FingerprintMismatch);
  EXPECT_EQ(p.server.error->code(), Errc::FingerprintMismatch);
}

TEST(SecureChannel, TofuPinsBothSidesThenPinnedWorks) {
  Pair p;
  TrustStore a_store, b_store;
  auto clock = [] { return std::int64_t{77}; };
  HandshakeOptions so;
  so.verify = trust_on_first_use(b_store, clock);
  p.serve(so);
  HandshakeOptions co;
  co.verify = trust_on_first_use(a_store, clock);
  p.dial(co);
  p.settle();
  ASSERT_TRUE(p.client.channel);
  EXPECT_EQ(a_store.fingerprint_for("bob"), p.idb.fingerprint());
  EXPECT_EQ(b_store.fingerprint_for("alice"), p.ida.fingerprint());
  EXPECT_EQ(b_store.find(p.ida.fingerprint())->first_seen_ms, 77);

  // Second contact with pinning only.
  p.listener->close();
  p.client = {};
  p.server = {};
  HandshakeOptions so2;
  so2.verify = pinned_in(b_store);
  p.serve(so2);
  HandshakeOptions co2;
  co2.expected_fingerprint = a_store.fingerprint_for("bob");
  co2.verify = pinned_in(a_store);
  p.dial(co2);
  p.settle();
  EXPECT_TRUE(p.client.channel);
  EXPECT_TRUE(p.server.channel);
}

TEST(SecureChannel, SilentRemoteTimesOut) {
  SimWorld world(1);
  auto& a = world.add_host("a");
  auto& b = world.add_host("b");
  std::vector<net::LinkPtr> held;
  auto l = b.listen({"b", 7000}, [&](net::LinkPtr link) {
    held.push_back(link);
    link->start([](std::string) {}, [] {});
  });
  std::optional<Error> err;
  const auto t0 = world.now();
  net::Duration failed_at{};
  SecureChannel::open(a, make_identity("a", 1), {"b", 7000}, {}, [&](SecureChannel::Ptr, std::optional<Error> e) {
    err = e;
    failed_at = world.now();
  });
  world.run_until([&] { return err.has_value(); }, 30s);
  ASSERT_TRUE(err);
  EXPECT_EQ(err->code(), Errc::HandshakeTimeout);
  EXPECT_GE(failed_at - t0, 5s);
  EXPECT_LT(failed_at - t0, 6s);
}

TEST(SecureChannel, NoListenerIsRefused) {
  SimWorld world(1);
  auto& a = world.add_host("a");
  world.add_host("b");
  std::optional<Error> err;
  SecureChannel::open(a, make_identity("a", 1), {"b", 7000}, {},
                      [&](SecureChannel::Ptr, std::optional<Error> e) { err = e; });
  world.run_until_idle(10s);
  ASSERT_TRUE(err);
  EXPECT_EQ(err->code(), Errc::Refused);
}

// Two independent channels between the same parties; a frame captured on
// one is replayed into the other, and into itself.
TEST(SecureChannel, ReplayAndCrossChannelFramesAreRejected) {
  Pair p;
  std::vector<SecureChannel::Ptr> servers;
  p.listener = p.b.listen({"b", 7000}, [&](net::LinkPtr link) {
    SecureChannel::respond(p.b, p.idb, link, {}, [&](SecureChannel::Ptr ch, std::optional<Error>) {
      servers.push_back(ch);
    });
  });
  std::vector<SecureChannel::Ptr> clients;
  for (int i = 0; i < 2; ++i) {
    SecureChannel::open(p.a, p.ida, {"b", 7000}, {}, [&](SecureChannel::Ptr ch, std::optional<Error>) {
      clients.push_back(ch);
    });
  }
  p.world.run_until([&] { return servers.size() == 2 && clients.size() == 2; }, 5s);
  ASSERT_EQ(servers.size(), 2u);
  ASSERT_EQ(clients.size(), 2u);
  // Match server ends to client ends by order of establishment.
  std::vector<int> got0, got1;
  servers[0]->start([&](Message m) { got0.push_back(m.body["v"].get<int>()); }, [] {});
  servers[1]->start([&](Message m) { got1.push_back(m.body["v"].get<int>()); }, [] {});

  std::string captured;
  clients[0]->set_wire_tap([&](const std::string& f) { captured = f; });
  clients[0]->send(Message{MessageType::RoundMessage, "", std::nullopt, {{"v", 41}}, std::nullopt});
  p.world.run_until_idle(1s);
  const auto total = got0.size() + got1.size();
  ASSERT_EQ(total, 1u);
  auto& receiving = got0.size() == 1 ? servers[0] : servers[1];
  auto& other = got0.size() == 1 ? servers[1] : servers[0];

  receiving->inject_frame(captured);  // same-channel replay
  other->inject_frame(captured);      // cross-channel replay
  p.world.run_until_idle(1s);
  EXPECT_EQ(got0.size() + got1.size(), 1u);
  EXPECT_EQ(receiving->rejected_frames(), 1u);
  EXPECT_EQ(other->rejected_frames(), 1u);

  // A tampered ciphertext is rejected as well.
  auto msg = decode_frame(captured);
  msg.seq = 100;
  other->inject_frame(encode_frame(msg));
  EXPECT_EQ(other->rejected_frames(), 2u);
  EXPECT_TRUE(other->is_open());
}

TEST(SecureChannel, WireCarriesNoPlaintextButTraceDoes) {
  Pair p;
  p.serve({});
  p.dial({});
  p.settle();
  ASSERT_TRUE(p.client.channel);
  std::string wire;
  p.client.channel->set_wire_tap([&](const std::string& f) { wire += f; });
  std::vector<net::TraceEvent> traced;
  p.a.set_tracer([&](const net::TraceEvent& e) { traced.push_back(e); });
  p.client.channel->send(Message{MessageType::RoundMessage, "", std::nullopt, {{"secret", "987654321987"}}, {}});
  EXPECT_EQ(wire.find("987654321987"), std::string::npos);
  ASSERT_EQ(traced.size(), 1u);
  EXPECT_EQ(traced[0].message->body["secret"], "987654321987");
}

TEST(SecureChannel, CloseReachesRemote) {
  Pair p;
  p.serve({});
  p.dial({});
  p.settle();
  bool closed = false;
  p.server.channel->start([](Message) {}, [&] { closed = true; });
  p.client.channel->close();
  p.world.run_until_idle(1s);
  EXPECT_TRUE(closed);
  EXPECT_FALSE(p.server.channel->is_open());
}

}  // namespace
}  // namespace smcgw

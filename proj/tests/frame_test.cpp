#include "smcgw/frame.hpp"

#include <gtest/gtest.h>

#include <random>

#include "smcgw/error.hpp"

namespace smcgw {
namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::ConfigError;
}

Message heartbeat() {
  Message m;
  m.type = MessageType::Heartbeat;
  m.sender = "ab12";
  m.body = {{"n", 1}};
  return m;
}

std::string random_text(std::mt19937_64& rng, std::size_t len) {
  std::string s(len, ' ');
  std::uniform_int_distribution<int> ch(0x20, 0x7e);
  for (auto& c : s) c = static_cast<char>(ch(rng));
  return s;
}

TEST(Frame, TypeNamesAreSnakeCase) {
  EXPECT_EQ(to_string(MessageType::SessionPrepare), "session_prepare");
  EXPECT_EQ(to_string(MessageType::RoundMessage), "round_message");
  EXPECT_EQ(to_string(MessageType::PairRequest), "pair_request");
  EXPECT_EQ(to_string(MessageType::ClientResponse), "client_response");
  for (int i = 0; i <= static_cast<int>(MessageType::Error); ++i) {
    const auto t = static_cast<MessageType>(i);
    EXPECT_EQ(message_type_from_string(to_string(t)), t);
  }
  EXPECT_FALSE(message_type_from_string("SessionPrepare"));
}

TEST(Frame, HeaderIsBigEndianPayloadLength) {
  const auto frame = encode_frame(heartbeat());
  const std::string payload = frame.substr(4);
  const std::size_t n = payload.size();
  ASSERT_LT(n, 256u);
  EXPECT_EQ(static_cast<unsigned char>(frame[0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(frame[1]), 0);
  EXPECT_EQ(static_cast<unsigned char>(frame[2]), 0);
  EXPECT_EQ(static_cast<unsigned char>(frame[3]), n);
  const auto j = nlohmann::json::parse(payload);
  EXPECT_EQ(j["type"], "heartbeat");
  EXPECT_TRUE(j["session_id"].is_null());
  EXPECT_EQ(j["sender"], "ab12");
}

TEST(Frame, MultiByteLength) {
  Message m = heartbeat();
  m.body = {{"pad", std::string(70000, 'x')}};
  const auto frame = encode_frame(m);
  const std::uint32_t n = frame.size() - 4;
  EXPECT_EQ(static_cast<unsigned char>(frame[1]), (n >> 16) & 0xff);
  EXPECT_EQ(static_cast<unsigned char>(frame[2]), (n >> 8) & 0xff);
  EXPECT_EQ(static_cast<unsigned char>(frame[3]), n & 0xff);
  EXPECT_EQ(decode_frame(frame), m);
}

TEST(Frame, RoundTripRandomMessages) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 300; ++i) {
    Message m;
    m.type = static_cast<MessageType>(rng() % 12);
    m.sender = random_text(rng, rng() % 70);
    if (rng() % 2) m.session_id = random_text(rng, rng() % 20);
    if (rng() % 3 == 0) m.seq = rng();
    const std::size_t len = (i % 50 == 0) ? (rng() % 900000) : (rng() % 2000);
    m.body = {{"data", random_text(rng, len)}, {"k", static_cast<std::int64_t>(rng() % 1000)}};
    const auto frame = encode_frame(m);
    EXPECT_EQ(decode_frame(frame), m);
    // Byte-level idempotence: encode(decode(b)) == b.
    EXPECT_EQ(encode_frame(decode_frame(frame)), frame);
  }
}

TEST(Frame, PartialReadsNeverYieldFrame) {
  std::mt19937_64 rng(11);
  std::string stream;
  std::vector<Message> sent;
  for (int i = 0; i < 40; ++i) {
    Message m = heartbeat();
    m.body = {{"i", i}, {"s", random_text(rng, rng() % 300)}};
    sent.push_back(m);
    stream += encode_frame(m);
  }
  FrameReader reader;
  std::vector<Message> got;
  std::size_t pos = 0;
  std::size_t complete_bytes = 0;
  while (pos < stream.size()) {
    const std::size_t chunk = std::min<std::size_t>(1 + rng() % 37, stream.size() - pos);
    reader.feed(std::string_view(stream).substr(pos, chunk));
    pos += chunk;
    while (auto p = reader.next()) {
      got.push_back(decode_payload(*p));
      complete_bytes += 4 + p->size();
      // Every yielded frame must lie entirely within bytes already fed.
      ASSERT_LE(complete_bytes, pos);
    }
  }
  EXPECT_EQ(got, sent);
  EXPECT_EQ(reader.buffered(), 0u);
}

TEST(Frame, IncompleteFrameIsRejectedByDecode) {
  const auto frame = encode_frame(heartbeat());
  for (std::size_t cut = 0; cut < frame.size(); ++cut) {
    EXPECT_THROW(decode_frame(std::string_view(frame).substr(0, cut)), Error);
    FrameReader r;
    r.feed(std::string_view(frame).substr(0, cut));
    EXPECT_FALSE(r.next());
  }
}

TEST(Frame, TwoMebibytePayloadIsTooLarge) {
  Message m = heartbeat();
  m.body = {{"blob", std::string(2u << 20, 'a')}};
  EXPECT_EQ(code_of([&] { encode_frame(m); }), Errc::FrameTooLarge);

  std::string header = {'\x00', '\x20', '\x00', '\x00'};  // 2 MiB
  EXPECT_EQ(code_of([&] { decode_frame(header + std::string(16, 'x')); }), Errc::FrameTooLarge);
  FrameReader r;
  r.feed(header);
  EXPECT_EQ(code_of([&] { r.next(); }), Errc::FrameTooLarge);
}

TEST(Frame, ExactlyOneMebibyteIsAccepted) {
  const std::string body = "\"" + std::string((1u << 20) - 2, 'z') + "\"";
  ASSERT_EQ(body.size(), kMaxFramePayload);
  const auto j = decode_json_frame(encode_json_frame(nlohmann::json::parse(body)));
  EXPECT_EQ(j.get<std::string>().size(), (1u << 20) - 2);
}

TEST(Frame, MalformedAndUnknown) {
  auto wrap = [](const std::string& s) {
    std::string f(4, '\0');
    f[3] = static_cast<char>(s.size());
    f[2] = static_cast<char>(s.size() >> 8);
    return f + s;
  };
  EXPECT_EQ(code_of([&] { decode_frame(wrap("{not json")); }), Errc::MalformedJson);
  EXPECT_EQ(code_of([&] { decode_frame(wrap("[1,2]")); }), Errc::MalformedJson);
  EXPECT_EQ(code_of([&] { decode_frame(wrap(R"({"type":"heartbeat","sender":"a","body":{}})")); }),
            Errc::MalformedJson);
  EXPECT_EQ(code_of([&] { decode_frame(wrap(R"({"type":"gossip","sender":"a","session_id":null,"body":{}})")); }),
            Errc::UnknownType);
  EXPECT_EQ(code_of([&] { decode_frame(wrap(R"({"type":"heartbeat","sender":"a","session_id":5,"body":{}})")); }),
            Errc::MalformedJson);
  // Length header disagreeing with the buffer.
  auto f = encode_frame(heartbeat());
  EXPECT_EQ(code_of([&] { decode_frame(f + "x"); }), Errc::MalformedJson);
}

}  // namespace
}  // namespace smcgw

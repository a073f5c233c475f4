#include "smcgw/frame.hpp"

#include <array>
#include <utility>

#include "smcgw/error.hpp"

namespace smcgw {
namespace {

constexpr std::pair<MessageType, std::string_view> kTypeNames[] = {
    {MessageType::Announce, "announce"},
    {MessageType::PairRequest, "pair_request"},
    {MessageType::PairAccept, "pair_accept"},
    {MessageType::Hello, "hello"},
    {MessageType::Heartbeat, "heartbeat"},
    {MessageType::SessionPrepare, "session_prepare"},
    {MessageType::RoundMessage, "round_message"},
    {MessageType::SessionResult, "session_result"},
    {MessageType::SessionAbort, "session_abort"},
    {MessageType::ClientRequest, "client_request"},
    {MessageType::ClientResponse, "client_response"},
    {MessageType::Error, "error"},
};

std::string with_header(std::string payload) {
  if (payload.size() > kMaxFramePayload) {
    throw Error(Errc::FrameTooLarge, std::to_string(payload.size()) + " bytes");
  }
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(kFrameHeaderBytes + payload.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out += payload;
  return out;
}

std::string_view strip_header(std::string_view frame) {
  if (frame.size() < kFrameHeaderBytes) throw Error(Errc::MalformedJson, "truncated frame header");
  const auto n = read_frame_length(frame);
  if (n > kMaxFramePayload) throw Error(Errc::FrameTooLarge, std::to_string(n) + " bytes");
  if (frame.size() - kFrameHeaderBytes != n) {
    throw Error(Errc::MalformedJson, "frame length " + std::to_string(n) + " does not match " +
                                         std::to_string(frame.size() - kFrameHeaderBytes) + " bytes");
  }
  return frame.substr(kFrameHeaderBytes);
}

}  // namespace

std::string_view to_string(MessageType type) {
  for (const auto& [t, name] : kTypeNames) {
    if (t == type) return name;
  }
  return "error";
}

std::optional<MessageType> message_type_from_string(std::string_view name) {
  for (const auto& [t, n] : kTypeNames) {
    if (n == name) return t;
  }
  return std::nullopt;
}

std::uint32_t read_frame_length(std::string_view header) {
  const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(header[i])); };
  return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

nlohmann::json message_to_json(const Message& msg) {
  nlohmann::json j{
      {"type", to_string(msg.type)},
      {"sender", msg.sender},
      {"session_id", msg.session_id ? nlohmann::json(*msg.session_id) : nlohmann::json(nullptr)},
      {"body", msg.body},
  };
  if (msg.seq) j["seq"] = *msg.seq;
  return j;
}

Message message_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::MalformedJson, "payload is not a JSON object");
  for (const char* field : {"type", "sender", "session_id", "body"}) {
    if (!j.contains(field)) throw Error(Errc::MalformedJson, std::string("missing field ") + field);
  }
  if (!j["type"].is_string() || !j["sender"].is_string()) {
    throw Error(Errc::MalformedJson, "type and sender must be strings");
  }
  const auto type = message_type_from_string(j["type"].get_ref<const std::string&>());
  if (!type) throw Error(Errc::UnknownType, j["type"].get<std::string>());

  Message msg;
  msg.type = *type;
  msg.sender = j["sender"].get<std::string>();
  const auto& sid = j["session_id"];
  if (sid.is_string()) {
    msg.session_id = sid.get<std::string>();
  } else if (!sid.is_null()) {
    throw Error(Errc::MalformedJson, "session_id must be a string or null");
  }
  msg.body = j["body"];
  if (j.contains("seq")) {
    if (!j["seq"].is_number_unsigned()) throw Error(Errc::MalformedJson, "seq must be unsigned");
    msg.seq = j["seq"].get<std::uint64_t>();
  }
  return msg;
}

nlohmann::json parse_payload(std::string_view payload) {
  auto j = nlohmann::json::parse(payload.begin(), payload.end(), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::MalformedJson, "payload is not valid JSON");
  return j;
}

std::string encode_json_frame(const nlohmann::json& payload) { return with_header(payload.dump()); }

nlohmann::json decode_json_frame(std::string_view frame) { return parse_payload(strip_header(frame)); }

std::string encode_payload(const Message& msg) {
  auto text = message_to_json(msg).dump();
  if (text.size() > kMaxFramePayload) throw Error(Errc::FrameTooLarge, std::to_string(text.size()) + " bytes");
  return text;
}

Message decode_payload(std::string_view payload) {
  if (payload.size() > kMaxFramePayload) throw Error(Errc::FrameTooLarge, std::to_string(payload.size()) + " bytes");
  return message_from_json(parse_payload(payload));
}

std::string encode_frame(const Message& msg) { return with_header(encode_payload(msg)); }

Message decode_frame(std::string_view frame) { return decode_payload(strip_header(frame)); }

void FrameReader::feed(std::string_view bytes) {
  if (offset_ > 0 && offset_ == buffer_.size()) {
    buffer_.clear();
    offset_ = 0;
  }
  buffer_.append(bytes.data(), bytes.size());
}

std::optional<std::string> FrameReader::next() {
  const std::size_t available = buffer_.size() - offset_;
  if (available < kFrameHeaderBytes) return std::nullopt;
  const auto n = read_frame_length(std::string_view(buffer_).substr(offset_, kFrameHeaderBytes));
  if (n > kMaxFramePayload) throw Error(Errc::FrameTooLarge, std::to_string(n) + " bytes announced");
  if (available < kFrameHeaderBytes + n) return std::nullopt;
  std::string payload = buffer_.substr(offset_ + kFrameHeaderBytes, n);
  offset_ += kFrameHeaderBytes + n;
  if (offset_ > 65536 && offset_ * 2 > buffer_.size()) {
    buffer_.erase(0, offset_);
    offset_ = 0;
  }
  return payload;
}

}  // namespace smcgw

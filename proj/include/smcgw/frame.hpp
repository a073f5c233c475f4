#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace smcgw {

/// Frames are a 4-byte big-endian length followed by that many bytes of
/// UTF-8 JSON.
inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::size_t kMaxFramePayload = 1u << 20;

enum class MessageType {
  Announce,
  PairRequest,
  PairAccept,
  Hello,
  Heartbeat,
  SessionPrepare,
  RoundMessage,
  SessionResult,
  SessionAbort,
  ClientRequest,
  ClientResponse,
  Error,
};

std::string_view to_string(MessageType type);
std::optional<MessageType> message_type_from_string(std::string_view name);

/// Envelope carried by every frame. `seq` is present only on frames sealed
/// by a secure channel.
struct Message {
  MessageType type = MessageType::Error;
  std::string sender;
  std::optional<std::string> session_id;
  nlohmann::json body = nlohmann::json::object();
  std::optional<std::uint64_t> seq;

  friend bool operator==(const Message&, const Message&) = default;
};

nlohmann::json message_to_json(const Message& msg);
Message message_from_json(const nlohmann::json& j);

/// Raw JSON framing, used directly by the adapter protocol.
std::string encode_json_frame(const nlohmann::json& payload);
nlohmann::json decode_json_frame(std::string_view frame);
nlohmann::json parse_payload(std::string_view payload);

std::string encode_frame(const Message& msg);
Message decode_frame(std::string_view frame);

/// Payload bytes (without the length prefix) of a message.
std::string encode_payload(const Message& msg);
Message decode_payload(std::string_view payload);

/// Incremental reassembly of frames from a byte stream. Only complete
/// frames are ever returned.
class FrameReader {
 public:
  void feed(std::string_view bytes);
  /// Next complete payload, if any. Throws FrameTooLarge as soon as a header
  /// announces an oversized payload.
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  std::string buffer_;
  std::size_t offset_ = 0;
};

std::uint32_t read_frame_length(std::string_view header);

}  // namespace smcgw

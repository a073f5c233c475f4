#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace smcgw {

enum class Errc {
  // field / sharing
  InvalidThreshold,
  InsufficientShares,
  DuplicateIndex,
  InvalidShareIndex,
  IndexMismatch,
  // planning / engine
  GroupTooSmall,
  UnsupportedOperation,
  InvalidPlan,
  OutOfOrderMessage,
  UnknownSender,
  DuplicateMessage,
  UnexpectedMessage,
  RoundTimeout,
  // channels / adapter
  ChannelEstablishmentFailed,
  AdapterUnreachable,
  AdapterProtocolError,
  // framing / transport
  FrameTooLarge,
  MalformedJson,
  UnknownType,
  MalformedMessage,
  FingerprintMismatch,
  HandshakeTimeout,
  Refused,
  ChannelClosed,
  IntegrityFailure,
  SocketUnavailable,
  // discovery / pairing
  NoCandidates,
  ManualTargetAbsent,
  MetadataRejected,
  UnknownParticipant,
  // peer daemon
  IllegalTransition,
  CapabilityMissing,
  InputOutOfRange,
  // gateway
  UnknownGroup,
  SessionFailed,
  PrepareTimeout,
  SessionAborted,
  // harness / config
  ScenarioSetupFailed,
  RequestTimeout,
  ConfigError,
};

std::string_view to_string(Errc code);
std::optional<Errc> errc_from_string(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace smcgw

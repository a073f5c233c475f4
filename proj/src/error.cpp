#include "smcgw/error.hpp"

#include <utility>

namespace smcgw {
namespace {

constexpr std::pair<Errc, std::string_view> kNames[] = {
    {Errc::InvalidThreshold, "InvalidThreshold"},
    {Errc::InsufficientShares, "InsufficientShares"},
    {Errc::DuplicateIndex, "DuplicateIndex"},
    {Errc::InvalidShareIndex, "InvalidShareIndex"},
    {Errc::IndexMismatch, "IndexMismatch"},
    {Errc::GroupTooSmall, "GroupTooSmall"},
    {Errc::UnsupportedOperation, "UnsupportedOperation"},
    {Errc::InvalidPlan, "InvalidPlan"},
    {Errc::OutOfOrderMessage, "OutOfOrderMessage"},
    {Errc::UnknownSender, "UnknownSender"},
    {Errc::DuplicateMessage, "DuplicateMessage"},
    {Errc::UnexpectedMessage, "UnexpectedMessage"},
    {Errc::RoundTimeout, "RoundTimeout"},
    {Errc::ChannelEstablishmentFailed, "ChannelEstablishmentFailed"},
    {Errc::AdapterUnreachable, "AdapterUnreachable"},
    {Errc::AdapterProtocolError, "AdapterProtocolError"},
    {Errc::FrameTooLarge, "FrameTooLarge"},
    {Errc::MalformedJson, "MalformedJson"},
    {Errc::UnknownType, "UnknownType"},
    {Errc::MalformedMessage, "MalformedMessage"},
    {Errc::FingerprintMismatch, "FingerprintMismatch"},
    {Errc::HandshakeTimeout, "HandshakeTimeout"},
    {Errc::Refused, "Refused"},
    {Errc::ChannelClosed, "ChannelClosed"},
    {Errc::IntegrityFailure, "IntegrityFailure"},
    {Errc::SocketUnavailable, "SocketUnavailable"},
    {Errc::NoCandidates, "NoCandidates"},
    {Errc::ManualTargetAbsent, "ManualTargetAbsent"},
    {Errc::MetadataRejected, "MetadataRejected"},
    {Errc::UnknownParticipant, "UnknownParticipant"},
    {Errc::IllegalTransition, "IllegalTransition"},
    {Errc::CapabilityMissing, "CapabilityMissing"},
    {Errc::InputOutOfRange, "InputOutOfRange"},
    {Errc::UnknownGroup, "UnknownGroup"},
    {Errc::SessionFailed, "SessionFailed"},
    {Errc::PrepareTimeout, "PrepareTimeout"},
    {Errc::SessionAborted, "SessionAborted"},
    {Errc::ScenarioSetupFailed, "ScenarioSetupFailed"},
    {Errc::RequestTimeout, "RequestTimeout"},
    {Errc::ConfigError, "ConfigError"},
};

}  // namespace

std::string_view to_string(Errc code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

std::optional<Errc> errc_from_string(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace smcgw

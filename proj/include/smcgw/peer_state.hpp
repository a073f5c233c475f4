#pragma once

#include <array>
#include <string>
#include <string_view>
#include <variant>

namespace smcgw {

enum class PeerState { Discovery, Pairing, Connecting, Operation };
inline constexpr std::array<PeerState, 4> kAllPeerStates = {PeerState::Discovery, PeerState::Pairing,
                                                            PeerState::Connecting, PeerState::Operation};
std::string_view to_string(PeerState s);

enum class PeerEventKind { GatewayFound, PairOk, PairFail, ChannelUp, ChannelLost, HeartbeatAckMissed };
inline constexpr std::array<PeerEventKind, 6> kAllPeerEvents = {
    PeerEventKind::GatewayFound, PeerEventKind::PairOk,      PeerEventKind::PairFail,
    PeerEventKind::ChannelUp,    PeerEventKind::ChannelLost, PeerEventKind::HeartbeatAckMissed};
std::string_view to_string(PeerEventKind e);

struct PeerEvent {
  PeerEventKind kind;
  /// PairFail only: the gateway should be avoided on the next selection.
  bool permanent = false;
};

/// The lifecycle table. Throws IllegalTransition for pairs without an arc.
PeerState advance(PeerState state, PeerEvent event);

}  // namespace smcgw

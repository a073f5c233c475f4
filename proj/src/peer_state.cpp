#include "smcgw/peer_state.hpp"

#include "smcgw/error.hpp"

namespace smcgw {

std::string_view to_string(PeerState s) {
  switch (s) {
    case PeerState::Discovery:
      return "discovery";
    case PeerState::Pairing:
      return "pairing";
    case PeerState::Connecting:
      return "connecting";
    case PeerState::Operation:
      return "operation";
  }
  return "?";
}

std::string_view to_string(PeerEventKind e) {
  switch (e) {
    case PeerEventKind::GatewayFound:
      return "gateway_found";
    case PeerEventKind::PairOk:
      return "pair_ok";
    case PeerEventKind::PairFail:
      return "pair_fail";
    case PeerEventKind::ChannelUp:
      return "channel_up";
    case PeerEventKind::ChannelLost:
      return "channel_lost";
    case PeerEventKind::HeartbeatAckMissed:
      return "heartbeat_ack_missed";
  }
  return "?";
}

PeerState advance(PeerState state, PeerEvent event) {
  using S = PeerState;
  using E = PeerEventKind;
  switch (event.kind) {
    case E::GatewayFound:
      if (state == S::Discovery) return S::Pairing;
      break;
    case E::PairOk:
      if (state == S::Pairing) return S::Connecting;
      break;
    case E::PairFail:
      if (state == S::Pairing || state == S::Connecting) return S::Discovery;
      break;
    case E::ChannelUp:
      if (state == S::Connecting) return S::Operation;
      break;
    case E::ChannelLost:
      // Any connection drop cleans up and starts over.
      return S::Discovery;
    case E::HeartbeatAckMissed:
      if (state == S::Operation) return S::Discovery;
      break;
  }
  throw Error(Errc::IllegalTransition,
              std::string(to_string(event.kind)) + " is not defined in state " + std::string(to_string(state)));
}

}  // namespace smcgw

#pragma once

#include <array>
#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/field.hpp"
#include "smcgw/net/host.hpp"

namespace smcgw {

enum class RoundKind { Distribute = 0, AggregateLocal = 1, Reveal = 2, Done = 3 };

std::string_view to_string(RoundKind r);
RoundKind round_from_string(std::string_view s);

enum class Operation { Sum, Average };

std::string_view to_string(Operation op);
/// Throws UnsupportedOperation.
Operation operation_from_string(std::string_view s);

inline constexpr std::size_t kDefaultMinContributors = 3;

struct Participant {
  std::string fingerprint;
  std::string name;
  /// Where the participant accepts protocol channels.
  net::Address endpoint;
  std::uint64_t index = 0;
  bool contributes = true;

  friend bool operator==(const Participant&, const Participant&) = default;
};

struct SessionDescriptor {
  std::string session_id;
  std::string group;
  Operation operation = Operation::Sum;
  std::string data_type;
  /// Contributing peers; the gateway is listed separately.
  std::vector<Participant> peers;
  Participant gateway;
  std::optional<std::size_t> threshold;
  std::chrono::milliseconds channel_wait{0};
  std::size_t min_contributors = kDefaultMinContributors;
  int attempt = 1;
  int retry_budget = 3;
};

/// Resolved session: who takes part, with which share index, at which
/// threshold, through which rounds.
struct RoundPlan {
  std::string session_id;
  std::array<RoundKind, 3> rounds = {RoundKind::Distribute, RoundKind::AggregateLocal, RoundKind::Reveal};
  /// Ordered by share index (1..n).
  std::vector<Participant> participants;
  std::size_t threshold = 1;
  std::chrono::milliseconds channel_wait{0};
  /// Fingerprint of the reveal collector.
  std::string collector;
  Operation operation = Operation::Sum;
  std::string data_type;

  std::size_t n() const { return participants.size(); }
  std::size_t contributors() const;
  const Participant* find(const std::string& fingerprint) const;
  const Participant& at(const std::string& fingerprint) const;

  friend bool operator==(const RoundPlan&, const RoundPlan&) = default;
};

/// Indices by ascending fingerprint, t = floor((n-1)/2) unless overridden.
/// Throws GroupTooSmall, InvalidThreshold, InvalidPlan.
RoundPlan plan_session(const SessionDescriptor& descriptor);

nlohmann::json plan_to_json(const RoundPlan& plan);
RoundPlan plan_from_json(const nlohmann::json& j);

struct ChannelsReady {};
struct LocalInput {
  FieldElement value;
};
struct RoundInput {
  std::string from;
  RoundKind round = RoundKind::Distribute;
  Share share;
};
using EngineEvent = std::variant<ChannelsReady, LocalInput, RoundInput>;

nlohmann::json event_to_json(const EngineEvent& ev);
EngineEvent event_from_json(const nlohmann::json& j);

struct Outbound {
  std::string to;
  RoundKind round = RoundKind::Distribute;
  Share share;

  friend bool operator==(const Outbound&, const Outbound&) = default;
};

nlohmann::json outbound_to_json(const Outbound& o);
Outbound outbound_from_json(const nlohmann::json& j);

/// Per-participant protocol state. Treated as a value: step() returns a new
/// state and never mutates its argument.
struct EngineState {
  RoundPlan plan;
  std::string self;
  RoundKind current = RoundKind::Distribute;
  bool channels_ready = false;
  std::optional<FieldElement> my_input;
  bool distributed = false;
  /// Shares received per communicating round, keyed by sender.
  std::map<std::string, Share> distribute_shares;
  std::map<std::string, Share> reveal_shares;
  std::optional<Share> local_sum_share;
  std::optional<FieldElement> result;

  const Participant& me() const { return plan.at(self); }
  bool is_collector() const { return self == plan.collector; }
  bool finished() const { return current == RoundKind::Done; }
};

EngineState initial_state(RoundPlan plan, std::string self);

struct StepResult {
  EngineState state;
  std::vector<Outbound> outbound;
  std::optional<FieldElement> result;
  /// Rounds entered during this step, in order.
  std::vector<RoundKind> entered;
};

/// Pure transition. Randomness is drawn only when distributing the input.
/// Throws OutOfOrderMessage, UnknownSender, DuplicateMessage,
/// UnexpectedMessage, IndexMismatch.
StepResult step(const EngineState& state, const EngineEvent& event, RandomSource& rng);

/// Wire body of a round_message.
nlohmann::json round_body(const Outbound& o);
RoundInput round_input_from(const std::string& sender, const nlohmann::json& body);

}  // namespace smcgw

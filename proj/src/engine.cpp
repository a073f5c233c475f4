#include "smcgw/engine.hpp"

#include <algorithm>
#include <set>

namespace smcgw {
namespace {

constexpr std::pair<RoundKind, std::string_view> kRoundNames[] = {
    {RoundKind::Distribute, "distribute"},
    {RoundKind::AggregateLocal, "aggregate_local"},
    {RoundKind::Reveal, "reveal"},
    {RoundKind::Done, "done"},
};

// Position among rounds that carry messages; used for the buffering rule.
int comm_position(RoundKind r) {
  switch (r) {
    case RoundKind::Distribute:
      return 0;
    case RoundKind::AggregateLocal:
    case RoundKind::Reveal:
      return 1;
    case RoundKind::Done:
      return 2;
  }
  return 2;
}

FieldElement parse_decimal(const nlohmann::json& j) {
  if (!j.is_string()) throw Error(Errc::MalformedMessage, "field value must be a decimal string");
  const auto s = j.get<std::string>();
  if (s.empty() || s.size() > 20 || !std::all_of(s.begin(), s.end(), ::isdigit)) {
    throw Error(Errc::MalformedMessage, "bad decimal '" + s + "'");
  }
  const auto v = std::stoull(s);
  if (v >= kMersenne61) throw Error(Errc::MalformedMessage, "field value out of range");
  return FieldElement(v);
}

// Moves past rounds whose barrier is met, collecting side effects.
void advance(StepResult& r) {
  auto& s = r.state;
  for (;;) {
    if (s.current == RoundKind::Distribute) {
      const bool own_done = !s.me().contributes || s.distributed;
      if (!own_done || s.distribute_shares.size() < s.plan.contributors()) return;
      s.current = RoundKind::AggregateLocal;
      r.entered.push_back(RoundKind::AggregateLocal);
    } else if (s.current == RoundKind::AggregateLocal) {
      FieldElement sum;
      for (const auto& [from, share] : s.distribute_shares) sum += share.value;
      s.local_sum_share = Share{s.me().index, sum};
      s.current = RoundKind::Reveal;
      r.entered.push_back(RoundKind::Reveal);
      r.outbound.push_back(Outbound{s.plan.collector, RoundKind::Reveal, *s.local_sum_share});
    } else if (s.current == RoundKind::Reveal) {
      if (!s.is_collector()) {
        s.current = RoundKind::Done;
        return;
      }
      if (s.reveal_shares.size() < s.plan.threshold + 1) return;
      std::vector<Share> shares;
      for (const auto& [from, share] : s.reveal_shares) shares.push_back(share);
      std::sort(shares.begin(), shares.end(), [](const Share& a, const Share& b) { return a.index < b.index; });
      s.result = reconstruct(shares, s.plan.threshold);
      r.result = s.result;
      s.current = RoundKind::Done;
      r.entered.push_back(RoundKind::Done);
      return;
    } else {
      return;
    }
  }
}

void distribute(StepResult& r, RandomSource& rng) {
  auto& s = r.state;
  if (s.distributed || !s.channels_ready || !s.my_input || !s.me().contributes) return;
  const auto shares = share_secret(*s.my_input, s.plan.n(), s.plan.threshold, rng);
  // share_secret evaluates at 1..n, matching plan indices.
  for (const auto& p : s.plan.participants) {
    r.outbound.push_back(Outbound{p.fingerprint, RoundKind::Distribute, shares[p.index - 1]});
  }
  s.distributed = true;
}

}  // namespace

std::string_view to_string(RoundKind r) {
  for (const auto& [k, n] : kRoundNames) {
    if (k == r) return n;
  }
  return "done";
}

RoundKind round_from_string(std::string_view s) {
  for (const auto& [k, n] : kRoundNames) {
    if (n == s) return k;
  }
  throw Error(Errc::MalformedMessage, "unknown round '" + std::string(s) + "'");
}

std::string_view to_string(Operation op) { return op == Operation::Sum ? "sum" : "average"; }

Operation operation_from_string(std::string_view s) {
  if (s == "sum") return Operation::Sum;
  if (s == "average") return Operation::Average;
  throw Error(Errc::UnsupportedOperation, "operation '" + std::string(s) + "' is not supported");
}

std::size_t RoundPlan::contributors() const {
  return static_cast<std::size_t>(
      std::count_if(participants.begin(), participants.end(), [](const Participant& p) { return p.contributes; }));
}

const Participant* RoundPlan::find(const std::string& fingerprint) const {
  for (const auto& p : participants) {
    if (p.fingerprint == fingerprint) return &p;
  }
  return nullptr;
}

const Participant& RoundPlan::at(const std::string& fingerprint) const {
  const auto* p = find(fingerprint);
  if (!p) throw Error(Errc::UnknownSender, fingerprint.substr(0, 16) + " is not in session " + session_id);
  return *p;
}

RoundPlan plan_session(const SessionDescriptor& d) {
  if (d.peers.size() < std::max<std::size_t>(d.min_contributors, 1)) {
    throw Error(Errc::GroupTooSmall, std::to_string(d.peers.size()) + " contributing peers, at least " +
                                         std::to_string(d.min_contributors) + " required");
  }
  RoundPlan plan;
  plan.session_id = d.session_id;
  plan.channel_wait = d.channel_wait;
  plan.collector = d.gateway.fingerprint;
  plan.operation = d.operation;
  plan.data_type = d.data_type;
  std::set<std::string> seen;
  for (auto p : d.peers) {
    p.contributes = true;
    plan.participants.push_back(p);
  }
  auto gw = d.gateway;
  gw.contributes = false;
  plan.participants.push_back(gw);
  for (const auto& p : plan.participants) {
    if (p.fingerprint.empty() || !seen.insert(p.fingerprint).second) {
      throw Error(Errc::InvalidPlan, "duplicate or empty participant fingerprint");
    }
  }
  std::sort(plan.participants.begin(), plan.participants.end(),
            [](const Participant& a, const Participant& b) { return a.fingerprint < b.fingerprint; });
  for (std::size_t i = 0; i < plan.participants.size(); ++i) plan.participants[i].index = i + 1;
  const std::size_t n = plan.participants.size();
  plan.threshold = d.threshold.value_or((n - 1) / 2);
  if (plan.threshold < 1 || plan.threshold >= n) {
    throw Error(Errc::InvalidThreshold, "threshold " + std::to_string(plan.threshold) + " for n=" + std::to_string(n));
  }
  return plan;
}

nlohmann::json plan_to_json(const RoundPlan& plan) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : plan.participants) {
    parts.push_back({{"fingerprint", p.fingerprint},
                     {"name", p.name},
                     {"endpoint", p.endpoint.to_string()},
                     {"index", p.index},
                     {"contributes", p.contributes}});
  }
  nlohmann::json rounds = nlohmann::json::array();
  for (auto r : plan.rounds) rounds.push_back(to_string(r));
  return {{"session_id", plan.session_id}, {"rounds", rounds},
          {"participants", parts},         {"threshold", plan.threshold},
          {"channel_wait_ms", plan.channel_wait.count()}, {"collector", plan.collector},
          {"operation", to_string(plan.operation)},        {"data_type", plan.data_type}};
}

RoundPlan plan_from_json(const nlohmann::json& j) {
  try {
    RoundPlan plan;
    plan.session_id = j.at("session_id").get<std::string>();
    const auto& rounds = j.at("rounds");
    if (rounds.size() != 3) throw Error(Errc::InvalidPlan, "plan must have exactly three rounds");
    for (std::size_t i = 0; i < 3; ++i) {
      plan.rounds[i] = round_from_string(rounds[i].get<std::string>());
      if (plan.rounds[i] != static_cast<RoundKind>(i)) throw Error(Errc::InvalidPlan, "rounds out of order");
    }
    for (const auto& p : j.at("participants")) {
      plan.participants.push_back(Participant{p.at("fingerprint").get<std::string>(), p.value("name", ""),
                                              net::Address::parse(p.at("endpoint").get<std::string>()),
                                              p.at("index").get<std::uint64_t>(), p.value("contributes", true)});
    }
    plan.threshold = j.at("threshold").get<std::size_t>();
    plan.channel_wait = std::chrono::milliseconds(j.value("channel_wait_ms", 0));
    plan.collector = j.at("collector").get<std::string>();
    plan.operation = operation_from_string(j.value("operation", "sum"));
    plan.data_type = j.value("data_type", "");
    const std::size_t n = plan.participants.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (plan.participants[i].index != i + 1) throw Error(Errc::InvalidPlan, "indices must be 1..n in order");
    }
    if (plan.threshold < 1 || plan.threshold >= n) throw Error(Errc::InvalidPlan, "threshold out of range");
    if (!plan.find(plan.collector)) throw Error(Errc::InvalidPlan, "collector is not a participant");
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidPlan, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::InvalidPlan) throw;
    throw Error(Errc::InvalidPlan, e.what());
  }
}

nlohmann::json event_to_json(const EngineEvent& ev) {
  return std::visit(
      [](const auto& e) -> nlohmann::json {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ChannelsReady>) {
          return {{"kind", "channels_ready"}};
        } else if constexpr (std::is_same_v<T, LocalInput>) {
          return {{"kind", "local_input"}, {"value", std::to_string(e.value.value())}};
        } else {
          return {{"kind", "round_message"},
                  {"from", e.from},
                  {"round", to_string(e.round)},
                  {"share", share_to_json(e.share)}};
        }
      },
      ev);
}

EngineEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw Error(Errc::MalformedMessage, "event needs a kind");
  const auto kind = j["kind"].get<std::string>();
  if (kind == "channels_ready") return ChannelsReady{};
  if (kind == "local_input") return LocalInput{parse_decimal(j.at("value"))};
  if (kind == "round_message") {
    return RoundInput{j.at("from").get<std::string>(), round_from_string(j.at("round").get<std::string>()),
                      share_from_json(j.at("share"))};
  }
  throw Error(Errc::MalformedMessage, "unknown event kind '" + kind + "'");
}

nlohmann::json outbound_to_json(const Outbound& o) {
  return {{"to", o.to}, {"round", to_string(o.round)}, {"share", share_to_json(o.share)}};
}

Outbound outbound_from_json(const nlohmann::json& j) {
  return Outbound{j.at("to").get<std::string>(), round_from_string(j.at("round").get<std::string>()),
                  share_from_json(j.at("share"))};
}

nlohmann::json round_body(const Outbound& o) {
  return {{"round", to_string(o.round)}, {"share", share_to_json(o.share)}};
}

RoundInput round_input_from(const std::string& sender, const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("round") || !body.contains("share")) {
    throw Error(Errc::MalformedMessage, "round_message needs round and share");
  }
  return RoundInput{sender, round_from_string(body["round"].get<std::string>()), share_from_json(body["share"])};
}

EngineState initial_state(RoundPlan plan, std::string self) {
  EngineState s;
  s.plan = std::move(plan);
  s.self = std::move(self);
  s.plan.at(s.self);  // must be a participant
  return s;
}

StepResult step(const EngineState& state, const EngineEvent& event, RandomSource& rng) {
  StepResult r{state, {}, std::nullopt, {}};
  auto& s = r.state;
  if (s.finished()) {
    if (std::holds_alternative<RoundInput>(event)) {
      const auto& in = std::get<RoundInput>(event);
      s.plan.at(in.from);
      const auto& seen = in.round == RoundKind::Distribute ? s.distribute_shares : s.reveal_shares;
      if (seen.count(in.from)) throw Error(Errc::DuplicateMessage, "session already finished");
    }
    return r;
  }

  if (std::holds_alternative<ChannelsReady>(event)) {
    s.channels_ready = true;
    distribute(r, rng);
  } else if (const auto* in = std::get_if<LocalInput>(&event)) {
    if (!s.me().contributes) throw Error(Errc::UnexpectedMessage, "the collector takes no input");
    if (s.my_input) throw Error(Errc::DuplicateMessage, "input already provided");
    s.my_input = in->value;
    distribute(r, rng);
  } else {
    const auto& msg = std::get<RoundInput>(event);
    const auto& sender = s.plan.at(msg.from);
    if (msg.round == RoundKind::AggregateLocal || msg.round == RoundKind::Done) {
      throw Error(Errc::UnexpectedMessage, "no messages belong to round " + std::string(to_string(msg.round)));
    }
    const int ahead = comm_position(msg.round) - comm_position(s.current);
    if (ahead > 1) {
      throw Error(Errc::OutOfOrderMessage, std::string(to_string(msg.round)) + " message while in " +
                                               std::string(to_string(s.current)));
    }
    if (msg.round == RoundKind::Distribute) {
      if (!sender.contributes) throw Error(Errc::UnexpectedMessage, "collector sent an input share");
      if (msg.share.index != s.me().index) throw Error(Errc::IndexMismatch, "share addressed to another index");
      if (!s.distribute_shares.emplace(msg.from, msg.share).second) {
        throw Error(Errc::DuplicateMessage, "second distribute share from " + sender.name);
      }
    } else {
      if (!s.is_collector()) throw Error(Errc::UnexpectedMessage, "reveal share sent to a non-collector");
      // A contributor distributes before it reveals and channels are FIFO, so
      // its reveal can never overtake its own input share.
      if (sender.contributes && !s.distribute_shares.count(msg.from)) {
        throw Error(Errc::OutOfOrderMessage, "reveal from " + sender.name + " before its distribute share");
      }
      if (msg.share.index != sender.index) throw Error(Errc::IndexMismatch, "reveal share index differs from sender");
      if (!s.reveal_shares.emplace(msg.from, msg.share).second) {
        throw Error(Errc::DuplicateMessage, "second reveal share from " + sender.name);
      }
    }
  }
  advance(r);
  return r;
}

}  // namespace smcgw

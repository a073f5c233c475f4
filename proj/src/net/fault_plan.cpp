#include "smcgw/net/fault_plan.hpp"

#include "smcgw/error.hpp"

namespace smcgw::net {
namespace {

constexpr const char* kRoundNames[] = {"distribute", "aggregate_local", "reveal"};

template <class T>
std::vector<nlohmann::json> as_list(const nlohmann::json& j, const char* key) {
  std::vector<nlohmann::json> out;
  if (!j.contains(key) || j[key].is_null()) return out;
  if (j[key].is_array()) {
    for (const auto& e : j[key]) out.push_back(e);
  } else {
    out.push_back(j[key]);
  }
  return out;
}

void read_trigger(const nlohmann::json& e, std::optional<double>& at_ms, std::optional<int>& round) {
  if (e.contains("at_ms")) at_ms = e["at_ms"].get<double>();
  if (e.contains("round")) round = parse_round(e["round"]);
  if (!at_ms && !round) throw Error(Errc::ConfigError, "fault needs at_ms or round: " + e.dump());
}

LinkFault read_link(const nlohmann::json& e) {
  LinkFault f;
  if (e.contains("link")) {
    f.a = e["link"].at(0).get<std::string>();
    f.b = e["link"].at(1).get<std::string>();
  } else {
    f.a = e.at("a").get<std::string>();
    f.b = e.at("b").get<std::string>();
  }
  read_trigger(e, f.at_ms, f.round);
  return f;
}

nlohmann::json write_trigger(std::optional<double> at_ms, std::optional<int> round) {
  nlohmann::json j = nlohmann::json::object();
  if (at_ms) j["at_ms"] = *at_ms;
  if (round) j["round"] = kRoundNames[*round];
  return j;
}

}  // namespace

int parse_round(const nlohmann::json& j) {
  if (j.is_number_integer()) {
    const int r = j.get<int>();
    if (r >= 0 && r <= 2) return r;
  } else if (j.is_string()) {
    const auto s = j.get<std::string>();
    for (int i = 0; i < 3; ++i) {
      if (s == kRoundNames[i]) return i;
    }
  }
  throw Error(Errc::ConfigError, "unknown round " + j.dump());
}

nlohmann::json FaultPlan::to_json() const {
  nlohmann::json j;
  if (latency.kind == LatencySpec::Kind::Fixed) {
    j["latency"] = {{"kind", "fixed"}, {"ms", latency.fixed_ms}};
  } else {
    j["latency"] = {{"kind", "uniform"}, {"min_ms", latency.min_ms}, {"max_ms", latency.max_ms}};
  }
  j["egress_ms_per_frame"] = egress_ms_per_frame;
  auto links = [](const std::vector<LinkFault>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : v) {
      auto e = write_trigger(f.at_ms, f.round);
      e["a"] = f.a;
      e["b"] = f.b;
      arr.push_back(e);
    }
    return arr;
  };
  j["drop_link_at"] = links(drop_links);
  j["reset_link_at"] = links(reset_links);
  j["kill_peer_at"] = nlohmann::json::array();
  for (const auto& k : kills) {
    auto e = write_trigger(k.at_ms, k.round);
    e["peer"] = k.peer;
    j["kill_peer_at"].push_back(e);
  }
  j["duplicate"] = duplicate;
  j["duplicate_probability"] = duplicate_probability;
  j["reorder"] = reorder;
  j["reorder_jitter_ms"] = reorder_jitter_ms;
  return j;
}

FaultPlan FaultPlan::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "fault plan must be a JSON object");
  FaultPlan plan;
  try {
    if (j.contains("latency")) {
      const auto& l = j["latency"];
      if (l.is_number()) {
        plan.latency.fixed_ms = l.get<double>();
      } else if (l.value("kind", "fixed") == "uniform") {
        plan.latency.kind = LatencySpec::Kind::Uniform;
        plan.latency.min_ms = l.at("min_ms").get<double>();
        plan.latency.max_ms = l.at("max_ms").get<double>();
        if (plan.latency.max_ms < plan.latency.min_ms) throw Error(Errc::ConfigError, "latency max < min");
      } else {
        plan.latency.fixed_ms = l.value("ms", 0.2);
      }
    }
    plan.egress_ms_per_frame = j.value("egress_ms_per_frame", plan.egress_ms_per_frame);
    for (const auto& e : as_list<LinkFault>(j, "drop_link_at")) plan.drop_links.push_back(read_link(e));
    for (const auto& e : as_list<LinkFault>(j, "reset_link_at")) plan.reset_links.push_back(read_link(e));
    for (const auto& e : as_list<KillFault>(j, "kill_peer_at")) {
      KillFault k;
      k.peer = e.at("peer").get<std::string>();
      read_trigger(e, k.at_ms, k.round);
      plan.kills.push_back(k);
    }
    plan.duplicate = j.value("duplicate", false);
    plan.duplicate_probability = j.value("duplicate_probability", plan.duplicate_probability);
    plan.reorder = j.value("reorder", false);
    plan.reorder_jitter_ms = j.value("reorder_jitter_ms", plan.reorder_jitter_ms);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("fault plan: ") + e.what());
  }
  return plan;
}

}  // namespace smcgw::net

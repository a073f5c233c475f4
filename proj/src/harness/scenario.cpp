#include "smcgw/harness/scenario.hpp"

#include <set>

#include "smcgw/field.hpp"
#include "smcgw/harness/process.hpp"

namespace smcgw::harness {

std::unique_ptr<Cluster> make_cluster(Transport transport, ClusterSpec spec) {
  if (transport == Transport::Tcp) return std::make_unique<ProcessCluster>(std::move(spec));
  return std::make_unique<SimCluster>(std::move(spec));
}

ClusterSpec cluster_spec(const Scenario& s, std::size_t peers) {
  ClusterSpec c;
  c.peers = peers;
  c.adapter = s.adapter;
  c.channel_wait = s.channel_wait;
  c.seed = s.seed;
  if (s.faults) c.faults = *s.faults;
  return c;
}

std::uint64_t oracle_sum(const ClusterSpec& spec, const std::vector<std::string>& participants,
                         const std::string& session_id) {
  unsigned __int128 total = 0;
  for (const auto& name : participants) {
    if (name.rfind("peer", 0) != 0) throw Error(Errc::ScenarioSetupFailed, "unexpected participant " + name);
    const auto index = std::stoul(name.substr(4)) - 1;
    total += expected_input(spec, index, session_id);
  }
  return static_cast<std::uint64_t>(total % kMersenne61);
}

namespace {

void check_ordering(const std::vector<PeerTiming>& peers, nlohmann::json& failures, std::size_t n, std::size_t rep) {
  for (const auto& p : peers) {
    if (p.flex_ms < 0 || p.adapter_ms < 0 || p.flex_ms + p.adapter_ms > p.total_ms + 1e-6) {
      failures.push_back({{"n", n}, {"repetition", rep}, {"reason", "timing ordering violated"}, {"peer", p.peer}});
    }
  }
}

template <class Body>
TimingReport run_each(const Scenario& s, const Progress& progress, Body body) {
  TimingReport report;
  report.scenario = s;
  for (const auto n : s.peers) {
    auto spec = cluster_spec(s, n);
    auto cluster = make_cluster(s.transport, spec);
    cluster->wait_operational();
    cluster->arm_faults();
    for (std::size_t rep = 0; rep < s.repetitions; ++rep) {
      body(*cluster, spec, n, rep, report);
      if (progress) progress(n, rep);
    }
  }
  return report;
}

}  // namespace

TimingReport run_echo_benchmark(const Scenario& s, const Progress& progress) {
  return run_each(s, progress, [&](Cluster& c, const ClusterSpec&, std::size_t n, std::size_t rep, TimingReport& r) {
    const auto resp = c.request(
        {{"operation", "echo"}, {"count", s.echo_count}, {"via_adapter", s.echo_via_adapter}, {"payload", "ping"}});
    if (!resp.value("ok", false) || !resp.value("incomplete", nlohmann::json::array()).empty()) {
      r.failures.push_back({{"n", n}, {"repetition", rep}, {"response", resp}});
      return;
    }
    auto peers = timing_from_json(resp.at("timing"));
    nlohmann::json bad = nlohmann::json::array();
    check_ordering(peers, bad, n, rep);
    for (auto& b : bad) r.failures.push_back(std::move(b));
    r.add(n, rep, std::move(peers));
  });
}

TimingReport run_sum_benchmark(const Scenario& s, const Progress& progress) {
  return run_each(s, progress, [&](Cluster& c, const ClusterSpec& spec, std::size_t n, std::size_t rep,
                                   TimingReport& r) {
    const auto resp = c.sum();
    if (!resp.value("ok", false)) {
      r.failures.push_back({{"n", n}, {"repetition", rep}, {"response", resp}});
      return;
    }
    const auto participants = resp.at("participants").get<std::vector<std::string>>();
    const auto want = oracle_sum(spec, participants, resp.at("session_id").get<std::string>());
    const auto got = resp.at("result").get<std::uint64_t>();
    if (got != want) {
      r.failures.push_back({{"n", n}, {"repetition", rep}, {"reason", "wrong sum"}, {"result", got}, {"oracle", want}});
      return;
    }
    auto peers = timing_from_json(resp.at("timing"));
    nlohmann::json bad = nlohmann::json::array();
    check_ordering(peers, bad, n, rep);
    for (auto& b : bad) r.failures.push_back(std::move(b));
    r.add(n, rep, std::move(peers));
  });
}

std::vector<ChaosCase> chaos_suite() {
  std::vector<ChaosCase> out;
  const std::vector<std::pair<std::string, int>> rounds = {
      {"distribute", 0}, {"aggregate_local", 1}, {"reveal", 2}};
  for (const auto& [name, round] : rounds) {
    ChaosCase c;
    c.name = "kill-1-of-5-at-" + name;
    c.faults.kills.push_back({"peer3", std::nullopt, round});
    out.push_back(c);
  }
  {
    ChaosCase c;
    c.name = "drop-control-link";
    c.faults.drop_links.push_back({"gw", "peer4", std::nullopt, 0});
    out.push_back(c);
  }
  {
    ChaosCase c;
    c.name = "reset-gateway-link";
    c.faults.reset_links.push_back({"gw", "peer2", std::nullopt, 1});
    out.push_back(c);
  }
  {
    ChaosCase c;
    c.name = "kill-2-of-5";
    for (const auto* p : {"peer1", "peer5"}) c.faults.kills.push_back({p, std::nullopt, 0});
    out.push_back(c);
  }
  {
    ChaosCase c;
    c.name = "kill-3-of-5";
    for (const auto* p : {"peer1", "peer2", "peer3"}) c.faults.kills.push_back({p, std::nullopt, 0});
    out.push_back(c);
  }
  return out;
}

std::size_t permanent_losses(const ChaosCase& c) {
  std::set<std::string> lost;
  for (const auto& k : c.faults.kills) lost.insert(k.peer);
  for (const auto& d : c.faults.drop_links) {
    if (d.a == "gw") lost.insert(d.b);
    if (d.b == "gw") lost.insert(d.a);
  }
  return lost.size();
}

ChaosOutcome run_chaos(const ChaosCase& c, std::uint64_t seed) {
  ClusterSpec spec;
  spec.peers = c.peers;
  spec.seed = seed;
  spec.faults = c.faults;
  GatewayConfig defaults;

  ChaosOutcome o;
  o.name = c.name;
  o.peers = c.peers;
  SimCluster cluster(spec);
  cluster.wait_operational();
  cluster.arm_faults();
  const auto resp = cluster.sum();

  o.ok = resp.value("ok", false);
  o.attempts = resp.value("attempts", 0);
  o.failures = resp.value("failures", nlohmann::json::array());
  const bool survivable = c.peers - permanent_losses(c) >= defaults.min_group;
  if (o.ok) {
    o.participants = resp.at("participants").get<std::vector<std::string>>();
    o.result = resp.at("result").get<std::uint64_t>();
    o.expected = oracle_sum(spec, o.participants, resp.at("session_id").get<std::string>());
    o.verdict = survivable && o.attempts <= defaults.retry_budget && *o.result == *o.expected;
  } else {
    o.error_code = resp.at("error").at("code").get<std::string>();
    bool group_too_small = false;
    for (const auto& f : o.failures) group_too_small |= f.value("code", "") == "GroupTooSmall";
    o.verdict = !survivable && o.error_code == "SessionFailed" &&
                (o.attempts == defaults.retry_budget || group_too_small);
  }
  return o;
}

}  // namespace smcgw::harness

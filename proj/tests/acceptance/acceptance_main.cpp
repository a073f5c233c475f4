// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed here.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "smcgw/adapter.hpp"
#include "smcgw/field.hpp"
#include "smcgw/frame.hpp"
#include "smcgw/harness/process.hpp"
#include "smcgw/harness/scenario.hpp"
#include "smcgw/harness/stats.hpp"
#include "smcgw/peer_state.hpp"
#include "smcgw/secure_channel.hpp"

using namespace smcgw;
using namespace smcgw::harness;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

// Criterion 1
constexpr std::size_t kOracleSessions = 1000;
constexpr double kOracleSecondsLimit = 120;
// Criterion 3
constexpr std::size_t kOffsetReps = 100;
constexpr double kOffsetN3Lo = 1000, kOffsetN3Hi = 1200;
constexpr double kOffsetN11Lo = 1000, kOffsetN11Hi = 1350;
// Criterion 4
constexpr std::size_t kAdapterReps = 100;
constexpr std::size_t kAdapterPeers = 5;
constexpr double kSignTestAlpha = 0.01;
// Criterion 5
constexpr std::size_t kScalingReps = 100;
constexpr double kMinRSquared = 0.8;
// Criterion 7
constexpr std::int64_t kUnlistedLimitMs = 4500;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// 1. Oracle equivalence on the simulated backend.
Verdict oracle_equivalence() {
  const auto began = Clock::now();
  const std::vector<std::size_t> sizes = {4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::size_t done = 0, exact = 0;
  std::string first_bad;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const std::size_t sessions = kOracleSessions / sizes.size() + (k < kOracleSessions % sizes.size() ? 1 : 0);
    ClusterSpec spec;
    spec.peers = sizes[k];
    spec.seed = 1000 + k;
    SimCluster c(spec);
    c.wait_operational();
    for (std::size_t i = 0; i < sessions; ++i) {
      const auto r = c.sum();
      ++done;
      if (!r.value("ok", false)) {
        if (first_bad.empty()) first_bad = r.dump();
        continue;
      }
      // Plain integer sum of the readings every peer will fetch.
      unsigned __int128 want = 0;
      bool in_range = true;
      for (std::size_t p = 0; p < spec.peers; ++p) {
        const auto x = expected_input(spec, p, r.at("session_id").get<std::string>());
        in_range &= x < (1ULL << 32);
        want += x;
      }
      const bool ok = in_range && r.at("count").get<std::size_t>() == spec.peers &&
                      static_cast<unsigned __int128>(r.at("result").get<std::uint64_t>()) == want;
      if (ok) {
        ++exact;
      } else if (first_bad.empty()) {
        first_bad = r.dump();
      }
    }
  }
  const double secs = seconds_since(began);
  Verdict v;
  v.pass = done == kOracleSessions && exact == done && secs < kOracleSecondsLimit;
  v.detail = fmt("%zu/%zu sums exact, n in 4..12, %.1f s (limit %.0f s)", exact, done, secs, kOracleSecondsLimit);
  if (!first_bad.empty()) v.detail += "; first mismatch " + first_bad.substr(0, 200);
  return v;
}

// 2. Reconstruction from every (t+1)-subset, and perfect hiding over GF(101).
Verdict secret_sharing() {
  SeededRandom rng(2024);
  std::size_t checks = 0, wrong = 0;
  for (std::size_t n = 3; n <= 12; ++n) {
    for (std::size_t t = 1; t < n; ++t) {
      // All subsets of size t+1, as index masks.
      std::vector<std::uint32_t> subsets;
      for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcount(mask)) == t + 1) subsets.push_back(mask);
      }
      for (int s = 0; s < 100; ++s) {
        const auto secret = uniform_element<FieldElement>(rng);
        const auto shares = share_secret(secret, n, t, rng);
        for (const auto mask : subsets) {
          std::vector<Share> pick;
          for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) pick.push_back(shares[i]);
          }
          ++checks;
          wrong += reconstruct(pick, t) != secret;
        }
      }
    }
  }

  // Every degree-t polynomial over GF(101): for each secret, the shares at
  // 1..t take every value tuple exactly once.
  using F = PrimeField<101>;
  bool hiding = true;
  for (std::size_t t = 1; t <= 2; ++t) {
    for (std::uint64_t s = 0; s < 101 && hiding; ++s) {
      std::map<std::vector<std::uint64_t>, int> seen;
      std::vector<F> coeff(t + 1);
      coeff[0] = F(s);
      const std::uint64_t total = t == 1 ? 101 : 101 * 101;
      for (std::uint64_t code = 0; code < total; ++code) {
        coeff[1] = F(code % 101);
        if (t == 2) coeff[2] = F(code / 101);
        std::vector<std::uint64_t> tuple;
        for (std::uint64_t x = 1; x <= t; ++x) tuple.push_back(evaluate_polynomial<F>(coeff, F(x)).value());
        ++seen[tuple];
      }
      hiding &= seen.size() == total;
      for (const auto& [tuple, count] : seen) hiding &= count == 1;
    }
  }
  return {wrong == 0 && hiding,
          fmt("%zu reconstructions, %zu wrong; hiding over GF(101) for t=1,2: %s", checks, wrong,
              hiding ? "uniform" : "BIASED")};
}

double median_total(const TimingReport& r, std::size_t n) {
  for (const auto& [k, m] : r.scaling()) {
    if (k == n) return m;
  }
  return -1;
}

// 3. Channel-wait offset over loopback TCP.
Verdict channel_wait_offset() {
  Scenario s;
  s.kind = "sum";
  s.peers = {3, 11};
  s.repetitions = kOffsetReps;
  s.transport = Transport::Tcp;
  s.channel_wait = 1000ms;
  s.seed = 3;
  const auto r = run_sum_benchmark(s);
  const double m3 = median_total(r, 3), m11 = median_total(r, 11);
  Verdict v;
  v.pass = r.failures.empty() && m3 >= kOffsetN3Lo && m3 <= kOffsetN3Hi && m11 >= kOffsetN11Lo &&
           m11 <= kOffsetN11Hi && m11 >= m3;
  v.detail = fmt("median max T_total n=3 %.1f ms [%.0f, %.0f], n=11 %.1f ms [%.0f, %.0f], %zu reps each, %zu failed",
                 m3, kOffsetN3Lo, kOffsetN3Hi, m11, kOffsetN11Lo, kOffsetN11Hi, kOffsetReps, r.failures.size());
  return v;
}

// 4. Socket adapter slower than in-process, paired by repetition.
Verdict adapter_overhead() {
  auto spec_for = [](AdapterMode m) {
    ClusterSpec s;
    s.peers = kAdapterPeers;
    s.adapter = m;
    s.seed = 4;
    return s;
  };
  ProcessCluster inproc(spec_for(AdapterMode::InProcess));
  ProcessCluster socket(spec_for(AdapterMode::LoopbackSocket));
  inproc.wait_operational();
  socket.wait_operational();
  const nlohmann::json echo = {{"operation", "echo"}, {"count", 10}, {"via_adapter", true}, {"payload", "ping"}};
  auto batch_ms = [&](ProcessCluster& c) {
    const auto r = c.request(echo);
    if (!r.value("ok", false)) throw Error(Errc::ScenarioSetupFailed, "echo batch failed: " + r.dump());
    return r.at("timing").at("max").at("t_total_ms").get<double>();
  };
  std::vector<double> a, b;
  for (std::size_t i = 0; i < kAdapterReps; ++i) {
    // Alternate which mode goes first so drift does not favour either.
    if (i % 2 == 0) {
      a.push_back(batch_ms(socket));
      b.push_back(batch_ms(inproc));
    } else {
      b.push_back(batch_ms(inproc));
      a.push_back(batch_ms(socket));
    }
  }
  const auto t = sign_test(a, b);
  const double diff = median(a) - median(b);
  Verdict v;
  v.pass = t.p_value < kSignTestAlpha && diff > 0;
  v.detail = fmt("socket slower in %zu/%zu pairs, sign test p=%.3g (< %.2f), median batch %.3f vs %.3f ms",
                 t.positive, a.size(), t.p_value, kSignTestAlpha, median(a), median(b));
  return v;
}

// 5. Linear growth with n on the simulated backend.
Verdict linear_scaling() {
  Scenario s;
  s.kind = "sum";
  s.peers = {3, 4, 5, 6, 7, 8, 9, 10, 11};
  s.repetitions = kScalingReps;
  s.seed = 5;
  const auto r = run_sum_benchmark(s);
  std::vector<double> xs, ys;
  for (const auto& [n, m] : r.scaling()) {
    xs.push_back(static_cast<double>(n));
    ys.push_back(m);
  }
  const auto fit = fit_line(xs, ys);
  return {r.failures.empty() && fit.slope > 0 && fit.r_squared >= kMinRSquared,
          fmt("slope %.4f ms/peer, R^2 %.4f (>= %.1f), %zu failed", fit.slope, fit.r_squared, kMinRSquared,
              r.failures.size())};
}

// 6. Chaos suite: verdicts hold and repeat exactly.
Verdict chaos_suite_holds() {
  std::size_t cases = 0, good = 0, repeatable = 0;
  std::string bad;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const auto& c : chaos_suite()) {
      const auto first = run_chaos(c, seed);
      const auto again = run_chaos(c, seed);
      ++cases;
      good += first.verdict;
      repeatable += first.to_json() == again.to_json();
      if (!first.verdict && bad.empty()) bad = first.to_json().dump();
    }
  }
  Verdict v;
  v.pass = good == cases && repeatable == cases;
  v.detail = fmt("%zu/%zu cases as predicted, %zu/%zu identical on rerun, seeds 1-3", good, cases, repeatable, cases);
  if (!bad.empty()) v.detail += "; " + bad.substr(0, 200);
  return v;
}

std::optional<std::int64_t> time_to_unlisted(ProcessCluster& c, const std::string& name) {
  const auto from = Clock::now();
  while (Clock::now() - from < 10s) {
    if (c.liveness().at(name) == "unlisted") {
      return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - from).count();
    }
    std::this_thread::sleep_for(20ms);
  }
  return std::nullopt;
}

// 7. Failure detection and rejoin across processes.
Verdict failure_detection() {
  ClusterSpec spec;
  spec.peers = 4;
  spec.seed = 7;
  ProcessCluster c(spec);
  c.wait_operational();

  c.kill_peer(0);
  const auto killed = time_to_unlisted(c, "peer1");
  c.freeze_peer(1);
  const auto frozen = time_to_unlisted(c, "peer2");

  c.restart_peer(0);
  c.restart_peer(1);
  bool rejoined = true;
  try {
    c.wait_operational(20s);
  } catch (const Error&) {
    rejoined = false;
  }
  bool sum_ok = false;
  if (rejoined) {
    const auto r = c.sum();
    sum_ok = r.value("ok", false) && r.at("count").get<std::size_t>() == 4 &&
             r.at("result").get<std::uint64_t>() ==
                 oracle_sum(spec, r.at("participants").get<std::vector<std::string>>(),
                            r.at("session_id").get<std::string>());
  }
  Verdict v;
  v.pass = killed && *killed <= kUnlistedLimitMs && frozen && *frozen <= kUnlistedLimitMs && rejoined && sum_ok;
  v.detail = fmt("killed peer unlisted after %lld ms, silent peer after %lld ms (limit %lld), rejoin %s, sum %s",
                 static_cast<long long>(killed.value_or(-1)), static_cast<long long>(frozen.value_or(-1)),
                 static_cast<long long>(kUnlistedLimitMs), rejoined ? "yes" : "no", sum_ok ? "correct" : "wrong");
  return v;
}

// 8a. Lifecycle arcs, written out independently of advance().
std::optional<PeerState> expected_arc(PeerState s, PeerEventKind e) {
  using S = PeerState;
  using E = PeerEventKind;
  static const std::map<std::pair<S, E>, S> arcs = {
      {{S::Discovery, E::GatewayFound}, S::Pairing},   {{S::Pairing, E::PairOk}, S::Connecting},
      {{S::Pairing, E::PairFail}, S::Discovery},       {{S::Connecting, E::PairFail}, S::Discovery},
      {{S::Connecting, E::ChannelUp}, S::Operation},   {{S::Operation, E::HeartbeatAckMissed}, S::Discovery},
      {{S::Discovery, E::ChannelLost}, S::Discovery},  {{S::Pairing, E::ChannelLost}, S::Discovery},
      {{S::Connecting, E::ChannelLost}, S::Discovery}, {{S::Operation, E::ChannelLost}, S::Discovery},
  };
  auto it = arcs.find({s, e});
  if (it == arcs.end()) return std::nullopt;
  return it->second;
}

Verdict soundness() {
  std::size_t cells = 0, agree = 0;
  for (auto s : kAllPeerStates) {
    for (auto e : kAllPeerEvents) {
      for (bool permanent : {false, true}) {
        ++cells;
        const auto want = expected_arc(s, e);
        try {
          const auto got = advance(s, {e, permanent});
          agree += want && got == *want;
        } catch (const Error& err) {
          agree += !want && err.code() == Errc::IllegalTransition;
        }
      }
    }
  }

  bool echo_ok = true;
  for (auto mode : {AdapterMode::InProcess, AdapterMode::LoopbackSocket}) {
    auto stack = AdapterStack::create(mode, std::make_unique<SeededRandom>(8));
    for (const nlohmann::json& p : {nlohmann::json(nullptr), nlohmann::json("text"),
                                    nlohmann::json{{"nested", {1, 2, 3}}}, nlohmann::json(std::string(5000, 'x'))}) {
      echo_ok &= stack.adapter->echo("acceptance", p) == p;
    }
  }
  {
    ClusterSpec spec;
    spec.peers = 3;
    SimCluster c(spec);
    c.wait_operational();
    const auto r = c.request({{"operation", "echo"}, {"count", 10}, {"via_adapter", true}, {"payload", "x"}});
    echo_ok &= r.value("ok", false) && r.at("incomplete").empty() && r.at("timing").at("peers").size() == 3;
  }

  std::mt19937_64 rng(8);
  std::size_t frames = 0, frames_ok = 0;
  for (int i = 0; i < 500; ++i) {
    Message m;
    m.type = static_cast<MessageType>(rng() % 12);
    m.sender = std::to_string(rng());
    if (rng() % 2) m.session_id = "gw-" + std::to_string(rng() % 100) + ".1";
    if (rng() % 3 == 0) m.seq = rng();
    m.body = {{"data", std::string(rng() % 4000, static_cast<char>('a' + rng() % 26))}};
    const auto wire = encode_frame(m);
    ++frames;
    frames_ok += decode_frame(wire) == m && encode_frame(decode_frame(wire)) == wire;
  }

  bool pin_ok = false;
  {
    net::SimWorld world(8);
    auto& a = world.add_host("a");
    auto& b = world.add_host("b");
    SeededRandom ra(1), rb(2), rc(3);
    const Identity ida{"alice", KeyPair::from_random(ra)};
    const Identity idb{"bob", KeyPair::from_random(rb)};
    const Identity impostor{"bob", KeyPair::from_random(rc)};
    std::optional<Error> err;
    bool done = false;
    auto listener = b.listen({"b", 7000}, [&](net::LinkPtr link) {
      SecureChannel::respond(b, idb, link, {}, [](SecureChannel::Ptr, std::optional<Error>) {});
    });
    HandshakeOptions opts;
    opts.expected_fingerprint = impostor.fingerprint();
    SecureChannel::open(a, ida, {"b", 7000}, opts, [&](SecureChannel::Ptr, std::optional<Error> e) {
      err = e;
      done = true;
    });
    world.run_until([&] { return done; }, 20s);
    pin_ok = err && err->code() == Errc::FingerprintMismatch;

    TrustStore store;
    store.pin("bob", idb.fingerprint(), idb.keys.public_key_hex(), 0);
    try {
      store.pin("bob", impostor.fingerprint(), impostor.keys.public_key_hex(), 0);
      pin_ok = false;
    } catch (const Error& e) {
      pin_ok &= e.code() == Errc::FingerprintMismatch;
    }
  }

  return {agree == cells && echo_ok && frames_ok == frames && pin_ok,
          fmt("state table %zu/%zu cells, echo identity %s, frames %zu/%zu, pinning mismatch %s", agree, cells,
              echo_ok ? "ok" : "BROKEN", frames_ok, frames, pin_ok ? "detected" : "MISSED")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-8, one line each."};
  std::vector<int> only;
  std::string log_level = "off";
  app.add_option("--only", only, "Run just these criteria")->delimiter(',');
  app.add_option("--log-level", log_level, "Daemon log level");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},  {"secret sharing", secret_sharing},
      {"channel-wait offset", channel_wait_offset}, {"adapter overhead", adapter_overhead},
      {"linear scaling", linear_scaling},          {"chaos recovery", chaos_suite_holds},
      {"failure detection", failure_detection},    {"state machine and wire", soundness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto began = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("aborted: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %d %s  %s: %s [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                v.detail.c_str(), seconds_since(began));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

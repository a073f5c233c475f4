#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "smcgw/harness/scenario.hpp"
#include "smcgw/harness/stats.hpp"

using namespace smcgw;
using namespace smcgw::harness;

namespace {

/// "5", "3,5,7" or "3-11".
std::vector<std::size_t> parse_peers(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const auto item = text.substr(pos, comma - pos);
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(std::stoul(item));
    } else {
      const auto lo = std::stoul(item.substr(0, dash));
      const auto hi = std::stoul(item.substr(dash + 1));
      for (auto n = lo; n <= hi; ++n) out.push_back(n);
    }
    pos = comma + 1;
  }
  for (auto n : out) {
    if (n < 1 || n > 255) throw Error(Errc::ConfigError, "peer count out of range: " + std::to_string(n));
  }
  return out;
}

std::string scaling_text(const TimingReport& r) {
  const auto pts = r.scaling();
  if (pts.size() < 2) return {};
  std::vector<double> xs, ys;
  for (const auto& [n, m] : pts) {
    xs.push_back(static_cast<double>(n));
    ys.push_back(m);
  }
  const auto fit = fit_line(xs, ys);
  char buf[160];
  std::snprintf(buf, sizeof buf, "median max t_total vs n: slope %.4f ms/peer, intercept %.3f ms, r_squared %.4f\n",
                fit.slope, fit.intercept, fit.r_squared);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmarks and fault-injection runs against a gateway plus N peers."};
  app.require_subcommand(1);
  std::string peers_text;
  std::optional<std::size_t> reps;
  std::string transport = "sim";
  long channel_wait = 0;
  std::string adapter = "inproc";
  std::string fault_file;
  std::uint64_t seed = 1;
  std::string format = "text";
  int echo_count = 10;
  bool echo_direct = false;
  std::string log_level = "warn";
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--peers", peers_text, "Peer count: N, a list N,M or a range A-B");
    sub->add_option("--reps", reps, "Repetitions per peer count (default 100; chaos: seeds per case, default 1)");
    sub->add_option("--transport", transport, "sim or tcp")->check(CLI::IsMember({"sim", "tcp"}));
    sub->add_option("--channel-wait", channel_wait, "Gateway wait before each session start, ms");
    sub->add_option("--adapter", adapter, "inproc or socket")->check(CLI::IsMember({"inproc", "socket"}));
    sub->add_option("--fault", fault_file, "Fault plan (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Scenario seed");
    sub->add_option("--format", format, "text, json or csv")->check(CLI::IsMember({"text", "json", "csv"}));
    sub->add_option("--log-level", log_level, "Daemon log level for simulated runs");
    sub->add_flag("--quiet", quiet, "No progress on stderr");
  };
  auto* echo = app.add_subcommand("echo", "Batches of consecutive echo requests to every peer");
  add_common(echo);
  echo->add_option("--count", echo_count, "Echoes per peer and batch");
  echo->add_flag("--direct", echo_direct, "Answer echoes without passing the adapter");
  auto* sum = app.add_subcommand("sum", "One secure sum per repetition");
  add_common(sum);
  auto* chaos = app.add_subcommand("chaos", "Secure sums under injected faults, checked against the survivor oracle");
  add_common(chaos);
  CLI11_PARSE(app, argc, argv);

  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    Scenario s;
    s.transport = transport_from_string(transport);
    s.channel_wait = std::chrono::milliseconds(channel_wait);
    s.adapter = adapter == "socket" ? AdapterMode::LoopbackSocket : AdapterMode::InProcess;
    s.seed = seed;
    s.echo_count = echo_count;
    s.echo_via_adapter = !echo_direct;
    if (!fault_file.empty()) {
      std::ifstream in(fault_file);
      s.faults = net::FaultPlan::from_json(nlohmann::json::parse(in));
    }
    const auto fmt = format_from_string(format);
    const Progress progress = [&](std::size_t n, std::size_t rep) {
      if (!quiet && (rep + 1) % 10 == 0) std::cerr << "n=" << n << " rep " << rep + 1 << "\n";
    };

    if (echo->parsed() || sum->parsed()) {
      s.kind = echo->parsed() ? "echo" : "sum";
      s.peers = parse_peers(peers_text.empty() ? (echo->parsed() ? "5" : "3-11") : peers_text);
      s.repetitions = reps.value_or(100);
      const auto report = echo->parsed() ? run_echo_benchmark(s, progress) : run_sum_benchmark(s, progress);
      std::cout << emit_report(report, fmt);
      if (fmt == Format::Text) std::cout << scaling_text(report);
      return report.failures.empty() ? 0 : 2;
    }

    if (s.transport != Transport::Sim) throw Error(Errc::ConfigError, "chaos runs need --transport sim");
    std::vector<ChaosCase> cases;
    if (s.faults) {
      ChaosCase c;
      c.name = fault_file;
      c.peers = parse_peers(peers_text.empty() ? "5" : peers_text).front();
      c.faults = *s.faults;
      cases.push_back(c);
    } else {
      cases = chaos_suite();
      if (!peers_text.empty()) {
        for (auto& c : cases) c.peers = parse_peers(peers_text).front();
      }
    }
    std::vector<ChaosOutcome> outcomes;
    for (std::size_t r = 0; r < reps.value_or(1); ++r) {
      for (const auto& c : cases) outcomes.push_back(run_chaos(c, seed + r));
    }
    std::cout << emit_chaos(outcomes, fmt);
    for (const auto& o : outcomes) {
      if (!o.verdict) return 2;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

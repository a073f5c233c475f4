#include "smcgw/harness/report.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "smcgw/harness/stats.hpp"

namespace smcgw::harness {

std::string_view to_string(Transport t) { return t == Transport::Sim ? "sim" : "tcp"; }

Transport transport_from_string(std::string_view s) {
  if (s == "sim") return Transport::Sim;
  if (s == "tcp") return Transport::Tcp;
  throw Error(Errc::ConfigError, "unknown transport '" + std::string(s) + "' (sim|tcp)");
}

Format format_from_string(std::string_view s) {
  if (s == "text") return Format::Text;
  if (s == "json") return Format::Json;
  if (s == "csv") return Format::Csv;
  throw Error(Errc::ConfigError, "unknown format '" + std::string(s) + "' (text|json|csv)");
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json j = {{"kind", kind},
                      {"peers", peers},
                      {"repetitions", repetitions},
                      {"transport", std::string(harness::to_string(transport))},
                      {"channel_wait_ms", channel_wait.count()},
                      {"adapter", std::string(smcgw::to_string(adapter))},
                      {"seed", seed},
                      {"echo_count", echo_count},
                      {"echo_via_adapter", echo_via_adapter}};
  j["faults"] = faults ? faults->to_json() : nlohmann::json();
  return j;
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  Scenario s;
  s.kind = j.at("kind").get<std::string>();
  s.peers = j.at("peers").get<std::vector<std::size_t>>();
  s.repetitions = j.at("repetitions").get<std::size_t>();
  s.transport = transport_from_string(j.at("transport").get<std::string>());
  s.channel_wait = std::chrono::milliseconds(j.at("channel_wait_ms").get<std::int64_t>());
  s.adapter = adapter_mode_from_string(j.at("adapter").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.echo_count = j.value("echo_count", 10);
  s.echo_via_adapter = j.value("echo_via_adapter", true);
  if (j.contains("faults") && !j["faults"].is_null()) s.faults = net::FaultPlan::from_json(j["faults"]);
  return s;
}

void TimingReport::add(std::size_t n, std::size_t repetition, std::vector<PeerTiming> peers) {
  Sample s;
  s.n = n;
  s.repetition = repetition;
  for (const auto& p : peers) {
    s.max.flex_ms = std::max(s.max.flex_ms, p.flex_ms);
    s.max.adapter_ms = std::max(s.max.adapter_ms, p.adapter_ms);
    s.max.total_ms = std::max(s.max.total_ms, p.total_ms);
  }
  s.peers = std::move(peers);
  samples.push_back(std::move(s));
}

std::vector<Row> TimingReport::rows() const {
  std::map<std::size_t, std::map<std::string, std::vector<double>>> by_n;
  const bool echo = scenario.kind == "echo";
  const double count = std::max(1, scenario.echo_count);
  for (const auto& s : samples) {
    auto& m = by_n[s.n];
    m["t_flex"].push_back(s.max.flex_ms);
    m["t_adapter"].push_back(s.max.adapter_ms);
    // Per-peer sum first, then the max: the slowest peer's combined time.
    double fa = 0;
    for (const auto& p : s.peers) fa = std::max(fa, p.flex_ms + p.adapter_ms);
    m["t_flex_adapter"].push_back(fa);
    m["t_total"].push_back(s.max.total_ms);
    if (echo) {
      m["t_adapter_per_echo"].push_back(s.max.adapter_ms / count);
      m["t_total_per_echo"].push_back(s.max.total_ms / count);
    }
  }
  static const std::vector<std::string> order = {"t_flex",   "t_adapter",          "t_flex_adapter",
                                                 "t_total",  "t_adapter_per_echo", "t_total_per_echo"};
  std::vector<Row> out;
  for (const auto& [n, metrics] : by_n) {
    for (const auto& name : order) {
      auto it = metrics.find(name);
      if (it == metrics.end()) continue;
      out.push_back({n, name, median(it->second), quantile(it->second, 0.9), maximum(it->second)});
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> TimingReport::scaling() const {
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& r : rows()) {
    if (r.metric == "t_total") out.emplace_back(r.n, r.median);
  }
  return out;
}

namespace {

nlohmann::json timing_json(const PeerTiming& p) {
  return {{"peer", p.peer}, {"t_flex_ms", p.flex_ms}, {"t_adapter_ms", p.adapter_ms}, {"t_total_ms", p.total_ms}};
}

PeerTiming timing_of(const nlohmann::json& j) {
  return {j.at("peer").get<std::string>(), j.at("t_flex_ms").get<double>(), j.at("t_adapter_ms").get<double>(),
          j.at("t_total_ms").get<double>()};
}

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

nlohmann::json TimingReport::to_json() const {
  auto js = nlohmann::json::array();
  for (const auto& s : samples) {
    auto peers = nlohmann::json::array();
    for (const auto& p : s.peers) peers.push_back(timing_json(p));
    js.push_back({{"n", s.n}, {"repetition", s.repetition}, {"peers", peers}, {"max", timing_json(s.max)}});
  }
  auto rs = nlohmann::json::array();
  for (const auto& r : rows()) {
    rs.push_back({{"n", r.n}, {"metric", r.metric}, {"median", r.median}, {"p90", r.p90}, {"max", r.max}});
  }
  return {{"scenario", scenario.to_json()},
          {"repetitions", samples.size()},
          {"samples", js},
          {"rows", rs},
          {"failures", failures}};
}

TimingReport TimingReport::from_json(const nlohmann::json& j) {
  TimingReport r;
  r.scenario = Scenario::from_json(j.at("scenario"));
  for (const auto& s : j.at("samples")) {
    Sample x;
    x.n = s.at("n").get<std::size_t>();
    x.repetition = s.at("repetition").get<std::size_t>();
    for (const auto& p : s.at("peers")) x.peers.push_back(timing_of(p));
    x.max = timing_of(s.at("max"));
    r.samples.push_back(std::move(x));
  }
  for (const auto& f : j.at("failures")) r.failures.push_back(f);
  return r;
}

std::string emit_report(const TimingReport& report, Format format) {
  std::ostringstream out;
  const auto rows = report.rows();
  switch (format) {
    case Format::Json:
      out << report.to_json().dump(2) << "\n";
      break;
    case Format::Csv:
      out << "n,metric,median,p90,max\n";
      for (const auto& r : rows) {
        out << r.n << "," << r.metric << "," << fixed(r.median) << "," << fixed(r.p90) << "," << fixed(r.max) << "\n";
      }
      break;
    case Format::Text: {
      const auto& s = report.scenario;
      out << s.kind << " over " << to_string(s.transport) << ", adapter " << smcgw::to_string(s.adapter)
          << ", channel_wait " << s.channel_wait.count() << " ms, seed " << s.seed << ", " << report.samples.size()
          << " repetitions, " << report.failures.size() << " failed\n";
      char line[160];
      std::snprintf(line, sizeof line, "%4s  %-20s %12s %12s %12s\n", "n", "metric", "median_ms", "p90_ms", "max_ms");
      out << line;
      for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%4zu  %-20s %12.3f %12.3f %12.3f\n", r.n, r.metric.c_str(), r.median, r.p90,
                      r.max);
        out << line;
      }
      for (const auto& f : report.failures) out << "failure: " << f.dump() << "\n";
      break;
    }
  }
  return out.str();
}

nlohmann::json ChaosOutcome::to_json() const {
  return {{"name", name},
          {"peers", peers},
          {"ok", ok},
          {"attempts", attempts},
          {"participants", participants},
          {"result", result ? nlohmann::json(*result) : nlohmann::json()},
          {"expected", expected ? nlohmann::json(*expected) : nlohmann::json()},
          {"error", error_code},
          {"failures", failures},
          {"verdict", verdict ? "pass" : "fail"}};
}

std::string emit_chaos(const std::vector<ChaosOutcome>& outcomes, Format format) {
  std::ostringstream out;
  switch (format) {
    case Format::Json: {
      auto arr = nlohmann::json::array();
      for (const auto& o : outcomes) arr.push_back(o.to_json());
      out << arr.dump(2) << "\n";
      break;
    }
    case Format::Csv:
      out << "name,peers,outcome,attempts,participants,result,expected,verdict\n";
      for (const auto& o : outcomes) {
        std::string parts;
        for (const auto& p : o.participants) parts += (parts.empty() ? "" : ";") + p;
        out << o.name << "," << o.peers << "," << (o.ok ? "success" : o.error_code) << "," << o.attempts << ","
            << parts << "," << (o.result ? std::to_string(*o.result) : "") << ","
            << (o.expected ? std::to_string(*o.expected) : "") << "," << (o.verdict ? "pass" : "fail") << "\n";
      }
      break;
    case Format::Text:
      for (const auto& o : outcomes) {
        out << (o.verdict ? "PASS " : "FAIL ") << o.name << ": ";
        if (o.ok) {
          out << "success on attempt " << o.attempts << " with " << o.participants.size() << " peers, result "
              << (o.result ? std::to_string(*o.result) : "?") << " (oracle "
              << (o.expected ? std::to_string(*o.expected) : "?") << ")";
        } else {
          out << o.error_code << " after " << o.attempts << " attempt(s)";
        }
        out << "\n";
      }
      break;
  }
  return out.str();
}

}  // namespace smcgw::harness

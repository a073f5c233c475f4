#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/adapter.hpp"
#include "smcgw/gateway.hpp"
#include "smcgw/net/fault_plan.hpp"

namespace smcgw::harness {

enum class Transport { Sim, Tcp };
std::string_view to_string(Transport t);
/// Throws ConfigError.
Transport transport_from_string(std::string_view s);

enum class Format { Text, Json, Csv };
/// Throws ConfigError.
Format format_from_string(std::string_view s);

struct Scenario {
  std::string kind = "sum";  // echo | sum | chaos
  std::vector<std::size_t> peers = {3};
  std::size_t repetitions = 100;
  Transport transport = Transport::Sim;
  std::chrono::milliseconds channel_wait{0};
  AdapterMode adapter = AdapterMode::InProcess;
  std::optional<net::FaultPlan> faults;
  std::uint64_t seed = 1;
  /// Echo only: requests per peer and batch, and whether they pass the adapter.
  int echo_count = 10;
  bool echo_via_adapter = true;

  nlohmann::json to_json() const;
  static Scenario from_json(const nlohmann::json& j);
};

/// One repetition: per-peer records and their per-metric maximum.
struct Sample {
  std::size_t n = 0;
  std::size_t repetition = 0;
  std::vector<PeerTiming> peers;
  PeerTiming max{"max"};

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Row {
  std::size_t n = 0;
  std::string metric;
  double median = 0;
  double p90 = 0;
  double max = 0;

  friend bool operator==(const Row&, const Row&) = default;
};

struct TimingReport {
  Scenario scenario;
  std::vector<Sample> samples;
  /// Requests that ended in an error response, with the response.
  std::vector<nlohmann::json> failures;

  void add(std::size_t n, std::size_t repetition, std::vector<PeerTiming> peers);
  /// Per n: t_flex, t_flex_adapter (T_flex + T_adapter), t_total over the
  /// per-repetition maxima; echo reports add per-echo rows.
  std::vector<Row> rows() const;
  /// (n, median of max T_total) pairs in ascending n.
  std::vector<std::pair<std::size_t, double>> scaling() const;

  nlohmann::json to_json() const;
  static TimingReport from_json(const nlohmann::json& j);
};

std::string emit_report(const TimingReport& report, Format format);

/// Result of one fault-injection run.
struct ChaosOutcome {
  std::string name;
  std::size_t peers = 0;
  bool ok = false;
  int attempts = 0;
  std::vector<std::string> participants;
  std::optional<std::uint64_t> result;
  std::optional<std::uint64_t> expected;
  std::string error_code;
  nlohmann::json failures = nlohmann::json::array();
  /// Success with the oracle sum over the final participants, or a failure
  /// that the rules predict.
  bool verdict = false;

  nlohmann::json to_json() const;
};

std::string emit_chaos(const std::vector<ChaosOutcome>& outcomes, Format format);

}  // namespace smcgw::harness

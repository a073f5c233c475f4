#include <iostream>

#include <CLI11.hpp>

#include "daemon_util.hpp"
#include "smcgw/config.hpp"
#include "smcgw/net/asio_host.hpp"
#include "smcgw/peer_daemon.hpp"

using namespace smcgw;

namespace {

int run_tcp(const PeerConfig& cfg, const Identity& id) {
  const auto signals = tools::block_shutdown_signals();
  net::AsioHost host(cfg.name, net::AsioOptions{"127.0.0.1", std::nullopt});
  auto peer = PeerDaemon::create(host, cfg, id);
  peer->set_state_observer([&cfg](PeerState from, PeerState to) {
    spdlog::info("{}: {} -> {}", cfg.name, to_string(from), to_string(to));
  });
  host.start();
  host.invoke([&] { peer->start(); });
  spdlog::info("peer {} listening on {} fingerprint {}", cfg.name, host.invoke([&] { return peer->endpoint(); }).to_string(),
               id.fingerprint());
  const int sig = tools::wait_for_shutdown(signals);
  spdlog::info("signal {}, shutting down", sig);
  host.invoke([&] { peer->stop(); });
  host.stop();
  return 0;
}

int run_sim(PeerConfig cfg, const Identity& id, double seconds) {
  net::SimWorld world(cfg.seed);
  auto& host = world.add_host(cfg.name);
  cfg.listen.host = cfg.name;
  auto peer = PeerDaemon::create(host, cfg, id);
  tools::dry_run(world, *peer, seconds);
  std::cout << nlohmann::json{{"name", cfg.name},
                              {"fingerprint", id.fingerprint()},
                              {"simulated_seconds", seconds},
                              {"state", std::string(to_string(peer->state()))},
                              {"capabilities", cfg.capabilities()}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-holding peer: finds a gateway, pairs, and takes part in secure sums."};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string transport = "tcp";
  std::string log_level = "info";
  double duration = 10;
  bool with_parent = false;
  app.add_option("--config", config_path, "Peer config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Overrides the config seed (seeded readings, randomness)");
  app.add_option("--transport", transport, "tcp, or sim for a standalone dry run")
      ->check(CLI::IsMember({"sim", "tcp"}));
  app.add_option("--duration", duration, "Simulated seconds for --transport sim");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");
  app.add_flag("--exit-with-parent", with_parent, "Die when the launching process exits");
  CLI11_PARSE(app, argc, argv);

  if (with_parent) tools::exit_with_parent();
  tools::setup_logging(log_level);
  try {
    auto cfg = load_peer_config(config_path);
    if (seed) cfg.seed = *seed;
    const auto id = load_identity(cfg.name, cfg.key_file, cfg.seed);
    return transport == "tcp" ? run_tcp(cfg, id) : run_sim(cfg, id, duration);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

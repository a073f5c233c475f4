#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "daemon_util.hpp"
#include "smcgw/config.hpp"
#include "smcgw/gateway.hpp"
#include "smcgw/net/asio_host.hpp"

using namespace smcgw;

namespace {

void write_ready_file(const std::filesystem::path& path, const GatewayDaemon& gw) {
  const nlohmann::json j = {{"control", gw.control_endpoint().to_string()},
                            {"client", gw.client_endpoint().to_string()},
                            {"fingerprint", gw.identity().fingerprint()},
                            {"name", gw.identity().name}};
  // Written then renamed so readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

int run_tcp(const GatewayConfig& cfg, const Identity& id, const std::string& ready_file) {
  const auto signals = tools::block_shutdown_signals();
  net::AsioHost host(cfg.name);
  auto gw = GatewayDaemon::create(host, cfg, id);
  host.start();
  host.invoke([&] { gw->start(); });
  spdlog::info("gateway {} control {} client {} fingerprint {}", cfg.name, gw->control_endpoint().to_string(),
               gw->client_endpoint().to_string(), id.fingerprint());
  if (!ready_file.empty()) write_ready_file(ready_file, *gw);
  const int sig = tools::wait_for_shutdown(signals);
  spdlog::info("signal {}, shutting down", sig);
  host.invoke([&] { gw->stop(); });
  host.stop();
  return 0;
}

int run_sim(GatewayConfig cfg, const Identity& id, double seconds) {
  net::SimWorld world(cfg.seed);
  auto& host = world.add_host(cfg.name);
  cfg.control.host = cfg.name;
  cfg.client.host = cfg.name;
  auto gw = GatewayDaemon::create(host, cfg, id);
  tools::dry_run(world, *gw, seconds);
  const auto& st = gw->stats();
  std::cout << nlohmann::json{{"name", cfg.name},
                              {"fingerprint", id.fingerprint()},
                              {"simulated_seconds", seconds},
                              {"requests", st.requests},
                              {"known_peers", gw->registry().entries().size()}}
                   .dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aggregation gateway: pairs peers, tracks liveness and runs secure sums for clients."};
  std::string config_path;
  std::string transport = "tcp";
  std::string ready_file;
  std::string log_level = "info";
  double duration = 10;
  bool with_parent = false;
  app.add_option("--config", config_path, "Gateway config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--transport", transport, "tcp, or sim for a standalone dry run")
      ->check(CLI::IsMember({"sim", "tcp"}));
  app.add_option("--ready-file", ready_file, "Write bound endpoints and fingerprint here once listening");
  app.add_option("--duration", duration, "Simulated seconds for --transport sim");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");
  app.add_flag("--exit-with-parent", with_parent, "Die when the launching process exits");
  CLI11_PARSE(app, argc, argv);

  if (with_parent) tools::exit_with_parent();
  tools::setup_logging(log_level);
  try {
    const auto cfg = load_gateway_config(config_path);
    const auto id = load_identity(cfg.name, cfg.key_file, cfg.seed);
    return transport == "tcp" ? run_tcp(cfg, id, ready_file) : run_sim(cfg, id, duration);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

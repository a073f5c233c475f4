#pragma once

#include <signal.h>
#include <sys/prctl.h>

#include <chrono>
#include <string>

#include <spdlog/spdlog.h>

#include "smcgw/error.hpp"
#include "smcgw/net/sim_network.hpp"

namespace smcgw::tools {

inline void setup_logging(const std::string& level) {
  spdlog::set_pattern("%Y-%m-%d %H:%M:%S.%e %^%l%$ %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

/// Blocks SIGINT and SIGTERM in this thread and every thread it creates
/// later, so they can be collected with wait_for_shutdown().
inline sigset_t block_shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

inline int wait_for_shutdown(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

/// Used by the harness so children never outlive it.
inline void exit_with_parent() { prctl(PR_SET_PDEATHSIG, SIGKILL); }

/// Standalone daemon on an otherwise empty simulated network.
template <class Daemon>
void dry_run(net::SimWorld& world, Daemon& daemon, double seconds) {
  daemon.start();
  world.run_for(std::chrono::duration_cast<net::Duration>(std::chrono::duration<double>(seconds)));
  daemon.stop();
}

}  // namespace smcgw::tools

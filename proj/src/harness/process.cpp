#include "smcgw/harness/process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <thread>

#include <spdlog/spdlog.h>

extern char** environ;

namespace smcgw::harness {

using namespace std::chrono_literals;
namespace fs = std::filesystem;

ChildProcess::ChildProcess(const fs::path& exe, const std::vector<std::string>& args, const fs::path& log) {
  std::vector<std::string> argv_store;
  argv_store.push_back(exe.string());
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  const int rc = posix_spawn(&pid_, exe.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) {
    throw Error(Errc::ScenarioSetupFailed, "cannot spawn " + exe.string() + ": " + std::strerror(rc));
  }
}

ChildProcess::~ChildProcess() { terminate(); }

void ChildProcess::reap(bool block) {
  if (exited_ || pid_ <= 0) return;
  int status = 0;
  const pid_t r = waitpid(pid_, &status, block ? 0 : WNOHANG);
  if (r == pid_ || (r < 0 && errno == ECHILD)) exited_ = true;
}

bool ChildProcess::running() {
  reap(false);
  return !exited_;
}

void ChildProcess::kill() {
  if (!running()) return;
  ::kill(pid_, SIGKILL);
  reap(true);
}

void ChildProcess::signal(int sig) {
  if (running()) ::kill(pid_, sig);
}

void ChildProcess::terminate(std::chrono::milliseconds grace) {
  if (!running()) return;
  ::kill(pid_, SIGTERM);
  const auto deadline = std::chrono::steady_clock::now() + grace;
  while (std::chrono::steady_clock::now() < deadline) {
    if (!running()) return;
    std::this_thread::sleep_for(10ms);
  }
  kill();
}

fs::path tools_dir() {
  if (const char* env = std::getenv("SMCGW_TOOLS_DIR"); env && *env) return env;
#ifdef SMCGW_BUILD_TOOLS_DIR
  return SMCGW_BUILD_TOOLS_DIR;
#else
  return fs::current_path();
#endif
}

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw Error(Errc::ScenarioSetupFailed, "cannot write " + path.string());
}

fs::path fresh_workdir() {
  std::random_device rd;
  for (int i = 0; i < 100; ++i) {
    auto p = fs::temp_directory_path() / ("smcgw-" + std::to_string(getpid()) + "-" + std::to_string(rd() % 1000000));
    if (fs::create_directory(p)) return p;
  }
  throw Error(Errc::ScenarioSetupFailed, "cannot create a work directory");
}

nlohmann::json wait_for_ready(const fs::path& path, ChildProcess& child, std::chrono::milliseconds limit) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < deadline) {
    if (fs::exists(path)) {
      std::ifstream in(path);
      auto j = nlohmann::json::parse(in, nullptr, false);
      if (!j.is_discarded()) return j;
    }
    if (!child.running()) throw Error(Errc::ScenarioSetupFailed, "gateway exited during startup");
    std::this_thread::sleep_for(10ms);
  }
  throw Error(Errc::ScenarioSetupFailed, "gateway did not become ready");
}

}  // namespace

ProcessCluster::ProcessCluster(ClusterSpec spec, fs::path workdir) : spec_(std::move(spec)), workdir_(std::move(workdir)) {
  if (spec_.faults.has_faults()) {
    throw Error(Errc::ScenarioSetupFailed, "fault plans need the simulated transport");
  }
  if (!spec_.inputs.empty() && spec_.inputs.size() != spec_.peers) {
    throw Error(Errc::ScenarioSetupFailed, "inputs must list one value per peer");
  }
  if (workdir_.empty()) {
    workdir_ = fresh_workdir();
    owns_workdir_ = true;
  } else {
    fs::create_directories(workdir_);
  }
  const auto tools = tools_dir();

  GatewayConfig g;
  g.name = "gw";
  g.key_file = workdir_ / "gw.key";
  g.trust_store = workdir_ / "gw.trust.json";
  g.control = {"127.0.0.1", 0};
  g.client = {"127.0.0.1", 0};
  g.announce = false;
  g.location = spec_.location;
  g.adapter = spec_.adapter;
  g.seed = spec_.seed;
  g.channel_wait = spec_.channel_wait;
  if (spec_.gateway_tweak) spec_.gateway_tweak(g);
  write_json(workdir_ / "gw.json", gateway_config_to_json(g));
  const auto ready = workdir_ / "gw.ready";
  fs::remove(ready);
  gateway_ = std::make_unique<ChildProcess>(
      tools / "gateway",
      std::vector<std::string>{"--config", (workdir_ / "gw.json").string(), "--transport", "tcp", "--ready-file",
                               ready.string(), "--exit-with-parent"},
      workdir_ / "gw.log");
  const auto info = wait_for_ready(ready, *gateway_, 10s);
  control_ = net::Address::parse(info.at("control").get<std::string>());
  client_endpoint_ = net::Address::parse(info.at("client").get<std::string>());
  gateway_fp_ = info.at("fingerprint").get<std::string>();

  peers_.resize(spec_.peers);
  alive_.assign(spec_.peers, false);
  for (std::size_t i = 0; i < spec_.peers; ++i) {
    PeerConfig c;
    c.name = peer_name(i);
    c.key_file = workdir_ / (c.name + ".key");
    c.trust_store = workdir_ / (c.name + ".trust.json");
    c.listen = {"127.0.0.1", 0};
    c.location = spec_.location;
    DataSourceSpec src;
    src.capability = spec_.capability;
    if (spec_.inputs.empty()) {
      src.kind = DataSourceSpec::Kind::Seeded;
    } else {
      src.kind = DataSourceSpec::Kind::Constant;
      src.value = spec_.inputs[i];
    }
    c.sources.push_back(src);
    c.policy = SelectionPolicy::manual(gateway_fp_);
    c.multicast = false;
    c.static_gateways.push_back({control_, gateway_fp_, g.name});
    c.adapter = spec_.adapter;
    c.seed = spec_.seed;
    if (spec_.peer_tweak) spec_.peer_tweak(i, c);
    write_json(workdir_ / (c.name + ".json"), peer_config_to_json(c));
    launch_peer(i);
  }
}

ProcessCluster::~ProcessCluster() {
  client_.reset();
  for (auto& p : peers_) p.reset();
  gateway_.reset();
  if (owns_workdir_) {
    std::error_code ec;
    fs::remove_all(workdir_, ec);
  }
}

void ProcessCluster::launch_peer(std::size_t i) {
  const auto name = peer_name(i);
  peers_[i] = std::make_unique<ChildProcess>(
      tools_dir() / "peer",
      std::vector<std::string>{"--config", (workdir_ / (name + ".json")).string(), "--transport", "tcp",
                               "--exit-with-parent"},
      workdir_ / (name + ".log"));
  alive_[i] = true;
}

BlockingClient& ProcessCluster::client() {
  if (!client_) client_ = std::make_unique<BlockingClient>(client_endpoint_, gateway_fp_, "harness");
  return *client_;
}

nlohmann::json ProcessCluster::request(const nlohmann::json& body, net::Duration limit) {
  return client().request(body, limit);
}

std::map<std::string, std::string> ProcessCluster::liveness() {
  std::map<std::string, std::string> out;
  const auto cat = request({{"operation", "list_metadata"}}, 10s);
  for (const auto& e : cat.value("liveness", nlohmann::json::array())) {
    out[e.at("name").get<std::string>()] = e.at("liveness").get<std::string>();
  }
  return out;
}

void ProcessCluster::wait_operational(net::Duration limit) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < deadline) {
    const auto live = liveness();
    bool all = true;
    for (std::size_t i = 0; i < peers_.size() && all; ++i) {
      if (!alive_[i]) continue;
      auto it = live.find(peer_name(i));
      all = it != live.end() && it->second == "active";
    }
    if (all) return;
    if (!gateway_->running()) throw Error(Errc::ScenarioSetupFailed, "gateway exited");
    std::this_thread::sleep_for(50ms);
  }
  throw Error(Errc::ScenarioSetupFailed, "peers did not reach Operation; logs in " + workdir_.string());
}

void ProcessCluster::kill_peer(std::size_t i) {
  peers_.at(i)->kill();
  alive_[i] = false;
}

void ProcessCluster::freeze_peer(std::size_t i) {
  peers_.at(i)->signal(SIGSTOP);
  alive_[i] = false;
}

void ProcessCluster::restart_peer(std::size_t i) {
  if (peers_.at(i)) peers_[i]->kill();
  launch_peer(i);
}

}  // namespace smcgw::harness

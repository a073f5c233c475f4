#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "smcgw/client.hpp"

using namespace smcgw;

int main(int argc, char** argv) {
  CLI::App app{"Sends one request to a gateway's client endpoint and prints the JSON response."};
  app.require_subcommand(1);
  std::string gateway;
  std::optional<std::string> fingerprint;
  std::string group;
  std::string data_type;
  int count = 10;
  bool direct = false;
  double timeout_s = 120;
  app.add_option("--gateway", gateway, "Client endpoint, host:port")->required();
  app.add_option("--fingerprint", fingerprint, "Expected gateway fingerprint");
  app.add_option("--timeout", timeout_s, "Seconds to wait for the response");

  auto* sum = app.add_subcommand("sum", "Secure sum over a group");
  auto* average = app.add_subcommand("average", "Secure average over a group");
  for (auto* sub : {sum, average}) {
    sub->add_option("--group", group, "Group label, location/capability")->required();
    sub->add_option("--data-type", data_type, "Data type; defaults to the group's capability");
  }
  app.add_subcommand("list", "Groups and peers the gateway knows");
  auto* echo = app.add_subcommand("echo", "Echo batch to every peer");
  echo->add_option("--count", count, "Echoes per peer");
  echo->add_flag("--direct", direct, "Skip the adapter");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  nlohmann::json body;
  if (sum->parsed() || average->parsed()) {
    if (data_type.empty()) data_type = group.substr(group.find('/') + 1);
    body = {{"operation", sum->parsed() ? "sum" : "average"}, {"group", group}, {"data_type", data_type}};
  } else if (echo->parsed()) {
    body = {{"operation", "echo"}, {"count", count}, {"via_adapter", !direct}};
  } else {
    body = {{"operation", "list_metadata"}};
  }
  try {
    BlockingClient client(net::Address::parse(gateway), fingerprint);
    const auto resp = client.request(
        body, std::chrono::duration_cast<net::Duration>(std::chrono::duration<double>(timeout_s)));
    std::cout << resp.dump(2) << "\n";
    return resp.value("ok", false) ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}

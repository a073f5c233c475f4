#include "smcgw/client.hpp"

#include <future>

namespace smcgw {

void Client::connect(net::Host& host, const Identity& self, const net::Address& gateway,
                     std::optional<std::string> expected_fingerprint, net::Duration timeout, Ready on_ready) {
  HandshakeOptions opts;
  opts.purpose = "client";
  opts.timeout = timeout;
  opts.expected_fingerprint = std::move(expected_fingerprint);
  SecureChannel::open(host, self, gateway, opts, [on_ready](SecureChannel::Ptr ch, std::optional<Error> err) {
    if (err || !ch) {
      on_ready(nullptr, err.value_or(Error(Errc::Refused, "no channel")));
      return;
    }
    Ptr client(new Client(ch));
    std::weak_ptr<Client> weak = client;
    ch->start(
        [weak](Message m) {
          if (auto self = weak.lock()) self->on_message(std::move(m));
        },
        [weak] {
          if (auto self = weak.lock()) self->on_closed();
        });
    on_ready(client, std::nullopt);
  });
}

void Client::request(nlohmann::json body, Reply reply) {
  if (!is_open()) {
    reply({{"ok", false}, {"error", {{"code", "ChannelClosed"}, {"message", "not connected"}}}});
    return;
  }
  const auto id = next_id_++;
  body["id"] = id;
  waiting_[id] = std::move(reply);
  channel_->send(Message{MessageType::ClientRequest, "", std::nullopt, std::move(body), std::nullopt});
}

void Client::close() {
  if (channel_) channel_->close();
  on_closed();
}

void Client::on_message(Message m) {
  if (m.type != MessageType::ClientResponse) return;
  const auto id = m.body.value("id", std::uint64_t{0});
  auto it = waiting_.find(id);
  if (it == waiting_.end()) return;
  auto reply = std::move(it->second);
  waiting_.erase(it);
  m.body.erase("id");
  reply(std::move(m.body));
}

void Client::on_closed() {
  auto waiting = std::move(waiting_);
  waiting_.clear();
  for (auto& [id, reply] : waiting) {
    reply({{"ok", false}, {"error", {{"code", "ChannelClosed"}, {"message", "gateway closed the channel"}}}});
  }
}

BlockingClient::BlockingClient(const net::Address& gateway, std::optional<std::string> expected_fingerprint,
                               std::string name, net::Duration timeout)
    : host_(name), id_{name, KeyPair::generate()} {
  host_.start();
  std::promise<std::pair<Client::Ptr, std::optional<Error>>> done;
  auto fut = done.get_future();
  host_.post([&] {
    Client::connect(host_, id_, gateway, expected_fingerprint, timeout,
                    [&done](Client::Ptr c, std::optional<Error> e) { done.set_value({std::move(c), std::move(e)}); });
  });
  auto [client, err] = fut.get();
  if (err) {
    host_.stop();
    throw *err;
  }
  client_ = std::move(client);
}

BlockingClient::~BlockingClient() {
  host_.invoke([this] {
    client_->close();
    client_.reset();
  });
  host_.stop();
}

nlohmann::json BlockingClient::request(const nlohmann::json& body, net::Duration timeout) {
  auto done = std::make_shared<std::promise<nlohmann::json>>();
  auto fut = done->get_future();
  host_.post([this, body, done] { client_->request(body, [done](nlohmann::json r) { done->set_value(std::move(r)); }); });
  if (fut.wait_for(timeout) != std::future_status::ready) {
    throw Error(Errc::RequestTimeout, "no reply within " + std::to_string(net::to_ms(timeout)) + " ms");
  }
  return fut.get();
}

}  // namespace smcgw

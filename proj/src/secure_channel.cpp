#include "smcgw/secure_channel.hpp"

#include <sodium.h>
#include <spdlog/spdlog.h>

namespace smcgw {
namespace {

constexpr std::string_view kTranscriptLabel = "smcgw-hello-v1";

std::string to_base64(std::span<const std::uint8_t> bytes) {
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.pop_back();
  return out;
}

std::optional<std::vector<std::uint8_t>> from_base64(const std::string& text) {
  std::vector<std::uint8_t> out(text.size());
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    return std::nullopt;
  }
  out.resize(len);
  return out;
}

std::array<std::uint8_t, 32> key_from_hex(const std::string& hex) {
  const auto bytes = from_hex(hex);
  if (bytes.size() != 32) throw Error(Errc::MalformedMessage, "expected 32-byte key");
  std::array<std::uint8_t, 32> out{};
  std::copy(bytes.begin(), bytes.end(), out.begin());
  return out;
}

std::string associated_data(const Message& m) {
  std::string ad(to_string(m.type));
  ad += '\n';
  ad += m.sender;
  ad += '\n';
  ad += m.session_id ? "s:" + *m.session_id : std::string("-");
  ad += '\n';
  ad += std::to_string(*m.seq);
  return ad;
}

std::array<std::uint8_t, crypto_aead_xchacha20poly1305_ietf_NPUBBYTES> nonce_for(std::uint64_t seq) {
  std::array<std::uint8_t, crypto_aead_xchacha20poly1305_ietf_NPUBBYTES> n{};
  for (int i = 0; i < 8; ++i) n[i] = static_cast<std::uint8_t>(seq >> (8 * i));
  return n;
}

std::span<const std::uint8_t> bytes_of(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

Verifier pinned_in(const TrustStore& store) {
  return [&store](const RemoteIdentity& r) {
    const auto pinned = store.fingerprint_for(r.name);
    if (!pinned) {
      throw Error(Errc::Refused, r.name + " is not paired");
    }
    if (*pinned != r.fingerprint) {
      throw Error(Errc::FingerprintMismatch, r.name + " presented a key that differs from the pinned one");
    }
  };
}

Verifier trust_on_first_use(TrustStore& store, std::function<std::int64_t()> clock) {
  return [&store, clock = std::move(clock)](const RemoteIdentity& r) {
    if (store.pin(r.name, r.fingerprint, r.public_key_hex, clock()) == TrustStore::PinResult::Pinned) {
      store.save();
    }
  };
}

Verifier accept_any() {
  return [](const RemoteIdentity&) {};
}

SecureChannel::SecureChannel(net::Host& host, const Identity& self, net::LinkPtr link, HandshakeOptions options,
                             Role role, ReadyHandler on_ready)
    : host_(host),
      self_(self),
      link_(std::move(link)),
      options_(std::move(options)),
      role_(role),
      phase_(role == Role::Initiator ? Phase::AwaitResp : Phase::AwaitInit),
      on_ready_(std::move(on_ready)) {}

SecureChannel::~SecureChannel() {
  sodium_memzero(tx_key_.data(), tx_key_.size());
  sodium_memzero(rx_key_.data(), rx_key_.size());
  sodium_memzero(eph_secret_.data(), eph_secret_.size());
}

void SecureChannel::open(net::Host& host, const Identity& self, const net::Address& target, HandshakeOptions options,
                         ReadyHandler on_ready) {
  const auto timeout = options.timeout;
  host.connect(target, timeout,
               [&host, self, options = std::move(options), on_ready](net::LinkPtr link,
                                                                    std::optional<Error> err) mutable {
                 if (err) {
                   on_ready(nullptr, *err);
                   return;
                 }
                 initiate(host, self, std::move(link), std::move(options), std::move(on_ready));
               });
}

void SecureChannel::initiate(net::Host& host, const Identity& self, net::LinkPtr link, HandshakeOptions options,
                             ReadyHandler on_ready) {
  Ptr ch(new SecureChannel(host, self, std::move(link), std::move(options), Role::Initiator, std::move(on_ready)));
  ch->begin();
}

void SecureChannel::respond(net::Host& host, const Identity& self, net::LinkPtr link, HandshakeOptions options,
                            ReadyHandler on_ready) {
  Ptr ch(new SecureChannel(host, self, std::move(link), std::move(options), Role::Responder, std::move(on_ready)));
  ch->begin();
}

void SecureChannel::begin() {
  std::array<std::uint8_t, 32> seed{};
  host_.random().fill(seed);
  crypto_kx_seed_keypair(eph_public_.data(), eph_secret_.data(), seed.data());
  sodium_memzero(seed.data(), seed.size());

  std::weak_ptr<SecureChannel> weak = shared_from_this();
  timeout_ = host_.after(options_.timeout, [weak] {
    auto self = weak.lock();
    if (self && self->phase_ != Phase::Open && self->phase_ != Phase::Failed) {
      self->fail(Error(Errc::HandshakeTimeout, "no handshake completion from " + self->link_->remote_host()), false);
    }
  });
  auto self = shared_from_this();
  link_->start([self](std::string payload) { self->on_frame(std::move(payload)); },
               [self] {
                 if (self->phase_ == Phase::Open) {
                   self->closed_ = true;
                   if (self->started_) {
                     if (self->on_close_) self->on_close_();
                   } else {
                     self->remote_closed_ = true;
                   }
                 } else {
                   self->fail(Error(Errc::Refused, "connection closed during handshake"), false);
                 }
               });
  if (role_ == Role::Initiator) {
    init_eph_ = eph_public_;
    init_fp_ = self_.fingerprint();
    auto body = hello_identity();
    body["phase"] = "init";
    body["purpose"] = options_.purpose;
    body["extra"] = options_.extra;
    send_raw(Message{MessageType::Hello, self_.fingerprint(), options_.session_id, body, std::nullopt});
  }
}

nlohmann::json SecureChannel::hello_identity() const {
  return {{"name", self_.name}, {"public_key", self_.keys.public_key_hex()}, {"eph", to_hex(eph_public_)}};
}

std::array<std::uint8_t, 32> SecureChannel::transcript_hash() const {
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  auto add = [&](std::string_view s) {
    const std::uint32_t n = static_cast<std::uint32_t>(s.size());
    const std::uint8_t len[4] = {static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                                 static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
    crypto_hash_sha256_update(&st, len, 4);
    crypto_hash_sha256_update(&st, reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  };
  add(kTranscriptLabel);
  add(std::string_view(reinterpret_cast<const char*>(init_eph_.data()), init_eph_.size()));
  add(std::string_view(reinterpret_cast<const char*>(resp_eph_.data()), resp_eph_.size()));
  add(init_fp_);
  add(resp_fp_);
  add(options_.purpose);
  add(options_.session_id.value_or(""));
  std::array<std::uint8_t, 32> out{};
  crypto_hash_sha256_final(&st, out.data());
  return out;
}

void SecureChannel::send_raw(const Message& msg) {
  auto frame = encode_frame(msg);
  if (wire_tap_) wire_tap_(frame);
  link_->send(std::move(frame));
}

void SecureChannel::on_frame(std::string payload) {
  Message msg;
  try {
    msg = decode_payload(payload);
  } catch (const Error& e) {
    if (phase_ == Phase::Open) {
      ++rejected_;
    } else {
      fail(Error(Errc::MalformedMessage, e.what()), false);
    }
    return;
  }
  if (phase_ == Phase::Open) {
    handle_sealed(msg);
  } else if (phase_ != Phase::Failed) {
    try {
      handle_handshake(msg);
    } catch (const Error& e) {
      fail(e, e.code() == Errc::FingerprintMismatch || e.code() == Errc::Refused);
    }
  }
}

void SecureChannel::handle_handshake(const Message& msg) {
  if (msg.type == MessageType::Error) {
    const auto code = errc_from_string(msg.body.value("code", "Refused")).value_or(Errc::Refused);
    fail(Error(code, "remote: " + msg.body.value("message", std::string("rejected"))), false);
    return;
  }
  if (msg.type != MessageType::Hello) throw Error(Errc::MalformedMessage, "expected hello during handshake");
  const auto& b = msg.body;
  const std::string phase = b.value("phase", "");

  auto read_identity = [&] {
    const auto pk = public_key_from_hex(b.at("public_key").get<std::string>());
    if (fingerprint_of(pk) != msg.sender) {
      throw Error(Errc::FingerprintMismatch, "sender fingerprint does not match the presented key");
    }
    remote_.name = b.at("name").get<std::string>();
    remote_.fingerprint = msg.sender;
    remote_.public_key_hex = to_hex(pk);
  };
  auto check_signature = [&](std::string_view label) {
    const auto h = transcript_hash();
    std::string signed_text(label);
    signed_text.append(reinterpret_cast<const char*>(h.data()), h.size());
    const auto sig = from_hex(b.at("sig").get<std::string>());
    if (!KeyPair::verify(public_key_from_hex(remote_.public_key_hex), bytes_of(signed_text), sig)) {
      throw Error(Errc::FingerprintMismatch, "handshake signature from " + remote_.name + " does not verify");
    }
  };
  auto signature = [&](std::string_view label) {
    const auto h = transcript_hash();
    std::string signed_text(label);
    signed_text.append(reinterpret_cast<const char*>(h.data()), h.size());
    return to_hex(self_.keys.sign(bytes_of(signed_text)));
  };

  try {
    if (phase_ == Phase::AwaitInit && phase == "init") {
      read_identity();
      remote_.purpose = b.value("purpose", "");
      remote_.session_id = msg.session_id;
      remote_.extra = b.value("extra", nlohmann::json::object());
      if (options_.expected_fingerprint && *options_.expected_fingerprint != remote_.fingerprint) {
        throw Error(Errc::FingerprintMismatch, "unexpected initiator " + remote_.name);
      }
      options_.verify(remote_);
      // The responder adopts the purpose and session the initiator asked for.
      options_.purpose = remote_.purpose;
      options_.session_id = remote_.session_id;
      init_eph_ = key_from_hex(b.at("eph").get<std::string>());
      resp_eph_ = eph_public_;
      init_fp_ = remote_.fingerprint;
      resp_fp_ = self_.fingerprint();
      auto body = hello_identity();
      body["phase"] = "resp";
      body["sig"] = signature("resp");
      send_raw(Message{MessageType::Hello, self_.fingerprint(), options_.session_id, body, std::nullopt});
      phase_ = Phase::AwaitFin;
    } else if (phase_ == Phase::AwaitResp && phase == "resp") {
      read_identity();
      remote_.purpose = options_.purpose;
      remote_.session_id = options_.session_id;
      if (options_.expected_fingerprint && *options_.expected_fingerprint != remote_.fingerprint) {
        throw Error(Errc::FingerprintMismatch, remote_.name + " presented " + remote_.fingerprint.substr(0, 16) +
                                                   "…, expected " + options_.expected_fingerprint->substr(0, 16) +
                                                   "…");
      }
      options_.verify(remote_);
      resp_eph_ = key_from_hex(b.at("eph").get<std::string>());
      resp_fp_ = remote_.fingerprint;
      check_signature("resp");
      Message fin{MessageType::Hello, self_.fingerprint(), options_.session_id,
                  {{"phase", "fin"}, {"sig", signature("init")}}, std::nullopt};
      send_raw(fin);
      derive_keys(true, resp_eph_);
      succeed();
    } else if (phase_ == Phase::AwaitFin && phase == "fin") {
      if (msg.sender != remote_.fingerprint) throw Error(Errc::FingerprintMismatch, "fin from another sender");
      check_signature("init");
      derive_keys(false, init_eph_);
      succeed();
    } else {
      throw Error(Errc::MalformedMessage, "unexpected hello phase '" + phase + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedMessage, std::string("bad hello: ") + e.what());
  }
}

void SecureChannel::derive_keys(bool as_client, const std::array<std::uint8_t, 32>& remote_eph) {
  std::array<std::uint8_t, 32> rx{}, tx{};
  const int rc = as_client
                     ? crypto_kx_client_session_keys(rx.data(), tx.data(), eph_public_.data(), eph_secret_.data(),
                                                     remote_eph.data())
                     : crypto_kx_server_session_keys(rx.data(), tx.data(), eph_public_.data(), eph_secret_.data(),
                                                     remote_eph.data());
  if (rc != 0) throw Error(Errc::FingerprintMismatch, "key exchange rejected the remote ephemeral key");
  // Bind the traffic keys to the authenticated transcript.
  const auto h = transcript_hash();
  crypto_generichash(tx_key_.data(), tx_key_.size(), h.data(), h.size(), tx.data(), tx.size());
  crypto_generichash(rx_key_.data(), rx_key_.size(), h.data(), h.size(), rx.data(), rx.size());
  sodium_memzero(rx.data(), rx.size());
  sodium_memzero(tx.data(), tx.size());
  sodium_memzero(eph_secret_.data(), eph_secret_.size());
}

void SecureChannel::succeed() {
  phase_ = Phase::Open;
  timeout_.cancel();
  established_at_ = host_.now();
  auto cb = std::move(on_ready_);
  on_ready_ = nullptr;
  if (cb) cb(shared_from_this(), std::nullopt);
}

void SecureChannel::fail(const Error& err, bool tell_remote) {
  if (phase_ == Phase::Failed) return;
  phase_ = Phase::Failed;
  timeout_.cancel();
  if (tell_remote) {
    send_raw(Message{MessageType::Error,
                     self_.fingerprint(),
                     options_.session_id,
                     {{"code", std::string(to_string(err.code()))}, {"message", err.what()}},
                     std::nullopt});
  }
  link_->close();
  closed_ = true;
  auto cb = std::move(on_ready_);
  on_ready_ = nullptr;
  spdlog::debug("{}: handshake with {} failed: {}", host_.name(), link_->remote_host(), err.what());
  if (cb) cb(nullptr, err);
}

void SecureChannel::start(MessageHandler on_message, CloseHandler on_close) {
  on_message_ = std::move(on_message);
  on_close_ = std::move(on_close);
  started_ = true;
  auto queued = std::move(pending_);
  pending_.clear();
  for (auto& m : queued) {
    if (!on_message_) break;
    on_message_(std::move(m));
  }
  if (remote_closed_ && on_close_) on_close_();
}

void SecureChannel::send(Message msg) {
  if (!is_open()) return;
  msg.sender = self_.fingerprint();
  msg.seq = ++tx_seq_;
  if (host_.tracing()) {
    net::TraceEvent ev;
    ev.kind = net::TraceKind::MessageSent;
    ev.host = host_.name();
    ev.remote = remote_.name;
    ev.message = msg;
    ev.session_id = msg.session_id.value_or("");
    host_.trace(ev);
  }
  const std::string plain = msg.body.dump();
  const std::string ad = associated_data(msg);
  std::vector<std::uint8_t> ct(plain.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
  unsigned long long ct_len = 0;
  const auto nonce = nonce_for(*msg.seq);
  crypto_aead_xchacha20poly1305_ietf_encrypt(ct.data(), &ct_len, reinterpret_cast<const std::uint8_t*>(plain.data()),
                                             plain.size(), reinterpret_cast<const std::uint8_t*>(ad.data()),
                                             ad.size(), nullptr, nonce.data(), tx_key_.data());
  ct.resize(ct_len);
  msg.body = {{"box", to_base64(ct)}};
  send_raw(msg);
}

void SecureChannel::handle_sealed(const Message& msg) {
  if (!msg.seq || *msg.seq <= rx_seq_ || msg.sender != remote_.fingerprint || !msg.body.is_object() ||
      !msg.body.contains("box") || !msg.body["box"].is_string()) {
    ++rejected_;
    return;
  }
  const auto ct = from_base64(msg.body["box"].get<std::string>());
  if (!ct || ct->size() < crypto_aead_xchacha20poly1305_ietf_ABYTES) {
    ++rejected_;
    return;
  }
  const std::string ad = associated_data(msg);
  std::string plain(ct->size() - crypto_aead_xchacha20poly1305_ietf_ABYTES, '\0');
  unsigned long long plain_len = 0;
  const auto nonce = nonce_for(*msg.seq);
  if (crypto_aead_xchacha20poly1305_ietf_decrypt(reinterpret_cast<std::uint8_t*>(plain.data()), &plain_len, nullptr,
                                                 ct->data(), ct->size(),
                                                 reinterpret_cast<const std::uint8_t*>(ad.data()), ad.size(),
                                                 nonce.data(), rx_key_.data()) != 0) {
    ++rejected_;
    spdlog::debug("{}: dropped frame from {} that failed authentication", host_.name(), remote_.name);
    return;
  }
  plain.resize(plain_len);
  rx_seq_ = *msg.seq;
  Message out = msg;
  out.body = nlohmann::json::parse(plain, nullptr, false);
  if (out.body.is_discarded()) {
    ++rejected_;
    return;
  }
  if (host_.tracing()) {
    net::TraceEvent ev;
    ev.kind = net::TraceKind::MessageReceived;
    ev.host = host_.name();
    ev.remote = remote_.name;
    ev.message = out;
    ev.session_id = out.session_id.value_or("");
    host_.trace(ev);
  }
  if (closed_) return;
  if (started_ && on_message_) {
    on_message_(std::move(out));
  } else {
    pending_.push_back(std::move(out));
  }
}

void SecureChannel::close() {
  if (closed_) return;
  closed_ = true;
  link_->close();
}

bool SecureChannel::is_open() const { return phase_ == Phase::Open && !closed_ && link_->is_open(); }

void SecureChannel::inject_frame(const std::string& frame) {
  if (frame.size() < kFrameHeaderBytes) return;
  on_frame(frame.substr(kFrameHeaderBytes));
}

}  // namespace smcgw

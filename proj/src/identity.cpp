#include "smcgw/identity.hpp"

#include <sodium.h>

#include <chrono>
#include <fstream>
#include <stdexcept>

#include "smcgw/error.hpp"

namespace smcgw {
namespace {

struct SodiumInit {
  SodiumInit() {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  }
};

void ensure_sodium() { static SodiumInit once; }

}  // namespace

std::string to_hex(std::span<const std::uint8_t> bytes) {
  std::string out(bytes.size() * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), bytes.data(), bytes.size());
  out.pop_back();
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  std::vector<std::uint8_t> out(hex.size() / 2);
  std::size_t len = 0;
  const char* end = nullptr;
  if (hex.size() % 2 != 0 ||
      sodium_hex2bin(out.data(), out.size(), hex.data(), hex.size(), nullptr, &len, &end) != 0 ||
      end != hex.data() + hex.size()) {
    throw Error(Errc::MalformedMessage, "invalid hex string");
  }
  out.resize(len);
  return out;
}

std::string fingerprint_of(const PublicKey& key) {
  ensure_sodium();
  std::array<std::uint8_t, crypto_hash_sha256_BYTES> digest{};
  crypto_hash_sha256(digest.data(), key.data(), key.size());
  return to_hex(digest);
}

PublicKey public_key_from_hex(std::string_view hex) {
  const auto bytes = from_hex(hex);
  if (bytes.size() != 32) throw Error(Errc::MalformedMessage, "public key must be 32 bytes");
  PublicKey key{};
  std::copy(bytes.begin(), bytes.end(), key.begin());
  return key;
}

KeyPair KeyPair::from_seed(std::span<const std::uint8_t, 32> seed) {
  ensure_sodium();
  KeyPair kp;
  std::copy(seed.begin(), seed.end(), kp.seed_.begin());
  crypto_sign_seed_keypair(kp.public_key_.data(), kp.secret_key_.data(), kp.seed_.data());
  return kp;
}

KeyPair KeyPair::generate() {
  ensure_sodium();
  std::array<std::uint8_t, 32> seed{};
  randombytes_buf(seed.data(), seed.size());
  return from_seed(seed);
}

KeyPair KeyPair::from_random(RandomSource& rng) {
  std::array<std::uint8_t, 32> seed{};
  rng.fill(seed);
  return from_seed(seed);
}

std::array<std::uint8_t, 64> KeyPair::sign(std::span<const std::uint8_t> message) const {
  std::array<std::uint8_t, 64> sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_key_.data());
  return sig;
}

bool KeyPair::verify(const PublicKey& key, std::span<const std::uint8_t> message,
                     std::span<const std::uint8_t> signature) {
  ensure_sodium();
  if (signature.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), key.data()) == 0;
}

void KeyPair::save(const std::filesystem::path& path) const {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw Error(Errc::ConfigError, "cannot write key file " + path.string());
  out << nlohmann::json{{"seed", to_hex(seed_)}}.dump(2) << '\n';
}

KeyPair KeyPair::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read key file " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("seed") || !j["seed"].is_string()) {
    throw Error(Errc::ConfigError, "malformed key file " + path.string());
  }
  const auto seed = from_hex(j["seed"].get<std::string>());
  if (seed.size() != 32) throw Error(Errc::ConfigError, "key seed must be 32 bytes");
  std::array<std::uint8_t, 32> s{};
  std::copy(seed.begin(), seed.end(), s.begin());
  return from_seed(s);
}

KeyPair KeyPair::load_or_create(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) return load(path);
  auto kp = generate();
  kp.save(path);
  return kp;
}

TrustStore::TrustStore(std::filesystem::path path) : path_(std::move(path)) {}

TrustStore::PinResult TrustStore::pin(const std::string& name, const std::string& fingerprint,
                                      const std::string& public_key_hex, std::int64_t now_ms) {
  if (fingerprint_of(public_key_from_hex(public_key_hex)) != fingerprint) {
    throw Error(Errc::FingerprintMismatch, "public key of " + name + " does not match its fingerprint");
  }
  if (auto existing = fingerprint_for(name); existing && *existing != fingerprint) {
    throw Error(Errc::FingerprintMismatch, name + " is pinned to " + existing->substr(0, 16) + "…, presented " +
                                               fingerprint.substr(0, 16) + "…");
  }
  if (auto it = entries_.find(fingerprint); it != entries_.end()) {
    if (it->second.name != name) {
      throw Error(Errc::FingerprintMismatch, "fingerprint already pinned for " + it->second.name);
    }
    return PinResult::AlreadyPinned;
  }
  entries_.emplace(fingerprint, TrustEntry{name, public_key_hex, now_ms});
  return PinResult::Pinned;
}

std::optional<TrustEntry> TrustStore::find(const std::string& fingerprint) const {
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> TrustStore::fingerprint_for(const std::string& name) const {
  for (const auto& [fp, entry] : entries_) {
    if (entry.name == name) return fp;
  }
  return std::nullopt;
}

nlohmann::json TrustStore::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [fp, e] : entries_) {
    j[fp] = {{"public_key", e.public_key_hex}, {"first_seen", e.first_seen_ms}, {"name", e.name}};
  }
  return j;
}

TrustStore TrustStore::from_json(const nlohmann::json& j) {
  TrustStore store;
  if (!j.is_object()) throw Error(Errc::ConfigError, "trust store must be a JSON object");
  for (const auto& [fp, e] : j.items()) {
    store.entries_.emplace(fp, TrustEntry{e.value("name", std::string()), e.at("public_key").get<std::string>(),
                                          e.value("first_seen", std::int64_t{0})});
  }
  return store;
}

void TrustStore::save() const {
  if (!path_) return;
  const auto tmp = path_->string() + ".tmp";
  std::error_code ec;
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path(), ec);
  {
    std::ofstream out(tmp);
    if (!out) throw Error(Errc::ConfigError, "cannot write trust store " + tmp);
    out << to_json().dump(2) << '\n';
  }
  std::filesystem::rename(tmp, *path_);
}

TrustStore TrustStore::load_or_empty(const std::filesystem::path& path) {
  TrustStore store;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::ConfigError, "malformed trust store " + path.string());
    store = from_json(j);
  }
  store.path_ = path;
  return store;
}

std::int64_t unix_time_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace smcgw

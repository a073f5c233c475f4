#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/random.hpp"

namespace smcgw {

using PublicKey = std::array<std::uint8_t, 32>;

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);

/// Hex SHA-256 of a public key. This is the identity compared everywhere.
std::string fingerprint_of(const PublicKey& key);

/// Long-term Ed25519 signing key.
class KeyPair {
 public:
  static KeyPair generate();
  static KeyPair from_seed(std::span<const std::uint8_t, 32> seed);
  static KeyPair from_random(RandomSource& rng);

  const PublicKey& public_key() const { return public_key_; }
  std::string fingerprint() const { return fingerprint_of(public_key_); }
  std::string public_key_hex() const { return to_hex(public_key_); }

  std::array<std::uint8_t, 64> sign(std::span<const std::uint8_t> message) const;
  static bool verify(const PublicKey& key, std::span<const std::uint8_t> message,
                     std::span<const std::uint8_t> signature);

  /// Key file format: {"seed": "<hex>"}.
  void save(const std::filesystem::path& path) const;
  static KeyPair load(const std::filesystem::path& path);
  static KeyPair load_or_create(const std::filesystem::path& path);

 private:
  std::array<std::uint8_t, 32> seed_{};
  PublicKey public_key_{};
  std::array<std::uint8_t, 64> secret_key_{};
};

PublicKey public_key_from_hex(std::string_view hex);

/// A node's name plus its key. The name is stable across key changes, which
/// is what makes a changed key detectable.
struct Identity {
  std::string name;
  KeyPair keys;

  std::string fingerprint() const { return keys.fingerprint(); }
};

struct TrustEntry {
  std::string name;
  std::string public_key_hex;
  std::int64_t first_seen_ms = 0;

  friend bool operator==(const TrustEntry&, const TrustEntry&) = default;
};

/// Pinned fingerprints (trust on first use). Persisted as a JSON object
/// mapping fingerprint -> {"public_key", "first_seen", "name"}.
class TrustStore {
 public:
  enum class PinResult { Pinned, AlreadyPinned };

  TrustStore() = default;
  explicit TrustStore(std::filesystem::path path);

  /// Pins `fingerprint` for `name`. Throws FingerprintMismatch when the name
  /// is already pinned to another fingerprint or the key does not hash to
  /// the fingerprint.
  PinResult pin(const std::string& name, const std::string& fingerprint, const std::string& public_key_hex,
                std::int64_t now_ms);

  bool contains(const std::string& fingerprint) const { return entries_.count(fingerprint) != 0; }
  std::optional<TrustEntry> find(const std::string& fingerprint) const;
  std::optional<std::string> fingerprint_for(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, TrustEntry>& entries() const { return entries_; }

  nlohmann::json to_json() const;
  static TrustStore from_json(const nlohmann::json& j);

  /// Writes to the backing file, if any.
  void save() const;
  static TrustStore load_or_empty(const std::filesystem::path& path);

 private:
  std::optional<std::filesystem::path> path_;
  std::map<std::string, TrustEntry> entries_;
};

std::int64_t unix_time_ms();

}  // namespace smcgw

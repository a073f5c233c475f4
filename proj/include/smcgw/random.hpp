#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace smcgw {

/// Injectable source of 64-bit randomness. Sharing, key generation and
/// handshake nonces all draw from one of these so runs can be replayed.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual std::uint64_t next_u64() = 0;

  void fill(std::span<std::uint8_t> out);
};

/// Deterministic stream (mt19937_64, fully specified by the standard).
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next_u64() override { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Operating-system randomness via libsodium.
class SystemRandom final : public RandomSource {
 public:
  std::uint64_t next_u64() override;
};

/// Mixes two values into a well-distributed 64-bit seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_seed(std::uint64_t base, std::string_view label);

}  // namespace smcgw

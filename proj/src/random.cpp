#include "smcgw/random.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <string_view>

namespace smcgw {

void RandomSource::fill(std::span<std::uint8_t> out) {
  std::size_t pos = 0;
  while (pos < out.size()) {
    const std::uint64_t word = next_u64();
    const std::size_t take = std::min<std::size_t>(8, out.size() - pos);
    std::memcpy(out.data() + pos, &word, take);
    pos += take;
  }
}

std::uint64_t SystemRandom::next_u64() {
  std::uint64_t v = 0;
  randombytes_buf(&v, sizeof(v));
  return v;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_seed(std::uint64_t base, std::string_view label) {
  // FNV-1a over the label, then mixed with the base seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix_seed(base, h);
}

}  // namespace smcgw

#pragma once

#include <cstdint>
#include <vector>

#include "smcgw/random.hpp"

namespace smcgw::testing {

/// Replays a fixed list of words, cycling when exhausted.
class FixedRandom final : public RandomSource {
 public:
  explicit FixedRandom(std::vector<std::uint64_t> words) : words_(std::move(words)) {}
  std::uint64_t next_u64() override {
    if (words_.empty()) return 0;
    const auto w = words_[pos_ % words_.size()];
    ++pos_;
    return w;
  }

 private:
  std::vector<std::uint64_t> words_;
  std::size_t pos_ = 0;
};

}  // namespace smcgw::testing

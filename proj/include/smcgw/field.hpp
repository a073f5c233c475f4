#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smcgw/error.hpp"
#include "smcgw/random.hpp"

namespace smcgw {

/// Element of the prime field GF(Modulus). The stored value is always the
/// canonical representative in [0, Modulus).
template <std::uint64_t Modulus>
class PrimeField {
  static_assert(Modulus > 2 && Modulus < (1ULL << 63));

 public:
  static constexpr std::uint64_t kModulus = Modulus;

  constexpr PrimeField() = default;
  constexpr explicit PrimeField(std::uint64_t v) : value_(v % Modulus) {}

  static constexpr PrimeField zero() { return PrimeField(); }
  static constexpr PrimeField one() { return PrimeField(1); }

  constexpr std::uint64_t value() const { return value_; }

  constexpr PrimeField& operator+=(PrimeField o) {
    std::uint64_t s = value_ + o.value_;
    if (s >= Modulus) s -= Modulus;
    value_ = s;
    return *this;
  }
  constexpr PrimeField& operator-=(PrimeField o) {
    value_ = value_ >= o.value_ ? value_ - o.value_ : value_ + Modulus - o.value_;
    return *this;
  }
  constexpr PrimeField& operator*=(PrimeField o) {
    const unsigned __int128 prod = static_cast<unsigned __int128>(value_) * o.value_;
    value_ = static_cast<std::uint64_t>(prod % Modulus);
    return *this;
  }

  friend constexpr PrimeField operator+(PrimeField a, PrimeField b) { return a += b; }
  friend constexpr PrimeField operator-(PrimeField a, PrimeField b) { return a -= b; }
  friend constexpr PrimeField operator*(PrimeField a, PrimeField b) { return a *= b; }
  friend constexpr PrimeField operator-(PrimeField a) { return PrimeField() - a; }
  friend constexpr bool operator==(PrimeField, PrimeField) = default;
  friend constexpr auto operator<=>(PrimeField, PrimeField) = default;

  constexpr PrimeField pow(std::uint64_t e) const {
    PrimeField base = *this;
    PrimeField acc = one();
    while (e != 0) {
      if (e & 1U) acc *= base;
      base *= base;
      e >>= 1U;
    }
    return acc;
  }

  /// Multiplicative inverse by Fermat. Inverse of zero is reported as
  /// InvalidShareIndex since the only caller-visible zero divisor is a
  /// repeated evaluation point.
  constexpr PrimeField inverse() const {
    if (value_ == 0) throw Error(Errc::InvalidShareIndex, "inverse of zero");
    return pow(Modulus - 2);
  }

  friend std::ostream& operator<<(std::ostream& os, PrimeField f) { return os << f.value_; }

 private:
  std::uint64_t value_ = 0;
};

inline constexpr std::uint64_t kMersenne61 = (1ULL << 61) - 1;

/// The production field, p = 2^61 - 1.
using FieldElement = PrimeField<kMersenne61>;

/// Uniform field element by rejection sampling on the smallest covering
/// power-of-two range.
template <class F>
F uniform_element(RandomSource& rng) {
  constexpr std::uint64_t mask = std::bit_ceil(F::kModulus) - 1;
  for (;;) {
    const std::uint64_t candidate = rng.next_u64() & mask;
    if (candidate < F::kModulus) return F(candidate);
  }
}

/// Evaluation of a sharing polynomial at a nonzero point.
template <class F>
struct BasicShare {
  std::uint64_t index = 0;
  F value;

  friend bool operator==(const BasicShare&, const BasicShare&) = default;
};

using Share = BasicShare<FieldElement>;

namespace detail {

template <class F>
void check_distinct_indices(std::span<const BasicShare<F>> shares) {
  std::set<std::uint64_t> seen;
  for (const auto& s : shares) {
    if (s.index == 0 || s.index >= F::kModulus) {
      throw Error(Errc::InvalidShareIndex, "share index " + std::to_string(s.index));
    }
    if (!seen.insert(s.index).second) {
      throw Error(Errc::DuplicateIndex, "index " + std::to_string(s.index) + " repeated");
    }
  }
}

}  // namespace detail

/// Evaluate the polynomial with the given coefficients (constant term first).
template <class F>
F evaluate_polynomial(std::span<const F> coefficients, F x) {
  F acc;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * x + *it;
  return acc;
}

/// Split `secret` into n shares of a random degree-t polynomial q with
/// q(0) = secret, evaluated at indices 1..n.
template <class F>
std::vector<BasicShare<F>> share_secret(F secret, std::size_t n, std::size_t t, RandomSource& rng) {
  if (t < 1 || t >= n) {
    throw Error(Errc::InvalidThreshold,
                "need 1 <= t < n, got t=" + std::to_string(t) + " n=" + std::to_string(n));
  }
  if (n >= F::kModulus) throw Error(Errc::InvalidThreshold, "n must be below the modulus");

  std::vector<F> coefficients;
  coefficients.reserve(t + 1);
  coefficients.push_back(secret);
  for (std::size_t i = 0; i < t; ++i) coefficients.push_back(uniform_element<F>(rng));

  std::vector<BasicShare<F>> shares;
  shares.reserve(n);
  for (std::uint64_t i = 1; i <= n; ++i) {
    shares.push_back({i, evaluate_polynomial<F>(coefficients, F(i))});
  }
  return shares;
}

/// Lagrange interpolation at zero over the first t+1 shares. All provided
/// shares must carry distinct nonzero indices.
template <class F>
F reconstruct(std::span<const BasicShare<F>> shares, std::size_t t) {
  if (shares.size() < t + 1) {
    throw Error(Errc::InsufficientShares, "have " + std::to_string(shares.size()) + ", need " +
                                              std::to_string(t + 1));
  }
  detail::check_distinct_indices(shares);

  const auto used = shares.first(t + 1);
  F secret;
  for (std::size_t j = 0; j < used.size(); ++j) {
    const F xj(used[j].index);
    F num = F::one();
    F den = F::one();
    for (std::size_t m = 0; m < used.size(); ++m) {
      if (m == j) continue;
      const F xm(used[m].index);
      num *= xm;
      den *= xm - xj;
    }
    secret += used[j].value * num * den.inverse();
  }
  return secret;
}

template <class F>
F reconstruct(const std::vector<BasicShare<F>>& shares, std::size_t t) {
  return reconstruct<F>(std::span<const BasicShare<F>>(shares), t);
}

/// Index-wise sum of two sharings over the same index set. Output follows
/// the order of `a`.
template <class F>
std::vector<BasicShare<F>> add_share_vectors(std::span<const BasicShare<F>> a,
                                             std::span<const BasicShare<F>> b) {
  if (a.size() != b.size()) throw Error(Errc::IndexMismatch, "share vectors differ in length");
  std::vector<BasicShare<F>> out;
  out.reserve(a.size());
  for (const auto& sa : a) {
    auto it = std::find_if(b.begin(), b.end(), [&](const auto& sb) { return sb.index == sa.index; });
    if (it == b.end()) {
      throw Error(Errc::IndexMismatch, "index " + std::to_string(sa.index) + " missing");
    }
    out.push_back({sa.index, sa.value + it->value});
  }
  detail::check_distinct_indices<F>(out);
  return out;
}

template <class F>
std::vector<BasicShare<F>> add_share_vectors(const std::vector<BasicShare<F>>& a,
                                             const std::vector<BasicShare<F>>& b) {
  return add_share_vectors<F>(std::span<const BasicShare<F>>(a), std::span<const BasicShare<F>>(b));
}

inline FieldElement field_add(FieldElement a, FieldElement b) { return a + b; }

// Wire form: {"index": <integer>, "value": "<decimal string>"}
nlohmann::json share_to_json(const Share& share);
Share share_from_json(const nlohmann::json& j);

}  // namespace smcgw

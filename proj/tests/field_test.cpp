#include "smcgw/field.hpp"

#include <gtest/gtest.h>

#include <map>
#include <numeric>

#include "test_support.hpp"

namespace smcgw {
namespace {

using testing::FixedRandom;
using Small = PrimeField<101>;

// Oracle arithmetic, written against raw integers so it shares nothing with
// PrimeField.
std::uint64_t oracle_mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t p) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % p);
}
std::uint64_t oracle_powmod(std::uint64_t a, std::uint64_t e, std::uint64_t p) {
  std::uint64_t r = 1 % p;
  for (; e; e >>= 1, a = oracle_mulmod(a, a, p)) {
    if (e & 1) r = oracle_mulmod(r, a, p);
  }
  return r;
}

// Solves the Vandermonde system for the polynomial coefficients through the
// given points by Gaussian elimination mod p; returns the constant term.
std::uint64_t oracle_interpolate_at_zero(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& pts,
                                         std::uint64_t p) {
  const std::size_t k = pts.size();
  std::vector<std::vector<std::uint64_t>> m(k, std::vector<std::uint64_t>(k + 1));
  for (std::size_t r = 0; r < k; ++r) {
    std::uint64_t x = 1;
    for (std::size_t c = 0; c < k; ++c) {
      m[r][c] = x;
      x = oracle_mulmod(x, pts[r].first % p, p);
    }
    m[r][k] = pts[r].second % p;
  }
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    while (m[piv][col] == 0) ++piv;
    std::swap(m[piv], m[col]);
    const auto inv = oracle_powmod(m[col][col], p - 2, p);
    for (auto& v : m[col]) v = oracle_mulmod(v, inv, p);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == col || m[r][col] == 0) continue;
      const auto f = m[r][col];
      for (std::size_t c = 0; c <= k; ++c) {
        m[r][c] = (m[r][c] + p - oracle_mulmod(f, m[col][c], p)) % p;
      }
    }
  }
  return m[0][k];
}

TEST(FieldTest, AddExamples) {
  const std::uint64_t p = FieldElement::kModulus;
  EXPECT_EQ(field_add(FieldElement(0), FieldElement(0)).value(), 0u);
  EXPECT_EQ(field_add(FieldElement(p - 1), FieldElement(1)).value(), 0u);
  EXPECT_EQ(field_add(FieldElement(123456789), FieldElement(987654321)).value(), 1111111110u);
}

TEST(FieldTest, ValuesAreCanonical) {
  const std::uint64_t p = FieldElement::kModulus;
  EXPECT_EQ(FieldElement(p).value(), 0u);
  EXPECT_EQ(FieldElement(~0ULL).value(), (~0ULL) % p);
  EXPECT_EQ((FieldElement(0) - FieldElement(1)).value(), p - 1);
}

TEST(FieldTest, AxiomsOnRandomTriples) {
  SeededRandom rng(7);
  const std::uint64_t p = FieldElement::kModulus;
  for (int i = 0; i < 1000; ++i) {
    const auto a = uniform_element<FieldElement>(rng);
    const auto b = uniform_element<FieldElement>(rng);
    const auto c = uniform_element<FieldElement>(rng);
    EXPECT_EQ((a + b) + c, a + (b + c));
    EXPECT_EQ(a + b, b + a);
    EXPECT_EQ((a * b) * c, a * (b * c));
    EXPECT_EQ(a * b, b * a);
    EXPECT_EQ(a * (b + c), a * b + a * c);
    EXPECT_EQ((a * b).value(), oracle_mulmod(a.value(), b.value(), p));
    if (a != FieldElement::zero()) EXPECT_EQ(a.inverse() * a, FieldElement::one());
  }
  EXPECT_THROW((void)FieldElement(0).inverse(), Error);
}

TEST(ShareSecretTest, ZeroPolynomial) {
  FixedRandom zeros({0});
  const auto shares = share_secret(FieldElement(0), 3, 1, zeros);
  ASSERT_EQ(shares.size(), 3u);
  for (std::uint64_t i = 1; i <= 3; ++i) {
    EXPECT_EQ(shares[i - 1].index, i);
    EXPECT_EQ(shares[i - 1].value.value(), 0u);
  }
}

TEST(ShareSecretTest, LinearPolynomialByHand) {
  FixedRandom ones({1});
  const auto shares = share_secret(FieldElement(7), 4, 1, ones);
  const std::vector<std::uint64_t> expected{8, 9, 10, 11};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(shares[i].index, i + 1);
    EXPECT_EQ(shares[i].value.value(), expected[i]);
  }
}

TEST(ShareSecretTest, MatchesDirectPolynomialEvaluation) {
  // Coefficients are known because the source is fixed; evaluate q by hand.
  const std::vector<std::uint64_t> coeffs{1234567, 89};
  FixedRandom rng(coeffs);
  const auto shares = share_secret(FieldElement(42), 5, 2, rng);
  const std::uint64_t p = FieldElement::kModulus;
  for (const auto& s : shares) {
    const std::uint64_t x = s.index;
    const std::uint64_t expected =
        (42 + oracle_mulmod(coeffs[0], x, p) + oracle_mulmod(coeffs[1], oracle_mulmod(x, x, p), p)) % p;
    EXPECT_EQ(s.value.value(), expected);
  }
}

TEST(ShareSecretTest, RejectsBadThreshold) {
  SeededRandom rng(1);
  for (auto [n, t] : std::vector<std::pair<int, int>>{{3, 0}, {3, 3}, {3, 4}, {1, 1}}) {
    try {
      (void)share_secret(FieldElement(1), n, t, rng);
      FAIL() << "n=" << n << " t=" << t;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidThreshold);
    }
  }
}

TEST(ReconstructTest, Examples) {
  const std::vector<Share> zero{{1, FieldElement(0)}, {2, FieldElement(0)}};
  EXPECT_EQ(reconstruct(zero, 1).value(), 0u);

  const std::vector<Share> linear{{1, FieldElement(8)}, {2, FieldElement(9)}};
  EXPECT_EQ(reconstruct(linear, 1).value(), 7u);

  SeededRandom rng(99);
  const auto shares = share_secret(FieldElement(42), 5, 2, rng);
  const std::vector<Share> subset{shares[0], shares[2], shares[4]};
  EXPECT_EQ(reconstruct(subset, 2).value(), 42u);
}

TEST(ReconstructTest, AgreesWithGaussianEliminationOracle) {
  SeededRandom rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto secret = uniform_element<FieldElement>(rng);
    const auto shares = share_secret(secret, 7, 3, rng);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pts;
    for (std::size_t i = 3; i < 7; ++i) pts.emplace_back(shares[i].index, shares[i].value.value());
    EXPECT_EQ(oracle_interpolate_at_zero(pts, FieldElement::kModulus), secret.value());
    const std::vector<Share> tail(shares.begin() + 3, shares.end());
    EXPECT_EQ(reconstruct(tail, 3), secret);
  }
}

TEST(ReconstructTest, Errors) {
  const std::vector<Share> one{{1, FieldElement(3)}};
  try {
    (void)reconstruct(one, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientShares);
  }
  const std::vector<Share> dup{{2, FieldElement(3)}, {2, FieldElement(4)}};
  try {
    (void)reconstruct(dup, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DuplicateIndex);
  }
  const std::vector<Share> zero_index{{0, FieldElement(3)}, {2, FieldElement(4)}};
  try {
    (void)reconstruct(zero_index, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidShareIndex);
  }
}

// Every (t+1)-subset of every sharing reconstructs the secret.
TEST(ReconstructTest, RoundTripAllSubsets) {
  SeededRandom rng(2024);
  for (std::size_t n = 3; n <= 12; ++n) {
    for (std::size_t t = 1; t < n; ++t) {
      for (int trial = 0; trial < 3; ++trial) {
        const auto secret = uniform_element<FieldElement>(rng);
        const auto shares = share_secret(secret, n, t, rng);
        for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
          if (static_cast<std::size_t>(__builtin_popcount(mask)) != t + 1) continue;
          std::vector<Share> subset;
          for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) subset.push_back(shares[i]);
          }
          ASSERT_EQ(reconstruct(subset, t), secret) << "n=" << n << " t=" << t;
        }
      }
    }
  }
}

// Over GF(101): for every secret, the t shares at any fixed index set are
// uniformly distributed over all coefficient choices (each tuple exactly once).
TEST(PerfectHidingTest, ShareTuplesUniformOverSmallField) {
  for (std::size_t t : {1u, 2u}) {
    const std::size_t n = t + 2;
    std::size_t coeff_count = 1;
    for (std::size_t i = 0; i < t; ++i) coeff_count *= 101;
    for (std::uint64_t secret = 0; secret < 101; secret += (t == 1 ? 1 : 10)) {
      std::map<std::vector<std::uint64_t>, int> histogram;
      for (std::size_t c = 0; c < coeff_count; ++c) {
        std::vector<std::uint64_t> coeffs;
        for (std::size_t i = 0, rest = c; i < t; ++i, rest /= 101) coeffs.push_back(rest % 101);
        FixedRandom rng(coeffs);
        const auto shares = share_secret(Small(secret), n, t, rng);
        std::vector<std::uint64_t> observed;
        for (std::size_t i = 0; i < t; ++i) observed.push_back(shares[n - 1 - i].value.value());
        ++histogram[observed];
      }
      ASSERT_EQ(histogram.size(), coeff_count) << "t=" << t << " secret=" << secret;
      for (const auto& [tuple, count] : histogram) ASSERT_EQ(count, 1);
    }
  }
}

// Any t observed shares are consistent with every candidate secret: the
// interpolation system through (0, s') and the t points has a solution whose
// evaluation reproduces the observed shares.
TEST(PerfectHidingTest, InterpolationSystemSolvableForEveryCandidate) {
  const std::uint64_t p = 101;
  const std::vector<std::uint64_t> indices{2, 5};
  for (std::uint64_t v1 = 0; v1 < p; v1 += 4) {
    for (std::uint64_t v2 = 0; v2 < p; v2 += 7) {
      for (std::uint64_t candidate = 0; candidate < p; ++candidate) {
        // Share the candidate with the coefficients forced to hit (2,v1),(5,v2):
        // solve q(x) = candidate + a x + b x^2 by elimination, then re-share.
        const std::vector<std::pair<std::uint64_t, std::uint64_t>> pts{
            {2, (v1 + p - candidate) % p}, {5, (v2 + p - candidate) % p}};
        // q(x) - candidate = x (a + b x): divide by x and interpolate a line.
        std::vector<std::pair<std::uint64_t, std::uint64_t>> line;
        for (auto [x, y] : pts) line.emplace_back(x, oracle_mulmod(y, oracle_powmod(x, p - 2, p), p));
        const std::uint64_t a = oracle_interpolate_at_zero(line, p);
        const std::uint64_t b =
            oracle_mulmod((line[0].second + p - a) % p, oracle_powmod(line[0].first, p - 2, p), p);
        FixedRandom rng({a, b});
        const auto shares = share_secret(Small(candidate), 5, 2, rng);
        ASSERT_EQ(shares[indices[0] - 1].value.value(), v1);
        ASSERT_EQ(shares[indices[1] - 1].value.value(), v2);
        ASSERT_EQ(reconstruct(shares, 2).value(), candidate);
      }
    }
  }
}

TEST(AddShareVectorsTest, Examples) {
  SeededRandom rng(11);
  const auto s0 = share_secret(FieldElement(0), 5, 2, rng);
  const auto s = share_secret(FieldElement(777), 5, 2, rng);
  EXPECT_EQ(reconstruct(add_share_vectors(s0, s), 2).value(), 777u);

  const auto a = share_secret(FieldElement(20), 5, 2, rng);
  const auto b = share_secret(FieldElement(22), 5, 2, rng);
  EXPECT_EQ(reconstruct(add_share_vectors(a, b), 2).value(), 42u);

  const auto pm1 = share_secret(FieldElement(FieldElement::kModulus - 1), 5, 2, rng);
  const auto one = share_secret(FieldElement(1), 5, 2, rng);
  EXPECT_EQ(reconstruct(add_share_vectors(pm1, one), 2).value(), 0u);
}

TEST(AddShareVectorsTest, HomomorphismOnRandomPairs) {
  SeededRandom rng(3);
  const std::uint64_t p = FieldElement::kModulus;
  for (int i = 0; i < 1000; ++i) {
    const auto a = uniform_element<FieldElement>(rng);
    const auto b = uniform_element<FieldElement>(rng);
    const auto sum = reconstruct(add_share_vectors(share_secret(a, 6, 2, rng), share_secret(b, 6, 2, rng)), 2);
    const auto expected = static_cast<std::uint64_t>((static_cast<unsigned __int128>(a.value()) + b.value()) % p);
    ASSERT_EQ(sum.value(), expected);
  }
}

TEST(AddShareVectorsTest, IndexMismatch) {
  const std::vector<Share> a{{1, FieldElement(1)}, {2, FieldElement(2)}};
  const std::vector<Share> b{{1, FieldElement(1)}, {3, FieldElement(2)}};
  try {
    (void)add_share_vectors(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IndexMismatch);
  }
  const std::vector<Share> shorter{{1, FieldElement(1)}};
  EXPECT_THROW((void)add_share_vectors(a, shorter), Error);
}

TEST(ShareJsonTest, WireFormat) {
  const Share s{3, FieldElement(FieldElement::kModulus - 2)};
  const auto j = share_to_json(s);
  EXPECT_EQ(j.dump(), R"({"index":3,"value":"2305843009213693949"})");
  EXPECT_EQ(share_from_json(j), s);
  EXPECT_THROW((void)share_from_json(nlohmann::json{{"index", 1}, {"value", "2305843009213693951"}}), Error);
  EXPECT_THROW((void)share_from_json(nlohmann::json{{"index", 0}, {"value", "1"}}), Error);
  EXPECT_THROW((void)share_from_json(nlohmann::json{{"index", 1}, {"value", 5}}), Error);
}

}  // namespace
}  // namespace smcgw
